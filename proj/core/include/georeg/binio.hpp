#pragma once

// Little-endian byte helpers shared by the GRCK and GRDF containers.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <type_traits>
#include <vector>

#include "georeg/errors.hpp"

namespace georeg::binio {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <class U>
  void le(U v) {
    static_assert(std::is_integral_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(std::uint8_t((std::uint64_t(v) >> (8 * i)) & 0xff));
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  const std::vector<std::uint8_t>& data() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

  template <class U>
  U le(const char* what) {
    need(sizeof(U), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= std::uint64_t(buf_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return U(v);
  }
  float f32(const char* what) { return std::bit_cast<float>(le<std::uint32_t>(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(&buf_[pos_]), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n, const char* what) const {
    if (pos_ + n > buf_.size()) throw ParseError(what, pos_);
  }
  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& data);

}  // namespace georeg::binio
