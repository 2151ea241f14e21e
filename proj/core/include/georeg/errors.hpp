#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace georeg {

// Malformed or missing input data. The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary container parse failure at a known byte offset.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : DataError(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace georeg
