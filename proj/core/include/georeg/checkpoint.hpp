#pragma once

// GRCK checkpoint container: magic "GRCK", version u32, count u32, then per
// entry: name length u16, name bytes, rank u8, extents u32 each, raw f32
// payload. All integers little-endian.

#include <cstdint>
#include <string>
#include <vector>

#include "georeg/tensor.hpp"

namespace georeg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  ad::Shape shape;
  std::vector<float> data;

  bool operator==(const NamedArray&) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedArray>& entries);
std::vector<NamedArray> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::string& path, const std::vector<NamedArray>& entries);
std::vector<NamedArray> read_checkpoint(const std::string& path);

}  // namespace georeg
