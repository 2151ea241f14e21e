#pragma once

// GRDF displacement-field container: magic "GRDF", version u32, H u32, W u32,
// then H*W*2 f32 row-major with u_y before u_x. Little-endian throughout.

#include <cstdint>
#include <string>
#include <vector>

#include "georeg/image.hpp"

namespace georeg {

inline constexpr std::uint32_t kFieldVersion = 1;

std::vector<std::uint8_t> encode_field(const DeformationField& field);
DeformationField decode_field(const std::vector<std::uint8_t>& bytes);

void write_field(const std::string& path, const DeformationField& field);
DeformationField read_field(const std::string& path);

}  // namespace georeg
