#pragma once

// Binary PGM (P5) and PPM (P6) output, maxval 255.

#include <cstdint>
#include <string>
#include <vector>

#include "georeg/image.hpp"

namespace georeg {

std::vector<std::uint8_t> encode_pgm(const ImageGrid& image);
ImageGrid decode_pgm(const std::vector<std::uint8_t>& bytes);

// Grayscale background with the deformed grid phi(x) = x + u(x) drawn in red:
// lines run along every `stride`-th row and column of the undeformed grid.
std::vector<std::uint8_t> encode_overlay_ppm(const ImageGrid& image, const DeformationField& field,
                                             std::size_t stride);

void write_image_pgm(const std::string& path, const ImageGrid& image);
ImageGrid read_image_pgm(const std::string& path);
void write_overlay_ppm(const std::string& path, const ImageGrid& image, const DeformationField& field,
                       std::size_t stride);

}  // namespace georeg
