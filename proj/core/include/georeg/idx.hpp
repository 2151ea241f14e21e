#pragma once

// Reader for the big-endian IDX container used by the MNIST distribution.

#include <cstdint>
#include <string>
#include <vector>

#include "georeg/image.hpp"

namespace georeg {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxHeader {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::size_t payload_offset = 0;
};

// Parses magic and dimension words; throws ParseError on short input.
IdxHeader parse_idx_header(const std::vector<std::uint8_t>& bytes);

std::vector<ImageGrid> decode_idx_images(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> decode_idx_labels(const std::vector<std::uint8_t>& bytes);

struct LabeledImages {
  std::vector<ImageGrid> images;
  std::vector<std::uint8_t> labels;
};

// Images normalized to [0,1]; an empty labels_path yields no labels.
LabeledImages load_idx(const std::string& images_path, const std::string& labels_path);

}  // namespace georeg
