#include "georeg/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace georeg {

ImageGrid ImageGrid::zeros(std::size_t h, std::size_t w) { return filled(h, w, 0.0f); }

ImageGrid ImageGrid::filled(std::size_t h, std::size_t w, float v) {
  ImageGrid g;
  g.height = h;
  g.width = w;
  g.pixels.assign(h * w, v);
  return g;
}

DeformationField DeformationField::zeros(std::size_t h, std::size_t w) {
  DeformationField f;
  f.height = h;
  f.width = w;
  f.data.assign(h * w * 2, 0.0f);
  return f;
}

void validate(const ImageGrid& image) {
  if (image.height == 0 || image.width == 0) throw std::invalid_argument("image has empty extent");
  if (image.pixels.size() != image.height * image.width) {
    throw std::invalid_argument("image pixel count " + std::to_string(image.pixels.size()) +
                                " does not match " + std::to_string(image.height) + "x" +
                                std::to_string(image.width));
  }
  for (float v : image.pixels) {
    if (!std::isfinite(v)) throw std::invalid_argument("image contains non-finite intensity");
  }
}

void validate(const DeformationField& field) {
  if (field.height == 0 || field.width == 0) throw std::invalid_argument("field has empty extent");
  if (field.data.size() != field.height * field.width * 2) {
    throw std::invalid_argument("field payload size does not match its extents");
  }
  for (float v : field.data) {
    if (!std::isfinite(v)) throw std::invalid_argument("field contains non-finite displacement");
  }
}

void clamp_unit(ImageGrid& image) {
  for (auto& v : image.pixels) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace georeg
