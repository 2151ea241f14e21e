#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace georeg {

// 2-D scalar raster, row-major, intensities nominally in [0,1].
struct ImageGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;
  std::array<double, 2> spacing{1.0, 1.0};

  static ImageGrid zeros(std::size_t h, std::size_t w);
  static ImageGrid filled(std::size_t h, std::size_t w, float v);

  std::size_t size() const { return pixels.size(); }
  float at(std::size_t i, std::size_t j) const { return pixels[i * width + j]; }
  float& at(std::size_t i, std::size_t j) { return pixels[i * width + j]; }
};

// Per-pixel displacement u = (u_y, u_x) in pixel units; phi(x) = x + u(x).
struct DeformationField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;  // (H, W, 2), u_y then u_x

  static DeformationField zeros(std::size_t h, std::size_t w);

  float uy(std::size_t i, std::size_t j) const { return data[2 * (i * width + j)]; }
  float ux(std::size_t i, std::size_t j) const { return data[2 * (i * width + j) + 1]; }
  void set(std::size_t i, std::size_t j, float dy, float dx) {
    data[2 * (i * width + j)] = dy;
    data[2 * (i * width + j) + 1] = dx;
  }
};

// Throws std::invalid_argument on empty extents, size mismatch or non-finite values.
void validate(const ImageGrid& image);
void validate(const DeformationField& field);

// Clamps intensities into [0,1].
void clamp_unit(ImageGrid& image);

}  // namespace georeg
