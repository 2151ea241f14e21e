#pragma once

// Geometric building blocks shared by the deformation operators: sinusoidal
// embedding of relative offsets, k x k neighborhood lookup on a regular grid
// by rounding into index space, and a plain continuous convolution used as a
// reference in tests.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "georeg/tensor.hpp"

namespace georeg {

struct FourierConfig {
  std::size_t bands = 6;
  double sigma = 1.0;
  double extent_y = 28.0;  // finest image extent per axis, in pixels
  double extent_x = 28.0;
};

// Per band b: [sin(2 pi f Dy), cos(2 pi f Dy), sin(2 pi f' Dx), cos(2 pi f' Dx)]
// with f = sigma 2^b / extent_y and f' = sigma 2^b / extent_x.
std::vector<double> fourier_embed(std::array<double, 2> offset, const FourierConfig& cfg);

// Row-wise embedding of offsets (N,2) -> (N, 4B). Differentiable in offsets.
template <class T>
ad::Tensor<T> fourier_features(const ad::Tensor<T>& offsets, const FourierConfig& cfg);

// fourier_features followed by the learned (4B, d) projection.
template <class T>
ad::Tensor<T> positional_embedding(const ad::Tensor<T>& offsets, const ad::Tensor<T>& projection,
                                   const FourierConfig& cfg);

// Regular grid of one pyramid level: node (i,j) sits at
// ((i + 0.5) 2^level - 0.5, (j + 0.5) 2^level - 0.5).
struct GridSpec {
  std::size_t level = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t count() const { return height * width; }
  double spacing() const;
  std::array<double, 2> coord(std::size_t flat) const;
  // Nearest node after clamping to the grid.
  std::array<std::size_t, 2> nearest(std::array<double, 2> query) const;
};

struct PointSet {
  std::size_t dim = 0;
  std::vector<double> features;  // count x dim
  std::vector<double> coords;    // count x 2

  std::size_t count() const { return coords.size() / 2; }
  void validate() const;
};

PointSet grid_point_set(const GridSpec& grid, std::vector<double> features, std::size_t dim);

struct Neighborhood {
  std::size_t k = 0;
  std::size_t center = 0;                       // flat index of the nearest node
  std::vector<std::int32_t> indices;            // k*k flat node indices, row-major
  std::vector<std::array<double, 2>> coords;    // node coordinates
  std::vector<std::array<double, 2>> offsets;   // node coordinate - query
};

Neighborhood gather_grid_neighborhood(std::array<double, 2> query, const GridSpec& grid, std::size_t k);

// Batched form: queries (P x 2 values) -> P*k*k indices. Optionally writes the
// center index of every query.
template <class T>
std::vector<std::int32_t> gather_grid_indices(std::span<const T> queries, const GridSpec& grid,
                                              std::size_t k,
                                              std::vector<std::int32_t>* centers = nullptr);

// Weight function: offset -> d_in x d_out matrix, row-major.
using WeightFn = std::function<std::vector<double>(std::array<double, 2>)>;

// sum_j f_j W(x_j - x) over the neighborhood of a query at x.
std::vector<double> continuous_conv(const PointSet& points, const Neighborhood& nb, std::size_t d_out,
                                    const WeightFn& weight);

// Same-size grids (C_s,H,W), (C_t,H,W) and kernel (O, C_s+C_t, k, k).
// Returns {conv(concat(source,target)), conv(source, K_s) + conv(target, K_t)}.
// An undefined target (no target channels) is ignored.
template <class T>
std::pair<ad::Tensor<T>, ad::Tensor<T>> split_conv_equivalence(const ad::Tensor<T>& source,
                                                               const ad::Tensor<T>& target,
                                                               const ad::Tensor<T>& kernel);

}  // namespace georeg
