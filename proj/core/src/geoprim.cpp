#include "georeg/geoprim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "georeg/encoder.hpp"
#include "georeg/ops.hpp"

namespace georeg {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_fourier(const FourierConfig& cfg) {
  if (cfg.bands == 0) throw std::invalid_argument("fourier embedding needs at least one band");
  if (!(cfg.extent_y > 0.0) || !(cfg.extent_x > 0.0)) {
    throw std::invalid_argument("fourier embedding extents must be positive");
  }
}

std::size_t clamp_index(long v, std::size_t n) {
  if (v < 0) return 0;
  if (std::size_t(v) >= n) return n - 1;
  return std::size_t(v);
}

}  // namespace

std::vector<double> fourier_embed(std::array<double, 2> offset, const FourierConfig& cfg) {
  check_fourier(cfg);
  std::vector<double> out(4 * cfg.bands);
  for (std::size_t b = 0; b < cfg.bands; ++b) {
    const double s = cfg.sigma * std::ldexp(1.0, int(b));
    const double ay = kTwoPi * s / cfg.extent_y * offset[0];
    const double ax = kTwoPi * s / cfg.extent_x * offset[1];
    out[4 * b] = std::sin(ay);
    out[4 * b + 1] = std::cos(ay);
    out[4 * b + 2] = std::sin(ax);
    out[4 * b + 3] = std::cos(ax);
  }
  return out;
}

template <class T>
ad::Tensor<T> fourier_features(const ad::Tensor<T>& offsets, const FourierConfig& cfg) {
  check_fourier(cfg);
  if (offsets.rank() != 2 || offsets.dim(1) != 2) {
    throw ad::ShapeError("fourier_features: expected (N,2), got " + ad::shape_str(offsets.shape()));
  }
  const std::size_t n = offsets.dim(0), B = cfg.bands, w = 4 * B;
  // angular frequency per band and axis
  auto omega = std::make_shared<std::vector<double>>(2 * B);
  for (std::size_t b = 0; b < B; ++b) {
    const double s = cfg.sigma * std::ldexp(1.0, int(b));
    (*omega)[2 * b] = kTwoPi * s / cfg.extent_y;
    (*omega)[2 * b + 1] = kTwoPi * s / cfg.extent_x;
  }
  const auto d = offsets.values();
  std::vector<T> out(n * w);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t a = 0; a < 2; ++a) {
        const double ang = (*omega)[2 * b + a] * double(d[2 * i + a]);
        out[i * w + 4 * b + 2 * a] = T(std::sin(ang));
        out[i * w + 4 * b + 2 * a + 1] = T(std::cos(ang));
      }
  return ad::make_result<T>("fourier_features", {n, w}, std::move(out), {offsets},
                            [offsets, omega, n, B, w](const ad::Node<T>& o) {
    auto& g = ad::grad_buffer(*offsets.node());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t a = 0; a < 2; ++a) {
          const std::size_t c = i * w + 4 * b + 2 * a;
          const double om = (*omega)[2 * b + a];
          // d sin = om cos = om * out[c+1]; d cos = -om sin = -om * out[c]
          g[2 * i + a] += T(om * (double(o.grad[c]) * double(o.value[c + 1]) -
                                  double(o.grad[c + 1]) * double(o.value[c])));
        }
  });
}

template <class T>
ad::Tensor<T> positional_embedding(const ad::Tensor<T>& offsets, const ad::Tensor<T>& projection,
                                   const FourierConfig& cfg) {
  return ad::matmul(fourier_features(offsets, cfg), projection);
}

double GridSpec::spacing() const { return std::ldexp(1.0, int(level)); }

std::array<double, 2> GridSpec::coord(std::size_t flat) const {
  return {level_coord(flat / width, level), level_coord(flat % width, level)};
}

std::array<std::size_t, 2> GridSpec::nearest(std::array<double, 2> query) const {
  if (!std::isfinite(query[0]) || !std::isfinite(query[1])) {
    throw std::invalid_argument("neighborhood query is not finite");
  }
  const double iy = std::round(coord_to_index(query[0], level));
  const double ix = std::round(coord_to_index(query[1], level));
  auto clampd = [](double v, std::size_t n) {
    return v <= 0.0 ? std::size_t(0) : (v >= double(n - 1) ? n - 1 : std::size_t(v));
  };
  return {clampd(iy, height), clampd(ix, width)};
}

void PointSet::validate() const {
  if (coords.size() % 2) throw std::invalid_argument("point set coordinates must be pairs");
  if (features.size() != count() * dim) {
    throw std::invalid_argument("point set has " + std::to_string(count()) + " coordinates but " +
                                std::to_string(features.size()) + " feature values for width " +
                                std::to_string(dim));
  }
  for (double c : coords) {
    if (!std::isfinite(c)) throw std::invalid_argument("point set coordinate is not finite");
  }
}

PointSet grid_point_set(const GridSpec& grid, std::vector<double> features, std::size_t dim) {
  PointSet p;
  p.dim = dim;
  p.features = std::move(features);
  p.coords.resize(2 * grid.count());
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const auto c = grid.coord(i);
    p.coords[2 * i] = c[0];
    p.coords[2 * i + 1] = c[1];
  }
  p.validate();
  return p;
}

Neighborhood gather_grid_neighborhood(std::array<double, 2> query, const GridSpec& grid, std::size_t k) {
  if (k % 2 == 0) throw std::invalid_argument("neighborhood size must be odd");
  if (grid.count() == 0) throw std::invalid_argument("neighborhood grid is empty");
  const auto c = grid.nearest(query);
  Neighborhood nb;
  nb.k = k;
  nb.center = c[0] * grid.width + c[1];
  const long h = long(k / 2);
  for (long dy = -h; dy <= h; ++dy)
    for (long dx = -h; dx <= h; ++dx) {
      const std::size_t y = clamp_index(long(c[0]) + dy, grid.height);
      const std::size_t x = clamp_index(long(c[1]) + dx, grid.width);
      const std::size_t flat = y * grid.width + x;
      const auto xc = grid.coord(flat);
      nb.indices.push_back(std::int32_t(flat));
      nb.coords.push_back(xc);
      nb.offsets.push_back({xc[0] - query[0], xc[1] - query[1]});
    }
  return nb;
}

template <class T>
std::vector<std::int32_t> gather_grid_indices(std::span<const T> queries, const GridSpec& grid,
                                              std::size_t k, std::vector<std::int32_t>* centers) {
  if (k % 2 == 0) throw std::invalid_argument("neighborhood size must be odd");
  if (grid.count() == 0) throw std::invalid_argument("neighborhood grid is empty");
  const std::size_t P = queries.size() / 2, M = k * k;
  const long h = long(k / 2);
  std::vector<std::int32_t> out(P * M);
  if (centers) centers->resize(P);
  for (std::size_t p = 0; p < P; ++p) {
    const auto c = grid.nearest({double(queries[2 * p]), double(queries[2 * p + 1])});
    if (centers) (*centers)[p] = std::int32_t(c[0] * grid.width + c[1]);
    std::size_t m = 0;
    for (long dy = -h; dy <= h; ++dy)
      for (long dx = -h; dx <= h; ++dx) {
        const std::size_t y = clamp_index(long(c[0]) + dy, grid.height);
        const std::size_t x = clamp_index(long(c[1]) + dx, grid.width);
        out[p * M + m++] = std::int32_t(y * grid.width + x);
      }
  }
  return out;
}

std::vector<double> continuous_conv(const PointSet& points, const Neighborhood& nb, std::size_t d_out,
                                    const WeightFn& weight) {
  std::vector<double> out(d_out, 0.0);
  const std::size_t d_in = points.dim;
  for (std::size_t j = 0; j < nb.indices.size(); ++j) {
    const auto w = weight(nb.offsets[j]);
    if (w.size() != d_in * d_out) {
      throw std::invalid_argument("continuous_conv: weight function returned " + std::to_string(w.size()) +
                                  " values, expected " + std::to_string(d_in * d_out));
    }
    const double* f = &points.features[std::size_t(nb.indices[j]) * d_in];
    for (std::size_t a = 0; a < d_in; ++a)
      for (std::size_t b = 0; b < d_out; ++b) out[b] += f[a] * w[a * d_out + b];
  }
  return out;
}

template <class T>
std::pair<ad::Tensor<T>, ad::Tensor<T>> split_conv_equivalence(const ad::Tensor<T>& source,
                                                               const ad::Tensor<T>& target,
                                                               const ad::Tensor<T>& kernel) {
  if (source.rank() != 3 || kernel.rank() != 4) {
    throw ad::ShapeError("split_conv_equivalence: source " + ad::shape_str(source.shape()) + ", kernel " +
                         ad::shape_str(kernel.shape()));
  }
  const std::size_t cs = source.dim(0);
  const std::size_t ct = target.defined() ? target.dim(0) : 0;
  if (kernel.dim(1) != cs + ct) {
    throw ad::ShapeError("split_conv_equivalence: kernel has " + std::to_string(kernel.dim(1)) +
                         " input channels, grids have " + std::to_string(cs + ct));
  }
  if (ct > 0 && (target.dim(1) != source.dim(1) || target.dim(2) != source.dim(2))) {
    throw ad::ShapeError("split_conv_equivalence: grid extents differ " + ad::shape_str(source.shape()) +
                         " vs " + ad::shape_str(target.shape()));
  }
  const std::size_t pad = kernel.dim(2) / 2;
  const ad::Tensor<T> none;
  if (ct == 0) {
    auto out = ad::conv2d(source, kernel, none, pad);
    return {out, ad::conv2d(source, kernel, none, pad)};
  }
  auto joint = ad::conv2d(ad::concat<T>({source, target}, 0), kernel, none, pad);
  auto split = ad::add(ad::conv2d(source, ad::slice(kernel, 1, 0, cs), none, pad),
                       ad::conv2d(target, ad::slice(kernel, 1, cs, ct), none, pad));
  return {joint, split};
}

#define GEOREG_GEO(T)                                                                             \
  template ad::Tensor<T> fourier_features<T>(const ad::Tensor<T>&, const FourierConfig&);         \
  template ad::Tensor<T> positional_embedding<T>(const ad::Tensor<T>&, const ad::Tensor<T>&,      \
                                                 const FourierConfig&);                           \
  template std::vector<std::int32_t> gather_grid_indices<T>(std::span<const T>, const GridSpec&,  \
                                                            std::size_t, std::vector<std::int32_t>*); \
  template std::pair<ad::Tensor<T>, ad::Tensor<T>> split_conv_equivalence<T>(                     \
      const ad::Tensor<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&);

GEOREG_GEO(float)
GEOREG_GEO(double)

#undef GEOREG_GEO

}  // namespace georeg
