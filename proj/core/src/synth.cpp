#include "georeg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace georeg {

void validate(const SyntheticSpec& spec) {
  if (spec.rotation_deg < 0 || spec.scale < 0 || spec.scale >= 1 || spec.translation < 0 ||
      spec.octaves < 0 || spec.amplitude < 0) {
    throw std::invalid_argument("invalid synthetic spec: ranges must be non-negative, scale < 1");
  }
}

namespace {

struct Affine2 {
  double m[2][2];
  double t[2];
  double c[2];

  std::pair<double, double> apply(double y, double x) const {
    const double dy = y - c[0], dx = x - c[1];
    return {c[0] + t[0] + m[0][0] * dy + m[0][1] * dx, c[1] + t[1] + m[1][0] * dy + m[1][1] * dx};
  }
};

Affine2 make_affine(const AffineParams& p, std::size_t height, std::size_t width) {
  const double cs = std::cos(p.angle_rad), sn = std::sin(p.angle_rad);
  Affine2 a{};
  // R * S, coordinates ordered (y, x)
  a.m[0][0] = cs * p.scale_y;
  a.m[0][1] = -sn * p.scale_x;
  a.m[1][0] = sn * p.scale_y;
  a.m[1][1] = cs * p.scale_x;
  a.t[0] = p.shift_y;
  a.t[1] = p.shift_x;
  a.c[0] = (double(height) - 1.0) / 2.0;
  a.c[1] = (double(width) - 1.0) / 2.0;
  return a;
}

}  // namespace

DeformationField affine_field(const AffineParams& params, std::size_t height, std::size_t width) {
  const Affine2 a = make_affine(params, height, width);
  DeformationField f = DeformationField::zeros(height, width);
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      auto [y, x] = a.apply(double(i), double(j));
      f.set(i, j, float(y - double(i)), float(x - double(j)));
    }
  return f;
}

DeformationField brownian_field(int octaves, double amplitude, std::size_t height, std::size_t width,
                                ad::Rng& rng) {
  DeformationField f = DeformationField::zeros(height, width);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int o = 0; o < octaves; ++o) {
    const double div = std::ldexp(1.0, octaves - o + 1);
    const std::size_t gh = std::max<std::size_t>(2, std::size_t(std::ceil(double(height) / div)));
    const std::size_t gw = std::max<std::size_t>(2, std::size_t(std::ceil(double(width) / div)));
    const double amp = amplitude * std::ldexp(1.0, -o);
    std::vector<double> nodes(gh * gw * 2);
    for (auto& v : nodes) v = amp * normal(rng);
    for (std::size_t i = 0; i < height; ++i) {
      const double gy = height > 1 ? double(i) * double(gh - 1) / double(height - 1) : 0.0;
      const std::size_t y0 = std::min<std::size_t>(std::size_t(gy), gh - 2);
      const double wy = gy - double(y0);
      for (std::size_t j = 0; j < width; ++j) {
        const double gx = width > 1 ? double(j) * double(gw - 1) / double(width - 1) : 0.0;
        const std::size_t x0 = std::min<std::size_t>(std::size_t(gx), gw - 2);
        const double wx = gx - double(x0);
        for (std::size_t c = 0; c < 2; ++c) {
          auto n = [&](std::size_t yy, std::size_t xx) { return nodes[2 * (yy * gw + xx) + c]; };
          const double v = n(y0, x0) * (1 - wy) * (1 - wx) + n(y0, x0 + 1) * (1 - wy) * wx +
                           n(y0 + 1, x0) * wy * (1 - wx) + n(y0 + 1, x0 + 1) * wy * wx;
          f.data[2 * (i * width + j) + c] += float(v);
        }
      }
    }
  }
  return f;
}

AffineParams sample_affine(const SyntheticSpec& spec, std::size_t height, std::size_t width, ad::Rng& rng) {
  auto sym = [&](double r) { return r > 0 ? std::uniform_real_distribution<double>(-r, r)(rng) : 0.0; };
  AffineParams p;
  p.angle_rad = sym(spec.rotation_deg) * std::numbers::pi / 180.0;
  p.scale_y = 1.0 + sym(spec.scale);
  p.scale_x = 1.0 + sym(spec.scale);
  p.shift_y = sym(spec.translation) * double(height);
  p.shift_x = sym(spec.translation) * double(width);
  return p;
}

DeformationField synth_field(const SyntheticSpec& spec, std::size_t height, std::size_t width) {
  validate(spec);
  if (height == 0 || width == 0) throw std::invalid_argument("synth_field: extents must be positive");
  ad::Rng rng(spec.seed);
  const AffineParams p = sample_affine(spec, height, width, rng);
  const DeformationField b = brownian_field(spec.octaves, spec.amplitude, height, width, rng);
  DeformationField f = affine_field(p, height, width);
  for (std::size_t k = 0; k < f.data.size(); ++k) f.data[k] += b.data[k];
  return f;
}

double max_abs_displacement(const DeformationField& field) {
  double m = 0;
  for (float v : field.data) m = std::max(m, double(std::abs(v)));
  return m;
}

namespace {

// Gaussian noise on a (nodes x nodes) lattice stretched bilinearly over the image.
std::vector<double> lattice_noise(std::size_t nodes, std::size_t height, std::size_t width, ad::Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> lattice(nodes * nodes);
  for (auto& v : lattice) v = normal(rng);
  std::vector<double> out(height * width);
  for (std::size_t i = 0; i < height; ++i) {
    const double gy = height > 1 ? double(i) * double(nodes - 1) / double(height - 1) : 0.0;
    const std::size_t y0 = std::min<std::size_t>(std::size_t(gy), nodes - 2);
    const double wy = gy - double(y0);
    for (std::size_t j = 0; j < width; ++j) {
      const double gx = width > 1 ? double(j) * double(nodes - 1) / double(width - 1) : 0.0;
      const std::size_t x0 = std::min<std::size_t>(std::size_t(gx), nodes - 2);
      const double wx = gx - double(x0);
      auto n = [&](std::size_t yy, std::size_t xx) { return lattice[yy * nodes + xx]; };
      out[i * width + j] = n(y0, x0) * (1 - wy) * (1 - wx) + n(y0, x0 + 1) * (1 - wy) * wx +
                           n(y0 + 1, x0) * wy * (1 - wx) + n(y0 + 1, x0 + 1) * wy * wx;
    }
  }
  return out;
}

}  // namespace

ImageGrid synth_shapes(std::size_t height, std::size_t width, ad::Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> count(5, 9);
  ImageGrid g = ImageGrid::zeros(height, width);
  // faint two-octave texture under the shapes, in [0.05, 0.3]
  const auto coarse = lattice_noise(6, height, width, rng);
  const auto fine = lattice_noise(12, height, width, rng);
  for (std::size_t k = 0; k < g.pixels.size(); ++k)
    g.pixels[k] = float(0.175 + 0.125 * std::tanh(0.6 * coarse[k] + 0.4 * fine[k]));
  const double ext = double(std::min(height, width));
  const int n = count(rng);
  for (int k = 0; k < n; ++k) {
    const double cy = (0.15 + 0.7 * u01(rng)) * double(height);
    const double cx = (0.15 + 0.7 * u01(rng)) * double(width);
    const double ra = (0.08 + 0.17 * u01(rng)) * ext;
    const double rb = (0.05 + 0.12 * u01(rng)) * ext;
    const double th = u01(rng) * std::numbers::pi;
    const double level = 0.35 + 0.65 * u01(rng);
    const double cs = std::cos(th), sn = std::sin(th);
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        const double dy = double(i) - cy, dx = double(j) - cx;
        const double a = (cs * dy + sn * dx) / ra, b = (-sn * dy + cs * dx) / rb;
        if (a * a + b * b <= 1.0) g.at(i, j) = float(std::max(double(g.at(i, j)), level));
      }
  }
  for (int pass = 0; pass < 2; ++pass) {
    ImageGrid s = g;
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j) {
        double acc = 0;
        int cnt = 0;
        for (int di = -1; di <= 1; ++di)
          for (int dj = -1; dj <= 1; ++dj) {
            const long y = long(i) + di, x = long(j) + dj;
            if (y < 0 || x < 0 || y >= long(height) || x >= long(width)) continue;
            acc += g.at(std::size_t(y), std::size_t(x));
            ++cnt;
          }
        s.at(i, j) = float(acc / cnt);
      }
    g = std::move(s);
  }
  clamp_unit(g);
  return g;
}

}  // namespace georeg
