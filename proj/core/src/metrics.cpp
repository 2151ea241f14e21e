#include "georeg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace georeg {

namespace {

void check_same(const LabelMask& a, const LabelMask& b) {
  if (a.height != b.height || a.width != b.width || a.labels.size() != a.height * a.width ||
      b.labels.size() != b.height * b.width) {
    throw std::invalid_argument("mask extents differ: " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                                " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

void check_same(const DeformationField& a, const DeformationField& b) {
  validate(a);
  validate(b);
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument("field extents differ: " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                                " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
  }
}

// nearest distance from every pixel of `from` to the set `to`
void nearest_distances(const std::vector<std::size_t>& from, const std::vector<std::size_t>& to, std::size_t width,
                       std::vector<double>& out) {
  for (auto p : from) {
    const double py = double(p / width), px = double(p % width);
    double best = std::numeric_limits<double>::infinity();
    for (auto q : to) {
      const double dy = py - double(q / width), dx = px - double(q % width);
      best = std::min(best, dy * dy + dx * dx);
    }
    out.push_back(std::sqrt(best));
  }
}

}  // namespace

LabelMask threshold_mask(const ImageGrid& image, float threshold) {
  validate(image);
  LabelMask m{image.height, image.width, std::vector<std::int32_t>(image.pixels.size(), 0)};
  for (std::size_t i = 0; i < image.pixels.size(); ++i) m.labels[i] = image.pixels[i] > threshold ? 1 : 0;
  return m;
}

std::vector<double> dice(const LabelMask& a, const LabelMask& b, const std::vector<std::int32_t>& labels) {
  check_same(a, b);
  std::vector<double> out;
  for (auto l : labels) {
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
      const bool x = a.labels[i] == l, y = b.labels[i] == l;
      na += x;
      nb += y;
      both += x && y;
    }
    out.push_back(na + nb == 0 ? 1.0 : 2.0 * double(both) / double(na + nb));
  }
  return out;
}

std::vector<std::size_t> boundary_pixels(const LabelMask& m, std::int32_t label) {
  std::vector<std::size_t> out;
  const std::size_t H = m.height, W = m.width;
  auto inside = [&](long y, long x) {
    return y >= 0 && x >= 0 && std::size_t(y) < H && std::size_t(x) < W && m.labels[std::size_t(y) * W + std::size_t(x)] == label;
  };
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      if (m.labels[i * W + j] != label) continue;
      const long y = long(i), x = long(j);
      if (!inside(y - 1, x) || !inside(y + 1, x) || !inside(y, x - 1) || !inside(y, x + 1)) out.push_back(i * W + j);
    }
  return out;
}

double hd95(const LabelMask& a, const LabelMask& b, std::int32_t label) {
  check_same(a, b);
  const auto ba = boundary_pixels(a, label), bb = boundary_pixels(b, label);
  if (ba.empty() && bb.empty()) return 0.0;
  if (ba.empty() || bb.empty()) return std::hypot(double(a.height), double(a.width));
  std::vector<double> d;
  d.reserve(ba.size() + bb.size());
  nearest_distances(ba, bb, a.width, d);
  nearest_distances(bb, ba, a.width, d);
  std::sort(d.begin(), d.end());
  const double pos = 0.95 * double(d.size() - 1);
  const std::size_t lo = std::size_t(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, d.size() - 1);
  return d[lo] + (pos - double(lo)) * (d[hi] - d[lo]);
}

std::vector<double> jacobian_determinant(const DeformationField& field) {
  validate(field);
  const std::size_t H = field.height, W = field.width;
  auto u = [&](std::size_t i, std::size_t j, std::size_t c) { return double(field.data[(i * W + j) * 2 + c]); };
  auto dy = [&](std::size_t i, std::size_t j, std::size_t c) {
    if (H == 1) return 0.0;
    if (i == 0) return u(1, j, c) - u(0, j, c);
    if (i == H - 1) return u(H - 1, j, c) - u(H - 2, j, c);
    return 0.5 * (u(i + 1, j, c) - u(i - 1, j, c));
  };
  auto dx = [&](std::size_t i, std::size_t j, std::size_t c) {
    if (W == 1) return 0.0;
    if (j == 0) return u(i, 1, c) - u(i, 0, c);
    if (j == W - 1) return u(i, W - 1, c) - u(i, W - 2, c);
    return 0.5 * (u(i, j + 1, c) - u(i, j - 1, c));
  };
  std::vector<double> det(H * W);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j)
      det[i * W + j] = (1.0 + dy(i, j, 0)) * (1.0 + dx(i, j, 1)) - dx(i, j, 0) * dy(i, j, 1);
  return det;
}

double folding_fraction(const DeformationField& field) {
  const auto det = jacobian_determinant(field);
  std::size_t n = 0;
  for (double d : det) n += d <= 0.0;
  return double(n) / double(det.size());
}

double aee(const DeformationField& pred, const DeformationField& gt) {
  check_same(pred, gt);
  double s = 0;
  const std::size_t n = pred.height * pred.width;
  for (std::size_t k = 0; k < n; ++k) {
    s += std::hypot(double(pred.data[2 * k]) - gt.data[2 * k], double(pred.data[2 * k + 1]) - gt.data[2 * k + 1]);
  }
  return s / double(n);
}

double mean_magnitude(const DeformationField& field) {
  validate(field);
  double s = 0;
  const std::size_t n = field.height * field.width;
  for (std::size_t k = 0; k < n; ++k) s += std::hypot(double(field.data[2 * k]), double(field.data[2 * k + 1]));
  return s / double(n);
}

MeanStd mean_std(const std::vector<double>& v) {
  if (v.empty()) return {};
  double m = 0;
  for (double x : v) m += x;
  m /= double(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / double(v.size()))};
}

}  // namespace georeg
