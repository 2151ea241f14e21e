#include "georeg/objectives.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "georeg/ops.hpp"
#include "georeg/warp.hpp"

namespace georeg {

void LossWeights::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  for (double a : alpha) {
    if (!(a >= 0.0)) throw std::invalid_argument("alpha weights must be non-negative");
  }
}

template <class T>
ad::Tensor<T> ncc(const ad::Tensor<T>& a, const ad::Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ad::ShapeError("ncc: extents differ " + ad::shape_str(a.shape()) + " vs " + ad::shape_str(b.shape()));
  }
  if (a.numel() < 2) throw ad::ShapeError("ncc: needs at least 2 pixels");
  auto da = ad::add(a, ad::neg(ad::mean(a)));
  auto db = ad::add(b, ad::neg(ad::mean(b)));
  auto cov = ad::mean(ad::mul(da, db));
  auto va = ad::add_scalar(ad::mean(ad::square(da)), T(kNccEps));
  auto vb = ad::add_scalar(ad::mean(ad::square(db)), T(kNccEps));
  return ad::div(cov, ad::sqrt(ad::mul(va, vb)));
}

double ncc(const ImageGrid& a, const ImageGrid& b) {
  validate(a);
  validate(b);
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument("ncc: extents differ " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                                " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
  }
  const std::size_t n = a.pixels.size();
  if (n < 2) throw std::invalid_argument("ncc: needs at least 2 pixels");
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a.pixels[i];
    mb += b.pixels[i];
  }
  ma /= double(n);
  mb /= double(n);
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a.pixels[i] - ma, y = b.pixels[i] - mb;
    cov += x * y;
    va += x * x;
    vb += y * y;
  }
  cov /= double(n);
  va /= double(n);
  vb /= double(n);
  return cov / std::sqrt((va + kNccEps) * (vb + kNccEps));
}

template <class T>
ad::Tensor<T> bending_energy(const ad::Tensor<T>& disp, std::size_t height, std::size_t width) {
  if (height < 3 || width < 3) {
    throw std::invalid_argument("bending energy needs at least 3x3 pixels, got " + std::to_string(height) + "x" +
                                std::to_string(width));
  }
  if (disp.numel() != height * width * 2) {
    throw ad::ShapeError("bending_energy: field " + ad::shape_str(disp.shape()) + " for " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  auto u = ad::reshape(ad::transpose(ad::reshape(disp, {height * width, 2})), {2, height, width});
  const std::size_t h = height - 2, w = width - 2;
  auto win = [&](std::size_t y0, std::size_t x0) { return ad::slice(ad::slice(u, 1, y0, h), 2, x0, w); };
  auto c = win(1, 1);
  auto uyy = ad::add(ad::sub(win(2, 1), ad::scale(c, T(2))), win(0, 1));
  auto uxx = ad::add(ad::sub(win(1, 2), ad::scale(c, T(2))), win(1, 0));
  auto uxy = ad::scale(ad::add(ad::sub(win(2, 2), win(2, 0)), ad::sub(win(0, 0), win(0, 2))), T(0.25));
  auto e = ad::add(ad::add(ad::square(uyy), ad::square(uxx)), ad::scale(ad::square(uxy), T(2)));
  return ad::scale(ad::sum(e), T(1.0 / double(h * w)));
}

double bending_energy(const DeformationField& field) {
  validate(field);
  const std::size_t H = field.height, W = field.width;
  if (H < 3 || W < 3) {
    throw std::invalid_argument("bending energy needs at least 3x3 pixels, got " + std::to_string(H) + "x" +
                                std::to_string(W));
  }
  double e = 0;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 1; i + 1 < H; ++i)
      for (std::size_t j = 1; j + 1 < W; ++j) {
        auto u = [&](std::size_t y, std::size_t x) { return double(field.data[(y * W + x) * 2 + c]); };
        const double yy = u(i + 1, j) - 2 * u(i, j) + u(i - 1, j);
        const double xx = u(i, j + 1) - 2 * u(i, j) + u(i, j - 1);
        const double xy = 0.25 * (u(i + 1, j + 1) - u(i + 1, j - 1) - u(i - 1, j + 1) + u(i - 1, j - 1));
        e += yy * yy + xx * xx + 2 * xy * xy;
      }
  return e / double((H - 2) * (W - 2));
}

template <class T>
ad::Tensor<T> j_cost(const ad::Tensor<T>& target, const ad::Tensor<T>& source, const ad::Tensor<T>& disp,
                     double lambda) {
  const std::size_t H = target.dim(1), W = target.dim(2);
  auto d = ad::add_scalar(ad::neg(ncc(target, warp_tensor(source, disp))), T(1));
  if (lambda == 0.0) return d;
  return ad::add(d, ad::scale(bending_energy(disp, H, W), T(lambda)));
}

template <class T>
ad::Tensor<T> j_refine(const ad::Tensor<T>& target, const ad::Tensor<T>& source, const ad::Tensor<T>& start,
                       const std::vector<ad::Tensor<T>>& steps, double lambda) {
  if (steps.empty()) throw std::invalid_argument("j_refine needs at least one step");
  ad::Tensor<T> u = start, total;
  for (const auto& s : steps) {
    u = ad::add(u, s);
    auto term = j_cost(target, source, u, lambda);
    total = total.defined() ? ad::add(total, term) : term;
  }
  return total;
}

template <class T>
ad::Tensor<T> j_interp(const ad::Tensor<T>& target_r, const ad::Tensor<T>& source_r,
                       const ad::Tensor<T>& initial, std::size_t level, double lambda) {
  return j_cost(target_r, source_r, ad::scale(initial, T(std::ldexp(1.0, -int(level)))), lambda);
}

template <class T>
ad::Tensor<T> j_multires(const std::vector<LevelTerms<T>>& levels, const LossWeights& weights) {
  weights.validate();
  if (levels.empty()) throw std::invalid_argument("j_multires needs at least one level");
  const std::size_t R = levels.size() - 1;
  ad::Tensor<T> total = levels[R].refine;
  if (!total.defined()) total = ad::Tensor<T>::scalar(T(0));
  for (std::size_t r = 0; r < R; ++r) {
    const T a = T(weights.alpha_at(r));
    if (levels[r].interp.defined()) total = ad::add(total, ad::scale(levels[r].interp, a));
    if (levels[r].refine.defined()) total = ad::add(total, ad::scale(levels[r].refine, a));
  }
  return total;
}

template <class T>
ad::Tensor<T> downsample_intensity(const ad::Tensor<T>& image, std::size_t factor) {
  if (factor == 0 || (factor & (factor - 1))) {
    throw std::invalid_argument("downsample factor must be a power of two, got " + std::to_string(factor));
  }
  ad::Tensor<T> x = image;
  for (std::size_t f = factor; f > 1; f /= 2) x = ad::avgpool2d(x);
  return x;
}

ImageGrid downsample_intensity(const ImageGrid& image, std::size_t factor) {
  validate(image);
  ad::NoGradGuard<double> guard;
  auto t = downsample_intensity(image_tensor<double>(image), factor);
  ImageGrid out = ImageGrid::zeros(t.dim(1), t.dim(2));
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = float(t.values()[i]);
  return out;
}

#define GEOREG_OBJ(T)                                                                               \
  template ad::Tensor<T> ncc<T>(const ad::Tensor<T>&, const ad::Tensor<T>&);                        \
  template ad::Tensor<T> bending_energy<T>(const ad::Tensor<T>&, std::size_t, std::size_t);         \
  template ad::Tensor<T> j_cost<T>(const ad::Tensor<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&, \
                                   double);                                                         \
  template ad::Tensor<T> j_refine<T>(const ad::Tensor<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&, \
                                     const std::vector<ad::Tensor<T>>&, double);                    \
  template ad::Tensor<T> j_interp<T>(const ad::Tensor<T>&, const ad::Tensor<T>&, const ad::Tensor<T>&, \
                                     std::size_t, double);                                          \
  template ad::Tensor<T> j_multires<T>(const std::vector<LevelTerms<T>>&, const LossWeights&);      \
  template ad::Tensor<T> downsample_intensity<T>(const ad::Tensor<T>&, std::size_t);

GEOREG_OBJ(float)
GEOREG_OBJ(double)

#undef GEOREG_OBJ

}  // namespace georeg
