#pragma once
// Central finite-difference check of the f32 reverse pass against a float64
// shadow evaluation of the same function.
//
// The function is evaluated on float inputs with the tape on, and the scalar
// sum(w * f(x)) is differentiated with random weights w. Each probe draws a
// random direction v and compares the analytic directional derivative g.v with
// (L(x + eps v) - L(x - eps v)) / (2 eps) computed entirely in double.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "georeg/ops.hpp"
#include "georeg/tensor.hpp"

namespace georeg::testing {

struct GradCheckResult {
  double max_rel = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int probes = 0;
};

inline double rel_error(double a, double n) {
  const double denom = std::max({std::abs(a), std::abs(n), 1e-4});
  return std::abs(a - n) / denom;
}

// Values that are exactly representable in float, so both precisions start
// from identical inputs.
inline std::vector<double> float_exact(std::vector<double> v) {
  for (auto& x : v) x = double(float(x));
  return v;
}

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return float_exact(std::move(v));
}

struct GradInput {
  ad::Shape shape;
  std::vector<double> values;
};

template <class T>
std::vector<ad::Tensor<T>> make_inputs(const std::vector<GradInput>& in, bool requires_grad) {
  std::vector<ad::Tensor<T>> out;
  for (const auto& g : in) {
    std::vector<T> v(g.values.begin(), g.values.end());
    out.push_back(ad::Tensor<T>::from(g.shape, std::move(v), requires_grad));
  }
  return out;
}

// `fn` is a generic callable taking const std::vector<Tensor<T>>& and
// returning a Tensor<T>, instantiated for both float and double.
template <class Fn>
GradCheckResult check_gradient(Fn&& fn, const std::vector<GradInput>& inputs, int probes, std::uint64_t seed,
                               double eps = 1e-6) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> weights;
  std::vector<std::vector<double>> grads;
  {
    ad::TapeScope<float> scope;
    auto xs = make_inputs<float>(inputs, true);
    ad::Tensor<float> y = fn(xs);
    weights.resize(y.numel());
    for (auto& w : weights) w = double(float(normal(rng)));
    ad::Tensor<float> w = ad::Tensor<float>::from(y.shape(), std::vector<float>(weights.begin(), weights.end()));
    ad::backward(ad::sum(ad::mul(y, w)));
    for (const auto& x : xs) {
      std::vector<double> g(x.numel(), 0.0);
      if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), g.begin());
      grads.push_back(std::move(g));
    }
  }

  auto loss64 = [&](const std::vector<GradInput>& in) {
    ad::NoGradGuard<double> guard;
    auto xs = make_inputs<double>(in, false);
    ad::Tensor<double> y = fn(xs);
    double s = 0.0;
    const auto v = y.values();
    for (std::size_t i = 0; i < v.size(); ++i) s += weights[i] * v[i];
    return s;
  };

  GradCheckResult res;
  for (int p = 0; p < probes; ++p) {
    std::vector<GradInput> plus = inputs, minus = inputs;
    double analytic = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      for (std::size_t k = 0; k < inputs[i].values.size(); ++k) {
        const double d = normal(rng);
        analytic += grads[i][k] * d;
        plus[i].values[k] += eps * d;
        minus[i].values[k] -= eps * d;
      }
    }
    const double numeric = (loss64(plus) - loss64(minus)) / (2.0 * eps);
    const double r = rel_error(analytic, numeric);
    if (r >= res.max_rel) {
      res.max_rel = r;
      res.worst_analytic = analytic;
      res.worst_numeric = numeric;
    }
    ++res.probes;
  }
  return res;
}

}  // namespace georeg::testing
