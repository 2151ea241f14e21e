#include "georeg/adam.hpp"

#include <cmath>

namespace georeg::ad {

template <class T>
void adam_step(ParamStore<T>& params, AdamState<T>& state, const AdamConfig& cfg) {
  const auto& items = params.items();
  for (const auto& [name, t] : items) {
    for (T g : t.grad()) {
      if (!std::isfinite(g)) throw NonFiniteGradient(name);
    }
  }
  if (state.m.size() != items.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& item : items) {
      state.m.emplace_back(item.second.numel(), T(0));
      state.v.emplace_back(item.second.numel(), T(0));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
  for (std::size_t i = 0; i < items.size(); ++i) {
    Tensor<T> t = items[i].second;
    auto w = t.mutable_values();
    const auto g = t.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const T gk = g.empty() ? T(0) : g[k];
      m[k] = b1 * m[k] + (T(1) - b1) * gk;
      v[k] = b2 * v[k] + (T(1) - b2) * gk * gk;
      const double mhat = double(m[k]) / bc1;
      const double vhat = double(v[k]) / bc2;
      w[k] -= T(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

template void adam_step<float>(ParamStore<float>&, AdamState<float>&, const AdamConfig&);
template void adam_step<double>(ParamStore<double>&, AdamState<double>&, const AdamConfig&);

}  // namespace georeg::ad
