#include "georeg/tau.hpp"

#include <cmath>
#include <stdexcept>

#include "georeg/encoder.hpp"
#include "georeg/ops.hpp"

namespace georeg {

template <class T>
TauParams<T> init_tau(std::size_t d, std::size_t bands, ad::Rng& rng) {
  TauParams<T> p;
  p.target = init_attention<T>(d, d, d, rng);
  p.source = init_attention<T>(d, d, d, rng);
  p.projection = ad::kaiming_uniform<T>({4 * bands, d}, 4 * bands, rng);
  p.head = ad::Tensor<T>::zeros({d, 2}, true);
  return p;
}

template <class T>
void for_each_param(TauParams<T>& p, const std::string& prefix,
                    const ad::ParamVisitor<T>& fn) {
  fn(prefix + ".tgt.wq", p.target.wq);
  fn(prefix + ".tgt.wk", p.target.wk);
  fn(prefix + ".tgt.wv", p.target.wv);
  fn(prefix + ".src.wq", p.source.wq);
  fn(prefix + ".src.wk", p.source.wk);
  fn(prefix + ".src.wv", p.source.wv);
  fn(prefix + ".proj", p.projection);
  fn(prefix + ".head", p.head);
}

template <class T>
ad::Tensor<T> DeformationState<T>::position() const {
  return ad::add(start, cumulative);
}

template <class T>
DeformationState<T> initial_state(const ad::Tensor<T>& start) {
  DeformationState<T> s;
  s.start = start;
  s.cumulative = ad::Tensor<T>::zeros(start.shape());
  return s;
}

namespace {

// index-space positions (P,2) of finest-unit coordinates on `grid`
template <class T>
ad::Tensor<T> to_index_space(const ad::Tensor<T>& pos, const GridSpec& grid) {
  const T s = T(grid.spacing());
  return ad::add_scalar(ad::scale(ad::add_scalar(pos, T(0.5)), T(1) / s), T(-0.5));
}

}  // namespace

template <class T>
TauStepResult<T> tau_step(const DeformationState<T>& state, const TauLevelInputs<T>& level,
                          const TauParams<T>& params, const TauConfig& cfg, const FourierConfig& fourier) {
  const GridSpec& grid = level.grid;
  const std::string where =
      "resolution " + std::to_string(grid.level) + " step " + std::to_string(state.step + 1);
  for (T v : state.cumulative.values()) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite deformation state at " + where);
  }
  const auto phi = state.position();
  const std::size_t ms = cfg.k_source * cfg.k_source, mt = cfg.k_target * cfg.k_target;

  TauStepResult<T> r;
  r.source_indices = gather_grid_indices<T>(state.start.values(), grid, cfg.k_source);
  auto src_off = ad::sub(ad::gather_rows(level.coords, r.source_indices), repeat_rows(phi, ms));
  auto attn_s = local_cross_attention(level.source_rows, level.source_rows, r.source_indices, src_off,
                                      params.source, params.projection, fourier, where + " (source)");

  AttentionOutput<T> attn_t;
  if (level.feature_warp) {
    auto warped = ad::bilinear_sample(level.target_map, to_index_space(phi, grid));  // (P,d)
    r.target_indices = gather_grid_indices<T>(state.start.values(), grid, cfg.k_target, &r.target_centers);
    auto tgt_off = ad::sub(ad::gather_rows(level.coords, r.target_indices), repeat_rows(state.start, mt));
    attn_t = local_cross_attention(level.source_rows, warped, r.target_indices, tgt_off, params.target,
                                   params.projection, fourier, where + " (target)");
  } else {
    r.target_indices = gather_grid_indices<T>(phi.values(), grid, cfg.k_target, &r.target_centers);
    auto tgt_off = ad::sub(ad::gather_rows(level.coords, r.target_indices), repeat_rows(phi, mt));
    attn_t = local_cross_attention(level.source_rows, level.target_rows, r.target_indices, tgt_off,
                                   params.target, params.projection, fourier, where + " (target)");
  }
  r.u = ad::scale(ad::matmul(ad::add(attn_t.out, attn_s.out), params.head), T(grid.spacing()));
  r.target_weights = attn_t.weights;
  r.source_weights = attn_s.weights;
  return r;
}

template <class T>
RefineResult<T> refine(const DeformationState<T>& state, const TauLevelInputs<T>& level,
                       const TauParams<T>& params, const TauConfig& cfg, const FourierConfig& fourier,
                       std::size_t steps) {
  if (steps == 0) throw std::invalid_argument("refine needs at least one step");
  RefineResult<T> out;
  out.state = state;
  for (std::size_t n = 0; n < steps; ++n) {
    auto step = tau_step(out.state, level, params, cfg, fourier);
    out.state.cumulative = ad::add(out.state.cumulative, step.u);
    ++out.state.step;
    out.positions.push_back(out.state.position());
    out.steps.push_back(std::move(step));
  }
  return out;
}

#define GEOREG_TAU(T)                                                                             \
  template TauParams<T> init_tau<T>(std::size_t, std::size_t, ad::Rng&);                          \
  template void for_each_param<T>(TauParams<T>&, const std::string&,                              \
                                  const ad::ParamVisitor<T>&); \
  template struct DeformationState<T>;                                                            \
  template DeformationState<T> initial_state<T>(const ad::Tensor<T>&);                            \
  template TauStepResult<T> tau_step<T>(const DeformationState<T>&, const TauLevelInputs<T>&,     \
                                        const TauParams<T>&, const TauConfig&, const FourierConfig&); \
  template RefineResult<T> refine<T>(const DeformationState<T>&, const TauLevelInputs<T>&,        \
                                     const TauParams<T>&, const TauConfig&, const FourierConfig&, \
                                     std::size_t);

GEOREG_TAU(float)
GEOREG_TAU(double)

#undef GEOREG_TAU

}  // namespace georeg
