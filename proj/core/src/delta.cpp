#include "georeg/delta.hpp"

#include <stdexcept>

#include "georeg/encoder.hpp"
#include "georeg/ops.hpp"

namespace georeg {

template <class T>
DeltaParams<T> init_delta(std::size_t d_fine, std::size_t d_coarse, std::size_t bands, ad::Rng& rng) {
  DeltaParams<T> p;
  p.attn = init_attention<T>(d_fine, d_coarse, d_fine, rng);
  p.projection = ad::kaiming_uniform<T>({4 * bands, d_coarse}, 4 * bands, rng);
  p.head = ad::Tensor<T>::zeros({d_fine, 2}, true);
  return p;
}

template <class T>
void for_each_param(DeltaParams<T>& p, const std::string& prefix,
                    const ad::ParamVisitor<T>& fn) {
  fn(prefix + ".wq", p.attn.wq);
  fn(prefix + ".wk", p.attn.wk);
  fn(prefix + ".wv", p.attn.wv);
  fn(prefix + ".proj", p.projection);
  fn(prefix + ".head", p.head);
}

void check_adjacent(const GridSpec& fine, const GridSpec& coarse) {
  if (coarse.level != fine.level + 1 || coarse.height * 2 != fine.height || coarse.width * 2 != fine.width) {
    throw std::invalid_argument("levels are not adjacent: fine level " + std::to_string(fine.level) + " (" +
                                std::to_string(fine.height) + "x" + std::to_string(fine.width) +
                                "), coarse level " + std::to_string(coarse.level) + " (" +
                                std::to_string(coarse.height) + "x" + std::to_string(coarse.width) + ")");
  }
}

template <class T>
ad::Tensor<T> naive_inherit(const GridSpec& fine, const GridSpec& coarse, const ad::Tensor<T>& coarse_field) {
  check_adjacent(fine, coarse);
  if (coarse_field.rank() != 2 || coarse_field.dim(0) != coarse.count() || coarse_field.dim(1) != 2) {
    throw ad::ShapeError("naive_inherit: coarse field " + ad::shape_str(coarse_field.shape()) + " for " +
                         std::to_string(coarse.count()) + " nodes");
  }
  // fine node coordinates expressed in the coarse grid's index space
  std::vector<T> idx(2 * fine.count());
  for (std::size_t i = 0; i < fine.count(); ++i) {
    const auto c = fine.coord(i);
    idx[2 * i] = T(coord_to_index(c[0], coarse.level));
    idx[2 * i + 1] = T(coord_to_index(c[1], coarse.level));
  }
  auto where = ad::Tensor<T>::from({fine.count(), 2}, std::move(idx));
  auto img = ad::reshape(ad::transpose(coarse_field), {2, coarse.height, coarse.width});
  return ad::bilinear_sample(img, where);
}

template <class T>
DeltaOutput<T> delta_apply(const GridSpec& fine, const ad::Tensor<T>& fine_rows, const ad::Tensor<T>& fine_coords,
                           const GridSpec& coarse, const ad::Tensor<T>& coarse_rows,
                           const ad::Tensor<T>& coarse_coords, const ad::Tensor<T>& coarse_field,
                           const DeltaParams<T>& params, const DeltaConfig& cfg, const FourierConfig& fourier,
                           bool learned) {
  DeltaOutput<T> out;
  out.inherited = naive_inherit(fine, coarse, coarse_field);
  if (!learned) {
    out.initial = out.inherited;
    return out;
  }
  const std::size_t m = cfg.k * cfg.k;
  out.parent_indices = gather_grid_indices<T>(fine_coords.values(), coarse, cfg.k);
  auto phi = ad::add(fine_coords, out.inherited);
  auto parents = ad::gather_rows(ad::add(coarse_coords, coarse_field), out.parent_indices);
  auto offsets = ad::sub(parents, repeat_rows(phi, m));
  auto attn = local_cross_attention(fine_rows, coarse_rows, out.parent_indices, offsets, params.attn,
                                    params.projection, fourier,
                                    "interpolation " + std::to_string(coarse.level) + "->" +
                                        std::to_string(fine.level));
  out.initial = ad::add(out.inherited, ad::scale(ad::matmul(attn.out, params.head), T(fine.spacing())));
  out.weights = attn.weights;
  return out;
}

#define GEOREG_DELTA(T)                                                                              \
  template DeltaParams<T> init_delta<T>(std::size_t, std::size_t, std::size_t, ad::Rng&);            \
  template void for_each_param<T>(DeltaParams<T>&, const std::string&,                               \
                                  const ad::ParamVisitor<T>&);   \
  template ad::Tensor<T> naive_inherit<T>(const GridSpec&, const GridSpec&, const ad::Tensor<T>&);   \
  template DeltaOutput<T> delta_apply<T>(const GridSpec&, const ad::Tensor<T>&, const ad::Tensor<T>&, \
                                         const GridSpec&, const ad::Tensor<T>&, const ad::Tensor<T>&, \
                                         const ad::Tensor<T>&, const DeltaParams<T>&, const DeltaConfig&, \
                                         const FourierConfig&, bool);

GEOREG_DELTA(float)
GEOREG_DELTA(double)

#undef GEOREG_DELTA

}  // namespace georeg
