#include "georeg/attention.hpp"

#include <cmath>

#include "georeg/ops.hpp"

namespace georeg {

template <class T>
AttentionParams<T> init_attention(std::size_t d_query, std::size_t d_key, std::size_t d_attn, ad::Rng& rng) {
  AttentionParams<T> p;
  p.wq = ad::kaiming_uniform<T>({d_query, d_attn}, d_query, rng);
  p.wk = ad::kaiming_uniform<T>({d_key, d_attn}, d_key, rng);
  p.wv = ad::kaiming_uniform<T>({d_key, d_attn}, d_key, rng);
  return p;
}

template <class T>
ad::Tensor<T> feature_rows(const ad::Tensor<T>& features) {
  if (features.rank() != 3) {
    throw ad::ShapeError("feature_rows: expected (C,H,W), got " + ad::shape_str(features.shape()));
  }
  const std::size_t C = features.dim(0);
  return ad::transpose(ad::reshape(features, {C, features.dim(1) * features.dim(2)}));
}

template <class T>
ad::Tensor<T> repeat_rows(const ad::Tensor<T>& x, std::size_t m) {
  const std::size_t P = x.dim(0), w = x.dim(1);
  auto b = ad::broadcast_to(ad::reshape(x, {P, 1, w}), {P, m, w});
  return ad::reshape(b, {P * m, w});
}

template <class T>
AttentionOutput<T> local_cross_attention(const ad::Tensor<T>& query_features,
                                         const ad::Tensor<T>& grid_features,
                                         const std::vector<std::int32_t>& indices,
                                         const ad::Tensor<T>& offsets, const AttentionParams<T>& params,
                                         const ad::Tensor<T>& projection, const FourierConfig& fourier,
                                         const std::string& context) {
  const std::size_t P = query_features.dim(0);
  if (P == 0 || indices.size() % P) {
    throw ad::ShapeError(context + ": " + std::to_string(indices.size()) + " neighbor indices for " +
                         std::to_string(P) + " queries");
  }
  const std::size_t M = indices.size() / P;
  const std::size_t da = params.wq.dim(1);
  if (offsets.rank() != 2 || offsets.dim(0) != P * M || offsets.dim(1) != 2) {
    throw ad::ShapeError(context + ": offsets " + ad::shape_str(offsets.shape()) + " for " +
                         std::to_string(P) + "x" + std::to_string(M) + " neighbors");
  }

  auto q = ad::reshape(ad::matmul(query_features, params.wq), {P, 1, da});
  auto gamma = fourier_features(offsets, fourier);  // (P*M, 4B)
  auto key_base = ad::gather_rows(ad::matmul(grid_features, params.wk), indices);
  auto val_base = ad::gather_rows(ad::matmul(grid_features, params.wv), indices);
  auto keys = ad::add(key_base, ad::matmul(gamma, ad::matmul(projection, params.wk)));
  auto vals = ad::add(val_base, ad::matmul(gamma, ad::matmul(projection, params.wv)));

  auto logits = ad::scale(ad::bmm(q, ad::reshape(keys, {P, M, da}), true), T(1.0 / std::sqrt(double(da))));
  for (T v : logits.values()) {
    if (!std::isfinite(v)) throw NonFiniteLogits("non-finite attention logits at " + context);
  }
  auto w = ad::softmax(logits, 2);  // (P,1,M)
  auto out = ad::reshape(ad::bmm(w, ad::reshape(vals, {P, M, da})), {P, da});
  return {out, ad::reshape(w, {P, M})};
}

#define GEOREG_ATT(T)                                                                            \
  template AttentionParams<T> init_attention<T>(std::size_t, std::size_t, std::size_t, ad::Rng&); \
  template ad::Tensor<T> feature_rows<T>(const ad::Tensor<T>&);                                  \
  template ad::Tensor<T> repeat_rows<T>(const ad::Tensor<T>&, std::size_t);                      \
  template AttentionOutput<T> local_cross_attention<T>(                                          \
      const ad::Tensor<T>&, const ad::Tensor<T>&, const std::vector<std::int32_t>&,              \
      const ad::Tensor<T>&, const AttentionParams<T>&, const ad::Tensor<T>&, const FourierConfig&, \
      const std::string&);

GEOREG_ATT(float)
GEOREG_ATT(double)

#undef GEOREG_ATT

}  // namespace georeg
