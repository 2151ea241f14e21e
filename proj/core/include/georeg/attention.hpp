#pragma once

// Single-head local cross-attention with position-aware keys and values.
//
// For query point p with neighbors n in N(p):
//   K_pn = (F_n + E(offset_pn)) W_K,  V_pn = (F_n + E(offset_pn)) W_V
//   out_p = softmax_n(q_p . K_pn / sqrt(d)) V_pn,  q_p = f_p W_Q
// E(D) = fourier(D) P. Since (F + gamma P) W = F W + gamma (P W), grid
// features are projected once and gathered afterwards.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "georeg/geoprim.hpp"
#include "georeg/params.hpp"
#include "georeg/tensor.hpp"

namespace georeg {

class NonFiniteLogits : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
struct AttentionParams {
  ad::Tensor<T> wq;  // (d_query, d_attn)
  ad::Tensor<T> wk;  // (d_key, d_attn)
  ad::Tensor<T> wv;  // (d_key, d_attn)
};

template <class T>
AttentionParams<T> init_attention(std::size_t d_query, std::size_t d_key, std::size_t d_attn, ad::Rng& rng);

template <class T>
struct AttentionOutput {
  ad::Tensor<T> out;      // (P, d_attn)
  ad::Tensor<T> weights;  // (P, M), rows sum to one
};

// query_features (P, d_query); grid_features (G, d_key); indices P*M rows of
// grid_features; offsets (P*M, 2) neighbor-minus-query in pixel units;
// projection (4B, d_key). `context` names the call site in error messages.
template <class T>
AttentionOutput<T> local_cross_attention(const ad::Tensor<T>& query_features,
                                         const ad::Tensor<T>& grid_features,
                                         const std::vector<std::int32_t>& indices,
                                         const ad::Tensor<T>& offsets, const AttentionParams<T>& params,
                                         const ad::Tensor<T>& projection, const FourierConfig& fourier,
                                         const std::string& context);

// (C,H,W) feature map -> (H*W, C) rows.
template <class T>
ad::Tensor<T> feature_rows(const ad::Tensor<T>& features);

// Repeats each row of x (P, w) m times -> (P*m, w).
template <class T>
ad::Tensor<T> repeat_rows(const ad::Tensor<T>& x, std::size_t m);

}  // namespace georeg
