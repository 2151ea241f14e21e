#pragma once

// Cross-resolution interpolation. A fine node inherits the bilinear
// interpolation of the coarse displacement field at its own coordinate, then
// attends over the 3x3 coarse parents around that (undeformed) coordinate,
// whose keys and values see the parents' deformed positions relative to the
// inherited position. The attention output adds a learned correction.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "georeg/attention.hpp"
#include "georeg/geoprim.hpp"
#include "georeg/params.hpp"
#include "georeg/tensor.hpp"

namespace georeg {

struct DeltaConfig {
  std::size_t k = 3;
};

template <class T>
struct DeltaParams {
  AttentionParams<T> attn;   // query from fine features, keys from coarse
  ad::Tensor<T> projection;  // (4B, d_coarse)
  ad::Tensor<T> head;        // (d_fine, 2), zero at initialization
};

template <class T>
DeltaParams<T> init_delta(std::size_t d_fine, std::size_t d_coarse, std::size_t bands, ad::Rng& rng);

template <class T>
void for_each_param(DeltaParams<T>& p, const std::string& prefix,
                    const ad::ParamVisitor<T>& fn);

// Throws std::invalid_argument unless coarse is the level right above fine
// with half the extents.
void check_adjacent(const GridSpec& fine, const GridSpec& coarse);

// Bilinear interpolation of coarse_field (Pc,2) at every fine node,
// clamping at borders. Returns (Pf,2); differentiable in the field.
template <class T>
ad::Tensor<T> naive_inherit(const GridSpec& fine, const GridSpec& coarse, const ad::Tensor<T>& coarse_field);

template <class T>
struct DeltaOutput {
  ad::Tensor<T> inherited;  // u_inh, (Pf,2)
  ad::Tensor<T> initial;    // U^r_0 = u_inh + correction
  ad::Tensor<T> weights;    // (Pf, k*k); undefined when the learned term is off
  std::vector<std::int32_t> parent_indices;
};

// fine_rows (Pf, d_fine), coarse_rows (Pc, d_coarse), coarse_coords (Pc,2).
// With learned == false the output is the inheritance alone.
template <class T>
DeltaOutput<T> delta_apply(const GridSpec& fine, const ad::Tensor<T>& fine_rows, const ad::Tensor<T>& fine_coords,
                           const GridSpec& coarse, const ad::Tensor<T>& coarse_rows,
                           const ad::Tensor<T>& coarse_coords, const ad::Tensor<T>& coarse_field,
                           const DeltaParams<T>& params, const DeltaConfig& cfg, const FourierConfig& fourier,
                           bool learned = true);

}  // namespace georeg
