#pragma once

// In-resolution deformation operator. Every source node carries a position
// phi_n = phi_0 + sum of its displacements so far. One step attends from the
// node's source feature to (a) the target nodes around round(phi_n), which
// move with the point, and (b) the source nodes around phi_0, which never
// move, then maps the summed attention outputs to a displacement.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "georeg/attention.hpp"
#include "georeg/geoprim.hpp"
#include "georeg/params.hpp"
#include "georeg/tensor.hpp"

namespace georeg {

struct TauConfig {
  std::size_t iterations = 4;
  std::size_t k_target = 3;
  std::size_t k_source = 3;
};

template <class T>
struct TauParams {
  AttentionParams<T> target;
  AttentionParams<T> source;
  ad::Tensor<T> projection;  // (4B, d)
  ad::Tensor<T> head;        // (d, 2), zero at initialization
};

template <class T>
TauParams<T> init_tau(std::size_t d, std::size_t bands, ad::Rng& rng);

template <class T>
void for_each_param(TauParams<T>& p, const std::string& prefix,
                    const ad::ParamVisitor<T>& fn);

template <class T>
struct DeformationState {
  ad::Tensor<T> start;       // phi_0, (P,2) finest-pixel units
  ad::Tensor<T> cumulative;  // sum of displacements so far, (P,2)
  std::size_t step = 0;

  ad::Tensor<T> position() const;
};

template <class T>
DeformationState<T> initial_state(const ad::Tensor<T>& start);

// Features of one pyramid level of both streams, as (P, d) rows over `grid`.
template <class T>
struct TauLevelInputs {
  GridSpec grid;
  ad::Tensor<T> source_rows;
  ad::Tensor<T> target_rows;
  ad::Tensor<T> target_map;  // (d,H,W); used only when feature_warp is set
  ad::Tensor<T> coords;      // (P,2) node coordinates
  bool feature_warp = false;
};

template <class T>
struct TauStepResult {
  ad::Tensor<T> u;  // (P,2)
  std::vector<std::int32_t> target_indices;
  std::vector<std::int32_t> target_centers;
  std::vector<std::int32_t> source_indices;
  ad::Tensor<T> target_weights;
  ad::Tensor<T> source_weights;
};

// Displacements are the head output scaled by the level's grid spacing, so a
// unit of head output is one node at this level.
//
// With feature_warp the target stream is resampled at phi_n instead, and its
// neighborhood is the fixed grid block around phi_0 with static offsets.
template <class T>
TauStepResult<T> tau_step(const DeformationState<T>& state, const TauLevelInputs<T>& level,
                          const TauParams<T>& params, const TauConfig& cfg, const FourierConfig& fourier);

template <class T>
struct RefineResult {
  DeformationState<T> state;
  std::vector<TauStepResult<T>> steps;
  std::vector<ad::Tensor<T>> positions;  // phi_1 .. phi_N
};

template <class T>
RefineResult<T> refine(const DeformationState<T>& state, const TauLevelInputs<T>& level,
                       const TauParams<T>& params, const TauConfig& cfg, const FourierConfig& fourier,
                       std::size_t steps);

}  // namespace georeg
