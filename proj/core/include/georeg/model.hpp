#pragma once

// Full coarse-to-fine registration network: shared (or twin) encoder,
// refinement at the coarsest level starting from the undeformed grid, then
// for every finer level an interpolation step followed by optional
// refinement. All displacements are kept in finest-pixel units.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "georeg/adam.hpp"
#include "georeg/checkpoint.hpp"
#include "georeg/config.hpp"
#include "georeg/delta.hpp"
#include "georeg/encoder.hpp"
#include "georeg/geoprim.hpp"
#include "georeg/image.hpp"
#include "georeg/objectives.hpp"
#include "georeg/params.hpp"
#include "georeg/tau.hpp"

namespace georeg {

struct ModelConfig {
  EncoderConfig encoder;
  bool share_encoder = true;
  std::vector<std::size_t> tau_iterations;  // per level, finest first
  std::vector<std::size_t> tau_k_target;
  std::size_t tau_k_source = 3;
  DeltaConfig delta;
  bool feature_warp = false;
  FourierConfig fourier;
  std::size_t height = 28;
  std::size_t width = 28;

  std::size_t levels() const { return encoder.levels(); }
  GridSpec grid(std::size_t level) const;
  void validate() const;
};

ModelConfig model_config(const RunConfig& cfg, std::size_t height, std::size_t width);

template <class T>
struct ModelParams {
  EncoderParams<T> source_encoder;
  std::optional<EncoderParams<T>> target_encoder;
  std::vector<std::optional<TauParams<T>>> tau;      // per level
  std::vector<std::optional<DeltaParams<T>>> delta;  // entry r maps level r+1 onto r
};

template <class T>
ModelParams<T> init_model(const ModelConfig& cfg, std::uint64_t seed);

// Visits every learnable tensor in a fixed order with a stable name.
template <class T>
void for_each_param(ModelParams<T>& p, const ad::ParamVisitor<T>& fn);

template <class T>
ad::ParamStore<T> param_store(ModelParams<T>& p);

template <class T>
struct LevelTrace {
  GridSpec grid;
  ad::Tensor<T> inherited;  // bilinear inheritance; undefined at the coarsest level
  ad::Tensor<T> initial;    // displacement before refinement, (P,2)
  std::vector<ad::Tensor<T>> steps;  // u_1 .. u_N
  ad::Tensor<T> final;      // displacement after refinement
  std::vector<TauStepResult<T>> tau_steps;
  ad::Tensor<T> delta_weights;
};

template <class T>
struct ForwardTrace {
  std::vector<LevelTrace<T>> levels;  // finest first
  const ad::Tensor<T>& field() const { return levels.front().final; }
};

// source, target: (1,H,W).
template <class T>
ForwardTrace<T> forward(const ModelParams<T>& params, const ModelConfig& cfg, const ad::Tensor<T>& source,
                        const ad::Tensor<T>& target);

template <class T>
struct LossTrace {
  ad::Tensor<T> total;
  std::vector<LevelTerms<T>> levels;
};

template <class T>
LossTrace<T> multires_loss(const ForwardTrace<T>& trace, const ModelConfig& cfg, const ad::Tensor<T>& source,
                           const ad::Tensor<T>& target, const LossWeights& weights);

// Parameters plus optimizer state and progress; the unit that is checkpointed.
struct ModelBundle {
  ModelConfig config;
  ModelParams<float> params;
  ad::AdamState<float> adam;
  std::uint64_t epoch = 0;

  std::size_t parameter_count();
};

ModelBundle build_model(const ModelConfig& cfg, std::uint64_t seed);

std::vector<NamedArray> to_checkpoint(ModelBundle& bundle);
ModelBundle from_checkpoint(const std::vector<NamedArray>& entries);
void save_bundle(const std::string& path, ModelBundle& bundle);
ModelBundle load_bundle(const std::string& path);

// Field of one level from a (P,2) finest-unit displacement tensor, expressed
// in that level's pixel units.
DeformationField level_field(const ad::Tensor<float>& disp, const GridSpec& grid);

}  // namespace georeg
