#pragma once

// Run configuration: UTF-8 text, one `key = value` per line, `#` starts a
// comment. Lists are comma-separated. Unknown keys are rejected.

#include <cstdint>
#include <string>
#include <vector>

#include "georeg/errors.hpp"
#include "georeg/synth.hpp"

namespace georeg {

class ConfigError : public DataError {
 public:
  using DataError::DataError;
};

struct RunConfig {
  // model
  std::vector<std::size_t> channels{16, 32, 64};
  std::size_t blocks_per_level = 2;
  bool share_encoder = true;
  std::vector<std::size_t> tau_iterations;  // per level, finest first; empty = default rule
  std::vector<std::size_t> tau_k_target;    // per level; empty = 5 at the coarsest, 3 elsewhere
  std::size_t tau_k_source = 3;
  std::size_t delta_k = 3;
  bool feature_warp = false;
  std::size_t fourier_bands = 6;
  double fourier_sigma = 1.0;

  // objective
  double lambda = 0.05;
  std::vector<double> alpha;  // per level; empty = all 1

  // optimizer
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  // training
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  std::size_t train_pairs = 2000;  // pairs drawn per epoch
  std::size_t val_pairs = 16;      // fixed pairs scored after every epoch
  std::size_t test_pairs = 200;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  // data
  std::string dataset = "mnist";  // mnist | synthetic
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::size_t synth_size = 64;
  SyntheticSpec synth;

  std::string out_dir = "run";
};

// Default iteration rule: `iters` at the two coarsest levels, none at the
// finest (interpolation only), one step in between.
std::vector<std::size_t> default_tau_iterations(std::size_t levels, std::size_t iters = 4);
std::vector<std::size_t> default_tau_k_target(std::size_t levels);

// Fills empty per-level lists and validates ranges. Throws ConfigError.
void finalize(RunConfig& cfg);

// `origin` names the source in error messages. Relative data paths are
// resolved against `base_dir` when it is non-empty.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>",
                       const std::string& base_dir = "");
RunConfig load_config(const std::string& path);

std::string to_text(const RunConfig& cfg);

}  // namespace georeg
