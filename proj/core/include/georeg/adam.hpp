#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "georeg/params.hpp"

namespace georeg::ad {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m;  // first moments, parallel to ParamStore order
  std::vector<std::vector<T>> v;  // second moments
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& param)
      : std::runtime_error("non-finite gradient in parameter '" + param + "'"), param_(param) {}
  const std::string& param() const { return param_; }

 private:
  std::string param_;
};

// One bias-corrected ADAM update using the gradients currently stored on the
// parameters. Parameters without a gradient buffer are treated as zero-gradient.
// Throws NonFiniteGradient before touching any parameter.
template <class T>
void adam_step(ParamStore<T>& params, AdamState<T>& state, const AdamConfig& cfg);

}  // namespace georeg::ad
