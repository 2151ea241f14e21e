#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "georeg/tensor.hpp"

namespace georeg::ad {

// Ordered, named collection of learnable leaves. Order is insertion order and
// defines checkpoint layout and optimizer state layout.
template <class T>
class ParamStore {
 public:
  void add(const std::string& name, Tensor<T> t);
  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;
  const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }

  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
};

using Rng = std::mt19937_64;

// Callback over named parameters; non-deduced so lambdas bind directly.
template <class T>
using ParamVisitor = std::type_identity_t<std::function<void(const std::string&, Tensor<T>&)>>;

// Uniform(-bound, bound) with bound = sqrt(3 / fan_in).
template <class T>
Tensor<T> kaiming_uniform(const Shape& shape, std::size_t fan_in, Rng& rng);

}  // namespace georeg::ad
