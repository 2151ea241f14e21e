#include "georeg/params.hpp"

#include <cmath>
#include <stdexcept>

namespace georeg::ad {

template <class T>
void ParamStore<T>::add(const std::string& name, Tensor<T> t) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  t.set_name(name);
  t.set_requires_grad(true);
  items_.emplace_back(name, std::move(t));
}

template <class T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw std::out_of_range("unknown parameter: " + name);
}

template <class T>
bool ParamStore<T>::contains(const std::string& name) const {
  for (const auto& item : items_) {
    if (item.first == name) return true;
  }
  return false;
}

template <class T>
std::size_t ParamStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& item : items_) n += item.second.numel();
  return n;
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (auto& item : items_) {
    Tensor<T> t = item.second;
    t.zero_grad();
  }
}

template <class T>
Tensor<T> kaiming_uniform(const Shape& shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(3.0 / double(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = T(dist(rng));
  return Tensor<T>::from(shape, std::move(v), true);
}

template class ParamStore<float>;
template class ParamStore<double>;
template Tensor<float> kaiming_uniform<float>(const Shape&, std::size_t, Rng&);
template Tensor<double> kaiming_uniform<double>(const Shape&, std::size_t, Rng&);

}  // namespace georeg::ad
