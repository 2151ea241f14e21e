#include "georeg/tensor.hpp"

#include <sstream>

namespace georeg::ad {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {

void check_shape(const Shape& shape, std::size_t n) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != n) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " given " + std::to_string(n) +
                     " values");
  }
}

}  // namespace

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T fill, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<T>(n, fill), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  check_shape(shape, values.size());
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <class T>
Tensor<T> Tensor<T>::scalar(T v) {
  return from({1}, {v});
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <class T>
std::span<T> Tensor<T>::mutable_grad() {
  return grad_buffer(*node_);
}

template <class T>
void Tensor<T>::zero_grad() {
  node_->grad.assign(node_->value.size(), T(0));
}

template <class T>
Tensor<T> Tensor<T>::clone(bool requires_grad) const {
  auto t = from(node_->shape, node_->value, requires_grad);
  t.set_name(node_->name);
  return t;
}

template <class T>
Tape<T>& Tape<T>::current() {
  thread_local Tape<T> tape;
  return tape;
}

template <class T>
bool needs_record(std::initializer_list<const Tensor<T>*> inputs) {
  if (!Tape<T>::current().enabled()) return false;
  for (auto* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <class T>
bool needs_record(const std::vector<Tensor<T>>& inputs) {
  if (!Tape<T>::current().enabled()) return false;
  for (const auto& t : inputs) {
    if (t.defined() && t.requires_grad()) return true;
  }
  return false;
}

template <class T>
std::vector<T>& grad_buffer(Node<T>& t) {
  if (t.grad.empty()) t.grad.assign(t.value.size(), T(0));
  return t.grad;
}

template <class T>
void accumulate_grad(Node<T>& t, std::span<const T> g) {
  if (!t.requires_grad) return;
  auto& buf = grad_buffer(t);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

template <class T>
Tensor<T> make_result(const std::string& op, Shape shape, std::vector<T> values,
                      const std::vector<Tensor<T>>& inputs,
                      std::function<void(const Node<T>& out)> backward) {
  Tensor<T> out = Tensor<T>::from(std::move(shape), std::move(values));
  if (!needs_record(inputs)) return out;
  out.set_requires_grad(true);
  TapeEntry<T> e;
  e.op = op;
  e.inputs.reserve(inputs.size());
  for (const auto& in : inputs) e.inputs.push_back(in.shared());
  e.output = out.shared();
  Node<T>* raw = out.node();
  e.backward = [raw, fn = std::move(backward)]() { fn(*raw); };
  Tape<T>::current().record(std::move(e));
  return out;
}

template <class T>
void backward(const Tensor<T>& root) {
  if (!root.defined() || root.numel() != 1) {
    throw ShapeError("backward() requires a scalar root, got " +
                     (root.defined() ? shape_str(root.shape()) : std::string("undefined")));
  }
  auto& entries = Tape<T>::current().entries();
  for (const auto& e : entries) e.output->grad.clear();
  Node<T>& r = *root.node();
  if (!r.requires_grad) return;
  grad_buffer(r)[0] += T(1);
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not reachable from root
    it->backward();
  }
}

#define GEOREG_INSTANTIATE(T)                                                                 \
  template class Tensor<T>;                                                                   \
  template class Tape<T>;                                                                     \
  template bool needs_record<T>(std::initializer_list<const Tensor<T>*>);                     \
  template bool needs_record<T>(const std::vector<Tensor<T>>&);                               \
  template std::vector<T>& grad_buffer<T>(Node<T>&);                                          \
  template void accumulate_grad<T>(Node<T>&, std::span<const T>);                             \
  template Tensor<T> make_result<T>(const std::string&, Shape, std::vector<T>,                \
                                    const std::vector<Tensor<T>>&,                            \
                                    std::function<void(const Node<T>&)>);                     \
  template void backward<T>(const Tensor<T>&);

GEOREG_INSTANTIATE(float)
GEOREG_INSTANTIATE(double)

#undef GEOREG_INSTANTIATE

}  // namespace georeg::ad
