#pragma once

// Dense tensors with a define-by-run reverse-mode tape.
//
// A Tensor is a cheap handle onto a shared Node holding the shape, values and
// (after backward) the gradient. Every differentiable operation whose inputs
// require gradients appends one entry to the calling thread's Tape; backward()
// walks that tape in exact reverse recording order.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace georeg::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until a backward pass reaches the node
  bool requires_grad = false;
  std::string name;
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T fill, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> values() const { return node_->value; }
  std::span<T> mutable_values() { return node_->value; }
  T item() const;
  T at(std::size_t flat) const { return node_->value.at(flat); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad();
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  const std::string& name() const { return node_->name; }
  void set_name(std::string n) { node_->name = std::move(n); }

  // Fresh leaf with copied values; never shares a node with *this.
  Tensor clone(bool requires_grad = false) const;
  // Same values, no tape history, requires_grad false.
  Tensor detach() const { return clone(false); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
struct TapeEntry {
  std::string op;
  std::vector<std::shared_ptr<Node<T>>> inputs;
  std::shared_ptr<Node<T>> output;
  std::function<void()> backward;
};

// Per-thread ordered record of differentiable operations.
template <class T>
class Tape {
 public:
  static Tape& current();

  void record(TapeEntry<T> entry) { entries_.push_back(std::move(entry)); }
  const std::vector<TapeEntry<T>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  bool enabled() const { return enabled_; }
  void set_enabled(bool on) { enabled_ = on; }

 private:
  std::vector<TapeEntry<T>> entries_;
  bool enabled_ = true;
};

// Clears the current thread's tape on scope exit.
template <class T>
class TapeScope {
 public:
  TapeScope() { Tape<T>::current().clear(); }
  ~TapeScope() { Tape<T>::current().clear(); }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
};

// Disables recording for the current thread while alive.
template <class T>
class NoGradGuard {
 public:
  NoGradGuard() : prev_(Tape<T>::current().enabled()) { Tape<T>::current().set_enabled(false); }
  ~NoGradGuard() { Tape<T>::current().set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// True when recording is enabled and any input requires a gradient.
template <class T>
bool needs_record(std::initializer_list<const Tensor<T>*> inputs);
template <class T>
bool needs_record(const std::vector<Tensor<T>>& inputs);

// Builds the output node for a custom operation. When recording is needed the
// output is marked requires_grad and `backward` is appended to the tape; it
// receives the output gradient and must accumulate into inputs via
// accumulate_grad().
template <class T>
Tensor<T> make_result(const std::string& op, Shape shape, std::vector<T> values,
                      const std::vector<Tensor<T>>& inputs,
                      std::function<void(const Node<T>& out)> backward);

// Adds `g` into the gradient buffer of `t` if it requires grad, allocating zeros first.
template <class T>
void accumulate_grad(Node<T>& t, std::span<const T> g);
template <class T>
std::vector<T>& grad_buffer(Node<T>& t);

// Reverse pass from a scalar root. Intermediate gradients recorded on the tape
// are reset first; leaf gradients accumulate.
template <class T>
void backward(const Tensor<T>& root);

}  // namespace georeg::ad
