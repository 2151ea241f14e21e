#pragma once

// Differentiable primitives. Each records itself on the current tape when any
// input requires a gradient. Shape mismatches raise ShapeError naming the
// primitive and the offending shapes.

#include <cstdint>
#include <vector>

#include "georeg/tensor.hpp"

namespace georeg::ad {

// Elementwise with numpy-style broadcasting over trailing dimensions.
template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <class T> Tensor<T> neg(const Tensor<T>& a);
template <class T> Tensor<T> scale(const Tensor<T>& a, T c);
template <class T> Tensor<T> add_scalar(const Tensor<T>& a, T c);
template <class T> Tensor<T> square(const Tensor<T>& a);
template <class T> Tensor<T> sqrt(const Tensor<T>& a);
template <class T> Tensor<T> sin(const Tensor<T>& a);
template <class T> Tensor<T> cos(const Tensor<T>& a);
template <class T> Tensor<T> leaky_relu(const Tensor<T>& a, T slope = T(0.01));

// Explicit broadcast to a compatible larger shape.
template <class T> Tensor<T> broadcast_to(const Tensor<T>& a, const Shape& shape);

// (m,k) x (k,n) -> (m,n)
template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// (B,m,k) x (B,k,n) -> (B,m,n); with transpose_b, b is (B,n,k).
template <class T> Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);
template <class T> Tensor<T> transpose(const Tensor<T>& a);
template <class T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);

// x: (C,H,W), weight: (O,C,kh,kw), bias: (O) or undefined. Zero padding.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t pad);
// 2x2 average pooling with stride 2 over (C,H,W); H and W must be even.
template <class T> Tensor<T> avgpool2d(const Tensor<T>& x);

template <class T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis);
template <class T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);
// Selects rows along axis 0; indices may repeat.
template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::int32_t>& indices);

template <class T> Tensor<T> sum(const Tensor<T>& x);
template <class T> Tensor<T> mean(const Tensor<T>& x);
template <class T> Tensor<T> sum_axis(const Tensor<T>& x, std::size_t axis);

// Bilinear sampling of img (C,H,W) at continuous index-space positions
// coords (P,2) = (row, col). Positions are clamped to the image extent.
// Returns (P,C). Differentiable in both img and coords.
template <class T> Tensor<T> bilinear_sample(const Tensor<T>& img, const Tensor<T>& coords);

// Converts between precisions; the result is a leaf.
template <class To, class From> Tensor<To> cast(const Tensor<From>& x, bool requires_grad = false);

}  // namespace georeg::ad
