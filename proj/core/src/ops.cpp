#include "georeg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

namespace georeg::ad {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// Product of copies held in Eigen-owned storage. Eigen's kernels peel
// differently depending on operand alignment, so multiplying maps over
// tensor storage directly rounds differently from one allocation to the next.
template <class T, class A, class B>
RowMat<T> product(const A& a, const B& b) {
  const RowMat<T> x = a;
  const RowMat<T> y = b;
  return x * y;
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const std::string& why) {
  throw ShapeError(std::string(op) + ": " + why + ", got " + shape_str(a));
}

// Flat input offsets for every output element of a broadcast binary op.
struct BroadcastPlan {
  Shape out;
  bool same = false;
  std::vector<std::size_t> ia;
  std::vector<std::size_t> ib;
};

std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  const std::size_t off = r - in.size();
  std::vector<std::size_t> stride(r, 0);
  std::size_t s = 1;
  for (std::size_t d = r; d-- > off;) {
    const std::size_t e = in[d - off];
    stride[d] = e == 1 ? 0 : s;
    s *= e;
  }
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> idx(n);
  std::vector<std::size_t> counter(r, 0);
  std::size_t flat = 0;
  for (std::size_t i = 0; i < n; ++i) {
    idx[i] = flat;
    for (std::size_t d = r; d-- > 0;) {
      ++counter[d];
      flat += stride[d];
      if (counter[d] < out[d]) break;
      flat -= stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  return idx;
}

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (ea != eb && ea != 1 && eb != 1) shape_fail(op, a, b);
    out[i] = std::max(ea, eb);
  }
  return out;
}

BroadcastPlan plan(const char* op, const Shape& a, const Shape& b) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  p.out = broadcast_shape(op, a, b);
  p.ia = broadcast_index(a, p.out);
  p.ib = broadcast_index(b, p.out);
  return p;
}

template <class T, class F, class GA, class GB>
Tensor<T> binary(const char* op, const Tensor<T>& a, const Tensor<T>& b, F f, GA ga, GB gb) {
  auto p = std::make_shared<BroadcastPlan>(plan(op, a.shape(), b.shape()));
  const std::size_t n = shape_numel(p->out);
  std::vector<T> out(n);
  const auto va = a.values();
  const auto vb = b.values();
  if (p->same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(va[i], vb[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(va[p->ia[i]], vb[p->ib[i]]);
  }
  return make_result<T>(op, p->out, std::move(out), {a, b}, [a, b, p, ga, gb](const Node<T>& o) {
    const auto& g = o.grad;
    const auto va = a.values();
    const auto vb = b.values();
    const std::size_t n = g.size();
    if (a.requires_grad()) {
      auto& da = grad_buffer(*a.node());
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ia = p->same ? i : p->ia[i];
        const std::size_t ib = p->same ? i : p->ib[i];
        da[ia] += ga(va[ia], vb[ib], g[i]);
      }
    }
    if (b.requires_grad()) {
      auto& db = grad_buffer(*b.node());
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ia = p->same ? i : p->ia[i];
        const std::size_t ib = p->same ? i : p->ib[i];
        db[ib] += gb(va[ia], vb[ib], g[i]);
      }
    }
  });
}

template <class T, class F, class G>
Tensor<T> unary(const char* op, const Tensor<T>& a, F f, G dfdx) {
  std::vector<T> out(a.numel());
  const auto va = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(va[i]);
  return make_result<T>(op, a.shape(), std::move(out), {a}, [a, dfdx](const Node<T>& o) {
    auto& da = grad_buffer(*a.node());
    const auto va = a.values();
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += o.grad[i] * dfdx(va[i], o.value[i]);
  });
}

std::size_t prod(const Shape& s, std::size_t from, std::size_t to) {
  std::size_t n = 1;
  for (std::size_t i = from; i < to; ++i) n *= s[i];
  return n;
}

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T, T g) { return g; },
      [](T, T, T g) { return g; });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T, T g) { return g; },
      [](T, T, T g) { return -g; });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y, T g) { return g * y; },
      [](T x, T, T g) { return g * x; });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary<T>(
      "div", a, b, [](T x, T y) { return x / y; }, [](T, T y, T g) { return g / y; },
      [](T x, T y, T g) { return -g * x / (y * y); });
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
  return scale(a, T(-1));
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  return unary<T>(
      "scale", a, [c](T x) { return x * c; }, [c](T, T) { return c; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  return unary<T>(
      "add_scalar", a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> square(const Tensor<T>& a) {
  return unary<T>(
      "square", a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <class T>
Tensor<T> sqrt(const Tensor<T>& a) {
  return unary<T>(
      "sqrt", a, [](T x) { return std::sqrt(x); }, [](T, T y) { return T(0.5) / y; });
}

template <class T>
Tensor<T> sin(const Tensor<T>& a) {
  return unary<T>(
      "sin", a, [](T x) { return std::sin(x); }, [](T x, T) { return std::cos(x); });
}

template <class T>
Tensor<T> cos(const Tensor<T>& a) {
  return unary<T>(
      "cos", a, [](T x) { return std::cos(x); }, [](T x, T) { return -std::sin(x); });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  return unary<T>(
      "leaky_relu", a, [slope](T x) { return x > T(0) ? x : slope * x; },
      [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <class T>
Tensor<T> broadcast_to(const Tensor<T>& a, const Shape& shape) {
  if (broadcast_shape("broadcast_to", a.shape(), shape) != shape) {
    shape_fail("broadcast_to", a.shape(), shape);
  }
  if (a.shape() == shape) return a;
  auto idx = std::make_shared<std::vector<std::size_t>>(broadcast_index(a.shape(), shape));
  std::vector<T> out(idx->size());
  const auto va = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[(*idx)[i]];
  return make_result<T>("broadcast_to", shape, std::move(out), {a}, [a, idx](const Node<T>& o) {
    auto& da = grad_buffer(*a.node());
    for (std::size_t i = 0; i < o.grad.size(); ++i) da[(*idx)[i]] += o.grad[i];
  });
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_fail("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  MapMat<T>(out.data(), m, n) =
      product<T>(CMapMat<T>(a.values().data(), m, k), CMapMat<T>(b.values().data(), k, n));
  return make_result<T>("matmul", {m, n}, std::move(out), {a, b}, [a, b, m, k, n](const Node<T>& o) {
    CMapMat<T> g(o.grad.data(), m, n);
    if (a.requires_grad()) {
      MapMat<T>(grad_buffer(*a.node()).data(), m, k) +=
          product<T>(g, CMapMat<T>(b.values().data(), k, n).transpose());
    }
    if (b.requires_grad()) {
      MapMat<T>(grad_buffer(*b.node()).data(), k, n) +=
          product<T>(CMapMat<T>(a.values().data(), m, k).transpose(), g);
    }
  });
}

template <class T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) shape_fail("bmm", a.shape(), b.shape());
  const std::size_t B = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  if ((transpose_b ? b.dim(2) : b.dim(1)) != k) shape_fail("bmm", a.shape(), b.shape());
  std::vector<T> out(B * m * n, T(0));
  const auto va = a.values();
  const auto vb = b.values();
  // b element (batch, row kk, col j) in its stored layout
  auto bidx = [=](std::size_t bt, std::size_t kk, std::size_t j) {
    return transpose_b ? (bt * n + j) * k + kk : (bt * k + kk) * n + j;
  };
  for (std::size_t bt = 0; bt < B; ++bt) {
    for (std::size_t i = 0; i < m; ++i) {
      const T* arow = &va[(bt * m + i) * k];
      T* orow = &out[(bt * m + i) * n];
      for (std::size_t j = 0; j < n; ++j) {
        T acc = T(0);
        for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * vb[bidx(bt, kk, j)];
        orow[j] = acc;
      }
    }
  }
  return make_result<T>("bmm", {B, m, n}, std::move(out), {a, b},
                        [a, b, B, m, k, n, bidx](const Node<T>& o) {
    const auto va = a.values();
    const auto vb = b.values();
    const auto& g = o.grad;
    if (a.requires_grad()) {
      auto& da = grad_buffer(*a.node());
      for (std::size_t bt = 0; bt < B; ++bt)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const T gij = g[(bt * m + i) * n + j];
            for (std::size_t kk = 0; kk < k; ++kk) da[(bt * m + i) * k + kk] += gij * vb[bidx(bt, kk, j)];
          }
    }
    if (b.requires_grad()) {
      auto& db = grad_buffer(*b.node());
      for (std::size_t bt = 0; bt < B; ++bt)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const T gij = g[(bt * m + i) * n + j];
            for (std::size_t kk = 0; kk < k; ++kk) db[bidx(bt, kk, j)] += gij * va[(bt * m + i) * k + kk];
          }
    }
  });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) shape_fail("transpose", a.shape(), "expected rank 2");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  MapMat<T>(out.data(), n, m) = CMapMat<T>(a.values().data(), m, n).transpose();
  return make_result<T>("transpose", {n, m}, std::move(out), {a}, [a, m, n](const Node<T>& o) {
    MapMat<T>(grad_buffer(*a.node()).data(), m, n) += CMapMat<T>(o.grad.data(), n, m).transpose();
  });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) shape_fail("reshape", a.shape(), shape);
  std::vector<T> out(a.values().begin(), a.values().end());
  return make_result<T>("reshape", std::move(shape), std::move(out), {a}, [a](const Node<T>& o) {
    accumulate_grad<T>(*a.node(), o.grad);
  });
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t pad) {
  if (x.rank() != 3 || weight.rank() != 4 || weight.dim(1) != x.dim(0)) {
    shape_fail("conv2d", x.shape(), weight.shape());
  }
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t O = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (H + 2 * pad < kh || W + 2 * pad < kw) shape_fail("conv2d", x.shape(), weight.shape());
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != O)) {
    shape_fail("conv2d", weight.shape(), bias.shape());
  }
  const std::size_t Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1;
  const std::size_t K = C * kh * kw, HWo = Ho * Wo;
  auto cols = std::make_shared<std::vector<T>>(K * HWo, T(0));
  const auto vx = x.values();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t dy = 0; dy < kh; ++dy)
      for (std::size_t dx = 0; dx < kw; ++dx) {
        T* row = &(*cols)[((c * kh + dy) * kw + dx) * HWo];
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const std::ptrdiff_t iy = std::ptrdiff_t(oy + dy) - std::ptrdiff_t(pad);
          if (iy < 0 || iy >= std::ptrdiff_t(H)) continue;
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            const std::ptrdiff_t ix = std::ptrdiff_t(ox + dx) - std::ptrdiff_t(pad);
            if (ix < 0 || ix >= std::ptrdiff_t(W)) continue;
            row[oy * Wo + ox] = vx[(c * H + iy) * W + ix];
          }
        }
      }
  std::vector<T> out(O * HWo);
  MapMat<T> om(out.data(), O, HWo);
  om = product<T>(CMapMat<T>(weight.values().data(), O, K), CMapMat<T>(cols->data(), K, HWo));
  if (bias.defined()) {
    const auto vb = bias.values();
    for (std::size_t o = 0; o < O; ++o) om.row(o).array() += vb[o];
  }
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>("conv2d", {O, Ho, Wo}, std::move(out), inputs,
                        [=](const Node<T>& o) {
    CMapMat<T> g(o.grad.data(), O, HWo);
    if (weight.requires_grad()) {
      MapMat<T>(grad_buffer(*weight.node()).data(), O, K) +=
          product<T>(g, CMapMat<T>(cols->data(), K, HWo).transpose());
    }
    if (bias.defined() && bias.requires_grad()) {
      auto& db = grad_buffer(*bias.node());
      for (std::size_t oc = 0; oc < O; ++oc) {
        T s = T(0);
        for (std::size_t p = 0; p < HWo; ++p) s += g(oc, p);
        db[oc] += s;
      }
    }
    if (x.requires_grad()) {
      std::vector<T> dcols(K * HWo);
      MapMat<T>(dcols.data(), K, HWo) = product<T>(CMapMat<T>(weight.values().data(), O, K).transpose(), g);
      auto& gx = grad_buffer(*x.node());
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t dy = 0; dy < kh; ++dy)
          for (std::size_t dx = 0; dx < kw; ++dx) {
            const T* row = &dcols[((c * kh + dy) * kw + dx) * HWo];
            for (std::size_t oy = 0; oy < Ho; ++oy) {
              const std::ptrdiff_t iy = std::ptrdiff_t(oy + dy) - std::ptrdiff_t(pad);
              if (iy < 0 || iy >= std::ptrdiff_t(H)) continue;
              for (std::size_t ox = 0; ox < Wo; ++ox) {
                const std::ptrdiff_t ix = std::ptrdiff_t(ox + dx) - std::ptrdiff_t(pad);
                if (ix < 0 || ix >= std::ptrdiff_t(W)) continue;
                gx[(c * H + iy) * W + ix] += row[oy * Wo + ox];
              }
            }
          }
    }
  });
}

template <class T>
Tensor<T> avgpool2d(const Tensor<T>& x) {
  if (x.rank() != 3 || x.dim(1) % 2 || x.dim(2) % 2) {
    shape_fail("avgpool2d", x.shape(), "expected (C,H,W) with even H and W");
  }
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2), Ho = H / 2, Wo = W / 2;
  std::vector<T> out(C * Ho * Wo);
  const auto v = x.values();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        const std::size_t b = (c * H + 2 * i) * W + 2 * j;
        out[(c * Ho + i) * Wo + j] = (v[b] + v[b + 1] + v[b + W] + v[b + W + 1]) * T(0.25);
      }
  return make_result<T>("avgpool2d", {C, Ho, Wo}, std::move(out), {x}, [=](const Node<T>& o) {
    auto& gx = grad_buffer(*x.node());
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          const T g = o.grad[(c * Ho + i) * Wo + j] * T(0.25);
          const std::size_t b = (c * H + 2 * i) * W + 2 * j;
          gx[b] += g;
          gx[b + 1] += g;
          gx[b + W] += g;
          gx[b + W + 1] += g;
        }
  });
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) shape_fail("softmax", x.shape(), "axis out of range");
  const std::size_t outer = prod(x.shape(), 0, axis), n = x.dim(axis);
  const std::size_t inner = prod(x.shape(), axis + 1, x.rank());
  std::vector<T> out(x.numel());
  const auto v = x.values();
  for (std::size_t a = 0; a < outer; ++a)
    for (std::size_t b = 0; b < inner; ++b) {
      const std::size_t base = a * n * inner + b;
      T mx = v[base];
      for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, v[base + i * inner]);
      T s = T(0);
      for (std::size_t i = 0; i < n; ++i) {
        const T e = std::exp(v[base + i * inner] - mx);
        out[base + i * inner] = e;
        s += e;
      }
      for (std::size_t i = 0; i < n; ++i) out[base + i * inner] /= s;
    }
  return make_result<T>("softmax", x.shape(), std::move(out), {x}, [=](const Node<T>& o) {
    auto& gx = grad_buffer(*x.node());
    for (std::size_t a = 0; a < outer; ++a)
      for (std::size_t b = 0; b < inner; ++b) {
        const std::size_t base = a * n * inner + b;
        T dot = T(0);
        for (std::size_t i = 0; i < n; ++i) dot += o.grad[base + i * inner] * o.value[base + i * inner];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t k = base + i * inner;
          gx[k] += o.value[k] * (o.grad[k] - dot);
        }
      }
  });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  if (axis >= s0.size()) shape_fail("concat", s0, "axis out of range");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const auto& t : xs) {
    if (t.rank() != s0.size()) shape_fail("concat", s0, t.shape());
    for (std::size_t d = 0; d < s0.size(); ++d) {
      if (d != axis && t.dim(d) != s0[d]) shape_fail("concat", s0, t.shape());
    }
    out_shape[axis] += t.dim(axis);
  }
  const std::size_t outer = prod(s0, 0, axis), inner = prod(s0, axis + 1, s0.size());
  const std::size_t total = out_shape[axis];
  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& t : xs) {
    offsets.push_back(off);
    const std::size_t len = t.dim(axis) * inner;
    const auto v = t.values();
    for (std::size_t a = 0; a < outer; ++a)
      std::copy_n(&v[a * len], len, &out[(a * total) * inner + off * inner]);
    off += t.dim(axis);
  }
  return make_result<T>("concat", out_shape, std::move(out), xs, [=](const Node<T>& o) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!xs[i].requires_grad()) continue;
      auto& g = grad_buffer(*xs[i].node());
      const std::size_t len = xs[i].dim(axis) * inner;
      for (std::size_t a = 0; a < outer; ++a)
        for (std::size_t j = 0; j < len; ++j) g[a * len + j] += o.grad[(a * total + offsets[i]) * inner + j];
    }
  });
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank() || length == 0 || start + length > x.dim(axis)) {
    shape_fail("slice", x.shape(), "range [" + std::to_string(start) + "," +
                                       std::to_string(start + length) + ") on axis " +
                                       std::to_string(axis) + " out of bounds");
  }
  const std::size_t outer = prod(x.shape(), 0, axis), n = x.dim(axis);
  const std::size_t inner = prod(x.shape(), axis + 1, x.rank());
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<T> out(outer * length * inner);
  const auto v = x.values();
  for (std::size_t a = 0; a < outer; ++a)
    std::copy_n(&v[(a * n + start) * inner], length * inner, &out[a * length * inner]);
  return make_result<T>("slice", out_shape, std::move(out), {x}, [=](const Node<T>& o) {
    auto& g = grad_buffer(*x.node());
    for (std::size_t a = 0; a < outer; ++a)
      for (std::size_t j = 0; j < length * inner; ++j) g[(a * n + start) * inner + j] += o.grad[a * length * inner + j];
  });
}

template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::int32_t>& indices) {
  if (x.rank() < 1 || indices.empty()) shape_fail("gather_rows", x.shape(), "empty gather");
  const std::size_t rows = x.dim(0), width = x.numel() / rows;
  for (auto i : indices) {
    if (i < 0 || std::size_t(i) >= rows) {
      shape_fail("gather_rows", x.shape(), "index " + std::to_string(i) + " out of range");
    }
  }
  Shape out_shape = x.shape();
  out_shape[0] = indices.size();
  std::vector<T> out(indices.size() * width);
  const auto v = x.values();
  for (std::size_t r = 0; r < indices.size(); ++r)
    std::copy_n(&v[std::size_t(indices[r]) * width], width, &out[r * width]);
  auto idx = std::make_shared<std::vector<std::int32_t>>(indices);
  return make_result<T>("gather_rows", out_shape, std::move(out), {x}, [=](const Node<T>& o) {
    auto& g = grad_buffer(*x.node());
    for (std::size_t r = 0; r < idx->size(); ++r) {
      T* dst = &g[std::size_t((*idx)[r]) * width];
      const T* src = &o.grad[r * width];
      for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
    }
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  const auto v = x.values();
  const T s = std::accumulate(v.begin(), v.end(), T(0));
  return make_result<T>("sum", {1}, {s}, {x}, [x](const Node<T>& o) {
    auto& g = grad_buffer(*x.node());
    for (auto& gi : g) gi += o.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / T(x.numel()));
}

template <class T>
Tensor<T> sum_axis(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) shape_fail("sum_axis", x.shape(), "axis out of range");
  const std::size_t outer = prod(x.shape(), 0, axis), n = x.dim(axis);
  const std::size_t inner = prod(x.shape(), axis + 1, x.rank());
  Shape out_shape;
  for (std::size_t d = 0; d < x.rank(); ++d)
    if (d != axis) out_shape.push_back(x.dim(d));
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<T> out(outer * inner, T(0));
  const auto v = x.values();
  for (std::size_t a = 0; a < outer; ++a)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t b = 0; b < inner; ++b) out[a * inner + b] += v[(a * n + i) * inner + b];
  return make_result<T>("sum_axis", out_shape, std::move(out), {x}, [=](const Node<T>& o) {
    auto& g = grad_buffer(*x.node());
    for (std::size_t a = 0; a < outer; ++a)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t b = 0; b < inner; ++b) g[(a * n + i) * inner + b] += o.grad[a * inner + b];
  });
}

template <class T>
Tensor<T> bilinear_sample(const Tensor<T>& img, const Tensor<T>& coords) {
  if (img.rank() != 3 || coords.rank() != 2 || coords.dim(1) != 2) {
    shape_fail("bilinear_sample", img.shape(), coords.shape());
  }
  const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2), P = coords.dim(0);
  const auto vi = img.values();
  const auto vc = coords.values();
  std::vector<T> out(P * C);
  for (std::size_t p = 0; p < P; ++p) {
    const T y = std::clamp(vc[2 * p], T(0), T(H - 1));
    const T x = std::clamp(vc[2 * p + 1], T(0), T(W - 1));
    const std::size_t y0 = std::size_t(std::floor(y)), x0 = std::size_t(std::floor(x));
    const std::size_t y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
    const T wy = y - T(y0), wx = x - T(x0);
    for (std::size_t c = 0; c < C; ++c) {
      const T* im = &vi[c * H * W];
      out[p * C + c] = im[y0 * W + x0] * (T(1) - wx) * (T(1) - wy) + im[y0 * W + x1] * wx * (T(1) - wy) +
                       im[y1 * W + x0] * (T(1) - wx) * wy + im[y1 * W + x1] * wx * wy;
    }
  }
  return make_result<T>("bilinear_sample", {P, C}, std::move(out), {img, coords}, [=](const Node<T>& o) {
    const auto vi = img.values();
    const auto vc = coords.values();
    std::vector<T>* gi = img.requires_grad() ? &grad_buffer(*img.node()) : nullptr;
    std::vector<T>* gc = coords.requires_grad() ? &grad_buffer(*coords.node()) : nullptr;
    for (std::size_t p = 0; p < P; ++p) {
      const T yr = vc[2 * p], xr = vc[2 * p + 1];
      const T y = std::clamp(yr, T(0), T(H - 1));
      const T x = std::clamp(xr, T(0), T(W - 1));
      const std::size_t y0 = std::size_t(std::floor(y)), x0 = std::size_t(std::floor(x));
      const std::size_t y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
      const T wy = y - T(y0), wx = x - T(x0);
      const bool ydiff = yr > T(0) && yr < T(H - 1);
      const bool xdiff = xr > T(0) && xr < T(W - 1);
      T dy = T(0), dx = T(0);
      for (std::size_t c = 0; c < C; ++c) {
        const T g = o.grad[p * C + c];
        const std::size_t base = c * H * W;
        if (gi) {
          (*gi)[base + y0 * W + x0] += g * (T(1) - wx) * (T(1) - wy);
          (*gi)[base + y0 * W + x1] += g * wx * (T(1) - wy);
          (*gi)[base + y1 * W + x0] += g * (T(1) - wx) * wy;
          (*gi)[base + y1 * W + x1] += g * wx * wy;
        }
        if (gc) {
          const T* im = &vi[base];
          const T a = im[y0 * W + x0], b = im[y0 * W + x1], c2 = im[y1 * W + x0], d = im[y1 * W + x1];
          dy += g * ((T(1) - wx) * (c2 - a) + wx * (d - b));
          dx += g * ((T(1) - wy) * (b - a) + wy * (d - c2));
        }
      }
      if (gc) {
        if (ydiff) (*gc)[2 * p] += dy;
        if (xdiff) (*gc)[2 * p + 1] += dx;
      }
    }
  });
}

template <class To, class From>
Tensor<To> cast(const Tensor<From>& x, bool requires_grad) {
  std::vector<To> v(x.values().begin(), x.values().end());
  auto t = Tensor<To>::from(x.shape(), std::move(v), requires_grad);
  t.set_name(x.name());
  return t;
}

#define GEOREG_OPS(T)                                                                       \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> div<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> neg<T>(const Tensor<T>&);                                              \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                         \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                                    \
  template Tensor<T> square<T>(const Tensor<T>&);                                           \
  template Tensor<T> sqrt<T>(const Tensor<T>&);                                             \
  template Tensor<T> sin<T>(const Tensor<T>&);                                              \
  template Tensor<T> cos<T>(const Tensor<T>&);                                              \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                    \
  template Tensor<T> broadcast_to<T>(const Tensor<T>&, const Shape&);                       \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> bmm<T>(const Tensor<T>&, const Tensor<T>&, bool);                      \
  template Tensor<T> transpose<T>(const Tensor<T>&);                                        \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                   \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                               std::size_t);                                                \
  template Tensor<T> avgpool2d<T>(const Tensor<T>&);                                        \
  template Tensor<T> softmax<T>(const Tensor<T>&, std::size_t);                             \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, std::size_t);                 \
  template Tensor<T> slice<T>(const Tensor<T>&, std::size_t, std::size_t, std::size_t);     \
  template Tensor<T> gather_rows<T>(const Tensor<T>&, const std::vector<std::int32_t>&);    \
  template Tensor<T> sum<T>(const Tensor<T>&);                                              \
  template Tensor<T> mean<T>(const Tensor<T>&);                                             \
  template Tensor<T> sum_axis<T>(const Tensor<T>&, std::size_t);                            \
  template Tensor<T> bilinear_sample<T>(const Tensor<T>&, const Tensor<T>&);

GEOREG_OPS(float)
GEOREG_OPS(double)

template Tensor<double> cast<double, float>(const Tensor<float>&, bool);
template Tensor<float> cast<float, double>(const Tensor<double>&, bool);
template Tensor<float> cast<float, float>(const Tensor<float>&, bool);
template Tensor<double> cast<double, double>(const Tensor<double>&, bool);

#undef GEOREG_OPS

}  // namespace georeg::ad
