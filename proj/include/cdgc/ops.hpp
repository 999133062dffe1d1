#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cdgc/tensor.hpp"

namespace cdgc {

namespace detail {

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
}

// c[MxN] += a[MxK] * b[KxN]
template <typename T>
void gemm_nn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[MxN] += a[MxK] * b[NxK]^T
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// c[KxN] += a[MxK]^T * b[MxN]
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline void require_sorted_unique(const char* op, std::span<const std::uint32_t> rows,
                                  std::size_t bound) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= bound) throw UsageError(std::string(op) + ": row index out of range");
    if (i > 0 && rows[i] <= rows[i - 1]) {
      throw UsageError(std::string(op) + ": row indices must be sorted and unique");
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op_result<T>("add", a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op_result<T>("sub", a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op_result<T>("mul", a.shape(), std::move(out), {a, b}, [an, bn](TensorNode<T>& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->values[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->values[i];
    }
  });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -a.values()[i];
  auto an = a.node();
  return make_op_result<T>("neg", a.shape(), std::move(out), {a}, [an](TensorNode<T>& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] -= self.grad[i];
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + s;
  auto an = a.node();
  return make_op_result<T>("add_scalar", a.shape(), std::move(out), {a}, [an](TensorNode<T>& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
  auto an = a.node();
  return make_op_result<T>("mul_scalar", a.shape(), std::move(out), {a}, [an, s](TensorNode<T>& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * s;
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] > T(0) ? a.values()[i] : T(0);
  auto an = a.node();
  // Subgradient at exactly zero is taken as zero.
  return make_op_result<T>("relu", a.shape(), std::move(out), {a}, [an](TensorNode<T>& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (an->values[i] > T(0)) an->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.values()[i]);
  auto an = a.node();
  return make_op_result<T>("exp", a.shape(), std::move(out), {a}, [an](TensorNode<T>& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * self.values[i];
  });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (a.values()[i] <= T(0)) throw NumericError("log: non-positive input");
    out[i] = std::log(a.values()[i]);
  }
  auto an = a.node();
  return make_op_result<T>("log", a.shape(), std::move(out), {a}, [an](TensorNode<T>& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] / an->values[i];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(a.values().begin(), a.values().end());
  auto an = a.node();
  return make_op_result<T>("reshape", std::move(shape), std::move(out), {a},
                           [an](TensorNode<T>& self) {
                             an->ensure_grad();
                             for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
                           });
}

/// 2-D transpose.
template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank-2 tensor, got " + shape_str(a.shape()));
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.values()[i * c + j];
  auto an = a.node();
  return make_op_result<T>("transpose", {c, r}, std::move(out), {a}, [an, r, c](TensorNode<T>& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) an->grad[i * c + j] += self.grad[j * r + i];
  });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw UsageError("concat: axis out of range");
  Shape out_shape = first;
  std::size_t axis_total = 0;
  for (const Tensor<T>& p : parts) {
    if (p.rank() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && p.shape()[d] != first[d]) {
        throw ShapeError("concat: shapes " + shape_str(first) + " and " + shape_str(p.shape()) +
                         " differ off-axis");
      }
    }
    axis_total += p.shape()[axis];
  }
  out_shape[axis] = axis_total;

  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  std::vector<T> out(shape_numel(out_shape));
  const std::size_t out_stride = axis_total * inner;
  std::size_t offset = 0;
  for (const Tensor<T>& p : parts) {
    const std::size_t span = p.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      const T* src = p.values().data() + o * span;
      std::copy(src, src + span, out.data() + o * out_stride + offset);
    }
    offset += span;
  }

  std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
  std::vector<std::shared_ptr<TensorNode<T>>> nodes;
  std::vector<std::size_t> spans;
  for (const Tensor<T>& p : parts) {
    nodes.push_back(p.node());
    spans.push_back(p.shape()[axis] * inner);
  }
  return make_op_result<T>(
      "concat", std::move(out_shape), std::move(out), std::move(inputs),
      [nodes, spans, outer, out_stride](TensorNode<T>& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
          const std::size_t span = spans[k];
          if (nodes[k]->requires_grad) {
            nodes[k]->ensure_grad();
            for (std::size_t o = 0; o < outer; ++o) {
              const T* src = self.grad.data() + o * out_stride + offset;
              T* dst = nodes[k]->grad.data() + o * span;
              for (std::size_t i = 0; i < span; ++i) dst[i] += src[i];
            }
          }
          offset += span;
        }
      });
}

template <typename T>
Tensor<T> concat(std::initializer_list<Tensor<T>> parts, std::size_t axis) {
  std::vector<Tensor<T>> v(parts);
  return concat(std::span<const Tensor<T>>(v), axis);
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.values()) acc += v;
  auto an = a.node();
  return make_op_result<T>("sum", {1}, {acc}, {a}, [an](TensorNode<T>& self) {
    an->ensure_grad();
    const T d = self.grad[0];
    for (T& g : an->grad) g += d;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  if (a.numel() == 0) throw UsageError("mean: empty tensor");
  T acc = T(0);
  for (T v : a.values()) acc += v;
  const T inv = T(1) / static_cast<T>(a.numel());
  auto an = a.node();
  return make_op_result<T>("mean", {1}, {acc * inv}, {a}, [an, inv](TensorNode<T>& self) {
    an->ensure_grad();
    const T d = self.grad[0] * inv;
    for (T& g : an->grad) g += d;
  });
}

/// Matrix product [PxQ] x [QxR] -> [PxR].
/// Backward: dA += dC * B^T, dB += A^T * dC.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t p = a.shape()[0], q = a.shape()[1], r = b.shape()[1];
  std::vector<T> out(p * r, T(0));
  detail::gemm_nn_acc(a.values().data(), b.values().data(), out.data(), p, q, r);
  auto an = a.node();
  auto bn = b.node();
  return make_op_result<T>("matmul", {p, r}, std::move(out), {a, b},
                           [an, bn, p, q, r](TensorNode<T>& self) {
                             if (an->requires_grad) {
                               an->ensure_grad();
                               detail::gemm_nt_acc(self.grad.data(), bn->values.data(), an->grad.data(), p, r, q);
                             }
                             if (bn->requires_grad) {
                               bn->ensure_grad();
                               detail::gemm_tn_acc(an->values.data(), self.grad.data(), bn->grad.data(), p, q, r);
                             }
                           });
}

/// Gather rows of a [NxC] matrix; `rows` must be sorted and unique.
template <typename T>
Tensor<T> take_rows(const Tensor<T>& a, std::span<const std::uint32_t> rows) {
  if (a.rank() != 2) throw ShapeError("take_rows: expected rank-2 tensor, got " + shape_str(a.shape()));
  detail::require_sorted_unique("take_rows", rows, a.shape()[0]);
  const std::size_t c = a.shape()[1];
  std::vector<T> out(rows.size() * c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const T* src = a.values().data() + static_cast<std::size_t>(rows[i]) * c;
    std::copy(src, src + c, out.data() + i * c);
  }
  auto an = a.node();
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  return make_op_result<T>("take_rows", {rows.size(), c}, std::move(out), {a},
                           [an, idx = std::move(idx), c](TensorNode<T>& self) {
                             an->ensure_grad();
                             for (std::size_t i = 0; i < idx.size(); ++i) {
                               T* dst = an->grad.data() + static_cast<std::size_t>(idx[i]) * c;
                               const T* src = self.grad.data() + i * c;
                               for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
                             }
                           });
}

/// Scatter rows of a [kxC] matrix into a zero [NxC] matrix.
template <typename T>
Tensor<T> put_rows(const Tensor<T>& a, std::span<const std::uint32_t> rows, std::size_t num_rows) {
  if (a.rank() != 2) throw ShapeError("put_rows: expected rank-2 tensor, got " + shape_str(a.shape()));
  if (rows.size() != a.shape()[0]) throw ShapeError("put_rows: row list does not match input rows");
  detail::require_sorted_unique("put_rows", rows, num_rows);
  const std::size_t c = a.shape()[1];
  std::vector<T> out(num_rows * c, T(0));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const T* src = a.values().data() + i * c;
    std::copy(src, src + c, out.data() + static_cast<std::size_t>(rows[i]) * c);
  }
  auto an = a.node();
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  return make_op_result<T>("put_rows", {num_rows, c}, std::move(out), {a},
                           [an, idx = std::move(idx), c](TensorNode<T>& self) {
                             an->ensure_grad();
                             for (std::size_t i = 0; i < idx.size(); ++i) {
                               const T* src = self.grad.data() + static_cast<std::size_t>(idx[i]) * c;
                               T* dst = an->grad.data() + i * c;
                               for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
                             }
                           });
}

/// Per-channel bias over the leading axis: out[c, ...] = x[c, ...] + b[c].
template <typename T>
Tensor<T> bias_add(const Tensor<T>& x, const Tensor<T>& b) {
  if (x.rank() < 1 || b.rank() != 1 || b.shape()[0] != x.shape()[0]) {
    throw ShapeError("bias_add: bias " + shape_str(b.shape()) + " does not match leading axis of " +
                     shape_str(x.shape()));
  }
  const std::size_t channels = x.shape()[0];
  const std::size_t inner = x.numel() / channels;
  std::vector<T> out(x.numel());
  for (std::size_t c = 0; c < channels; ++c) {
    const T bias = b.values()[c];
    const T* src = x.values().data() + c * inner;
    T* dst = out.data() + c * inner;
    for (std::size_t i = 0; i < inner; ++i) dst[i] = src[i] + bias;
  }
  auto xn = x.node();
  auto bn = b.node();
  return make_op_result<T>("bias_add", x.shape(), std::move(out), {x, b},
                           [xn, bn, channels, inner](TensorNode<T>& self) {
                             if (xn->requires_grad) {
                               xn->ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
                             }
                             if (bn->requires_grad) {
                               bn->ensure_grad();
                               for (std::size_t c = 0; c < channels; ++c) {
                                 const T* src = self.grad.data() + c * inner;
                                 T acc = T(0);
                                 for (std::size_t i = 0; i < inner; ++i) acc += src[i];
                                 bn->grad[c] += acc;
                               }
                             }
                           });
}

/// Value-only precision cast; the result is a detached leaf.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& a) {
  std::vector<To> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(a.values()[i]);
  return Tensor<To>::from(a.shape(), std::move(out));
}

}  // namespace cdgc
