#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdgc/ops.hpp"
#include "cdgc/rng.hpp"
#include "cdgc/tensor.hpp"

namespace cdgc {

/// Binary per-class node membership over the N = H*W nodes of a feature map.
/// Masks built from an argmax prediction partition the nodes; masks built from
/// labels may leave ignored nodes in no class.
struct ClassMasks {
  std::size_t num_classes = 0;
  std::size_t num_nodes = 0;
  std::vector<std::uint8_t> bits;  // num_classes x num_nodes, row-major 0/1

  bool contains(std::size_t klass, std::size_t node) const {
    return bits[klass * num_nodes + node] != 0;
  }

  /// Sorted indices of the nodes in one class.
  std::vector<std::uint32_t> members(std::size_t klass) const {
    std::vector<std::uint32_t> out;
    const std::uint8_t* row = bits.data() + klass * num_nodes;
    for (std::size_t i = 0; i < num_nodes; ++i) {
      if (row[i]) out.push_back(static_cast<std::uint32_t>(i));
    }
    return out;
  }
};

/// Per-node winning class of an [M x H x W] logit map; ties go to the lowest
/// class index.
template <typename T>
std::vector<std::int32_t> argmax_map(const Tensor<T>& logits) {
  if (logits.rank() != 3) {
    throw ShapeError("argmax_map: expected [M x H x W], got " + shape_str(logits.shape()));
  }
  const std::size_t m = logits.shape()[0];
  const std::size_t n = logits.shape()[1] * logits.shape()[2];
  std::vector<std::int32_t> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    T best = logits.values()[i];
    for (std::size_t c = 1; c < m; ++c) {
      const T v = logits.values()[c * n + i];
      if (v > best) {
        best = v;
        out[i] = static_cast<std::int32_t>(c);
      }
    }
  }
  return out;
}

template <typename T>
ClassMasks class_masks_from_logits(const Tensor<T>& logits) {
  if (logits.rank() != 3 || logits.shape()[0] < 2) {
    throw ShapeError("class_masks_from_logits: expected [M x H x W] with M >= 2, got " +
                     shape_str(logits.shape()));
  }
  const std::vector<std::int32_t> winner = argmax_map(logits);
  ClassMasks masks;
  masks.num_classes = logits.shape()[0];
  masks.num_nodes = winner.size();
  masks.bits.assign(masks.num_classes * masks.num_nodes, 0);
  for (std::size_t i = 0; i < winner.size(); ++i) {
    masks.bits[static_cast<std::size_t>(winner[i]) * masks.num_nodes + i] = 1;
  }
  return masks;
}

/// Masks from a ground-truth label map; pixels labeled `ignore_index` belong
/// to no class.
inline ClassMasks masks_from_labels(std::span<const std::int32_t> labels, std::size_t num_classes,
                                    std::int32_t ignore_index = 255) {
  ClassMasks masks;
  masks.num_classes = num_classes;
  masks.num_nodes = labels.size();
  masks.bits.assign(num_classes * labels.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::int32_t y = labels[i];
    if (y == ignore_index) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw DataError("masks_from_labels: label " + std::to_string(y) + " out of range");
    }
    masks.bits[static_cast<std::size_t>(y) * labels.size() + i] = 1;
  }
  return masks;
}

/// Per-class sampled node sets feeding graph construction.  Each list is
/// sorted and duplicate-free.
struct SampledSet {
  double ratio = 1.0;
  std::size_t num_nodes = 0;
  std::vector<std::vector<std::uint32_t>> groups;
};

/// Training-time hard-sample selection.  Per class the sampled set keeps every
/// coarse-only node (predicted but wrong), every truth-only node (missed), and
/// a uniform without-replacement draw of floor(ratio * |overlap|) nodes from
/// the coarse/truth overlap.
inline SampledSet dynamic_sample(const ClassMasks& coarse, const ClassMasks& gt, double ratio,
                                 Rng& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw UsageError("dynamic_sample: ratio must lie in [0, 1]");
  if (coarse.num_classes != gt.num_classes || coarse.num_nodes != gt.num_nodes) {
    throw ShapeError("dynamic_sample: coarse and ground-truth masks disagree in size");
  }
  SampledSet sampled;
  sampled.ratio = ratio;
  sampled.num_nodes = coarse.num_nodes;
  sampled.groups.resize(coarse.num_classes);
  std::vector<std::uint32_t> overlap;
  for (std::size_t m = 0; m < coarse.num_classes; ++m) {
    std::vector<std::uint32_t>& out = sampled.groups[m];
    overlap.clear();
    for (std::size_t i = 0; i < coarse.num_nodes; ++i) {
      const bool in_c = coarse.contains(m, i);
      const bool in_g = gt.contains(m, i);
      if (in_c && in_g) {
        overlap.push_back(static_cast<std::uint32_t>(i));
      } else if (in_c || in_g) {
        out.push_back(static_cast<std::uint32_t>(i));
      }
    }
    const std::size_t keep =
        static_cast<std::size_t>(std::floor(ratio * static_cast<double>(overlap.size())));
    // Partial Fisher-Yates: the first `keep` slots end up a uniform
    // without-replacement draw.
    for (std::size_t i = 0; i < keep; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(overlap.size() - i));
      std::swap(overlap[i], overlap[j]);
    }
    out.insert(out.end(), overlap.begin(), overlap.begin() + static_cast<std::ptrdiff_t>(keep));
    std::sort(out.begin(), out.end());
  }
  return sampled;
}

/// Inference-time selection: each class keeps exactly its coarse-predicted
/// nodes; no ground truth is consulted.
inline SampledSet inference_sample(const ClassMasks& coarse) {
  SampledSet sampled;
  sampled.ratio = 1.0;
  sampled.num_nodes = coarse.num_nodes;
  sampled.groups.reserve(coarse.num_classes);
  for (std::size_t m = 0; m < coarse.num_classes; ++m) {
    sampled.groups.push_back(coarse.members(m));
  }
  return sampled;
}

/// One group holding every node; the class-free graph used by the single-graph
/// baseline.
inline SampledSet all_nodes_sample(std::size_t num_nodes) {
  SampledSet sampled;
  sampled.ratio = 1.0;
  sampled.num_nodes = num_nodes;
  sampled.groups.emplace_back();
  sampled.groups[0].reserve(num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    sampled.groups[0].push_back(static_cast<std::uint32_t>(i));
  }
  return sampled;
}

namespace detail {

/// Scatter a [k x k] block onto the support rows and columns of an all-zero
/// [n x n] matrix.
template <typename T>
Tensor<T> scatter_square(const Tensor<T>& block, std::span<const std::uint32_t> support,
                         std::size_t n) {
  Tensor<T> rows = put_rows(block, support, n);                 // [n x k]
  Tensor<T> cols = put_rows(transpose(rows), support, n);       // [n x n], transposed
  return transpose(cols);
}

}  // namespace detail

/// Pairwise similarity scores F[i][j] = (w x_i) . (w' x_j) for nodes i, j in
/// the support set, scattered into a dense [N x N] matrix that is zero
/// everywhere else.  Gradients flow into x_nodes, w and w_prime.
template <typename T>
Tensor<T> similarity_scores(const Tensor<T>& x_nodes, const Tensor<T>& w, const Tensor<T>& w_prime,
                            std::span<const std::uint32_t> support) {
  if (x_nodes.rank() != 2) {
    throw ShapeError("similarity_scores: expected node features [C x N], got " +
                     shape_str(x_nodes.shape()));
  }
  const std::size_t channels = x_nodes.shape()[0];
  const std::size_t n = x_nodes.shape()[1];
  if (w.shape() != Shape{channels, channels} || w_prime.shape() != Shape{channels, channels}) {
    throw ShapeError("similarity_scores: transforms must be [C x C] for C = " +
                     std::to_string(channels));
  }
  if (support.empty()) throw EmptyClassError("similarity_scores: empty support set");
  detail::require_sorted_unique("similarity_scores", support, n);

  Tensor<T> xs = take_rows(transpose(x_nodes), support);  // [k x C], row i = x_{support[i]}
  Tensor<T> lhs = matmul(xs, transpose(w));               // row i = (w x_i)^T
  Tensor<T> rhs = matmul(xs, transpose(w_prime));
  Tensor<T> block = matmul(lhs, transpose(rhs));          // [k x k]
  return detail::scatter_square(block, support, n);
}

/// Masked row softmax.  Supported rows are normalized over the supported
/// columns only (with row-max subtraction); all other entries stay zero.
template <typename T>
Tensor<T> row_softmax(const Tensor<T>& scores, std::span<const std::uint32_t> support) {
  if (scores.rank() != 2 || scores.shape()[0] != scores.shape()[1]) {
    throw ShapeError("row_softmax: expected a square matrix, got " + shape_str(scores.shape()));
  }
  const std::size_t n = scores.shape()[0];
  if (support.empty()) throw EmptyClassError("row_softmax: empty support set");
  detail::require_sorted_unique("row_softmax", support, n);

  std::vector<T> out(n * n, T(0));
  for (std::uint32_t i : support) {
    const T* row = scores.values().data() + static_cast<std::size_t>(i) * n;
    T hi = row[support[0]];
    for (std::uint32_t j : support) hi = std::max(hi, row[j]);
    T denom = T(0);
    T* dst = out.data() + static_cast<std::size_t>(i) * n;
    for (std::uint32_t j : support) {
      dst[j] = std::exp(row[j] - hi);
      denom += dst[j];
    }
    const T inv = T(1) / denom;
    for (std::uint32_t j : support) dst[j] *= inv;
  }

  auto sn = scores.node();
  std::vector<std::uint32_t> idx(support.begin(), support.end());
  return make_op_result<T>(
      "row_softmax", scores.shape(), std::move(out), {scores},
      [sn, idx = std::move(idx), n](TensorNode<T>& self) {
        sn->ensure_grad();
        for (std::uint32_t i : idx) {
          const T* a = self.values.data() + static_cast<std::size_t>(i) * n;
          const T* da = self.grad.data() + static_cast<std::size_t>(i) * n;
          T dot = T(0);
          for (std::uint32_t j : idx) dot += da[j] * a[j];
          T* dst = sn->grad.data() + static_cast<std::size_t>(i) * n;
          for (std::uint32_t j : idx) dst[j] += a[j] * (da[j] - dot);
        }
      });
}

/// Dense per-class adjacency stack; entry m is all zeros when class m has an
/// empty sampled set.
template <typename T>
struct AdjacencyTensor {
  std::size_t num_nodes = 0;
  std::vector<Tensor<T>> per_class;
};

template <typename T>
AdjacencyTensor<T> build_adjacency(const Tensor<T>& x_nodes, const Tensor<T>& w,
                                   const Tensor<T>& w_prime, const SampledSet& sampled) {
  if (x_nodes.rank() != 2 || x_nodes.shape()[1] != sampled.num_nodes) {
    throw ShapeError("build_adjacency: node features " + shape_str(x_nodes.shape()) +
                     " do not cover " + std::to_string(sampled.num_nodes) + " nodes");
  }
  AdjacencyTensor<T> adj;
  adj.num_nodes = sampled.num_nodes;
  adj.per_class.reserve(sampled.groups.size());
  for (const std::vector<std::uint32_t>& support : sampled.groups) {
    if (support.empty()) {
      adj.per_class.push_back(Tensor<T>::zeros({sampled.num_nodes, sampled.num_nodes}));
      continue;
    }
    Tensor<T> scores = similarity_scores(x_nodes, w, w_prime, support);
    adj.per_class.push_back(row_softmax(scores, support));
  }
  return adj;
}

}  // namespace cdgc
