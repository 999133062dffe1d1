#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "cdgc/ops.hpp"
#include "cdgc/tensor.hpp"

namespace cdgc {

/// Weights of the composite objective: alpha scales the coarse loss, beta the
/// refined loss, gamma the auxiliary loss.
struct LossWeights {
  double alpha = 0.6;
  double beta = 0.7;
  double gamma = 0.4;

  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0) throw ConfigError("loss weights must be non-negative");
  }
};

constexpr std::int32_t kIgnoreLabel = 255;

namespace detail {

template <typename T>
struct PixelLoss {
  std::vector<T> probs;       // [M x N] softmax, zero at ignored pixels
  std::vector<T> nll;         // [N] per-pixel -log p_true, zero at ignored pixels
  std::vector<std::uint8_t> valid;  // [N]
  std::size_t num_valid = 0;
};

/// Per-pixel softmax and negative log likelihood with max subtraction.
template <typename T>
PixelLoss<T> pixel_losses(const char* op, const Tensor<T>& logits,
                          std::span<const std::int32_t> labels, std::int32_t ignore_index) {
  if (logits.rank() != 3) {
    throw ShapeError(std::string(op) + ": expected logits [M x H x W], got " +
                     shape_str(logits.shape()));
  }
  const std::size_t m = logits.shape()[0];
  const std::size_t n = logits.shape()[1] * logits.shape()[2];
  if (labels.size() != n) {
    throw ShapeError(std::string(op) + ": label map has " + std::to_string(labels.size()) +
                     " pixels, logits have " + std::to_string(n));
  }

  PixelLoss<T> out;
  out.probs.assign(m * n, T(0));
  out.nll.assign(n, T(0));
  out.valid.assign(n, 0);
  const T* z = logits.values().data();
  for (std::size_t p = 0; p < n; ++p) {
    const std::int32_t y = labels[p];
    if (y == ignore_index) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= m) {
      throw DataError(std::string(op) + ": label " + std::to_string(y) + " out of range for " +
                      std::to_string(m) + " classes");
    }
    T hi = z[p];
    for (std::size_t c = 1; c < m; ++c) hi = std::max(hi, z[c * n + p]);
    T denom = T(0);
    for (std::size_t c = 0; c < m; ++c) {
      const T e = std::exp(z[c * n + p] - hi);
      out.probs[c * n + p] = e;
      denom += e;
    }
    const T inv = T(1) / denom;
    for (std::size_t c = 0; c < m; ++c) out.probs[c * n + p] *= inv;
    // -log softmax(z)[y] = log(sum exp(z - hi)) - (z[y] - hi)
    out.nll[p] = std::log(denom) - (z[static_cast<std::size_t>(y) * n + p] - hi);
    out.valid[p] = 1;
    ++out.num_valid;
  }
  return out;
}

/// Shared backward for masked-mean cross entropy: for each kept pixel,
/// d logits = (softmax - onehot(label)) / kept_count.
template <typename T>
Tensor<T> masked_mean_ce(const char* op, const Tensor<T>& logits,
                         std::span<const std::int32_t> labels, PixelLoss<T>&& pl,
                         std::vector<std::uint8_t>&& kept, std::size_t kept_count) {
  const std::size_t m = logits.shape()[0];
  const std::size_t n = pl.nll.size();
  T total = T(0);
  for (std::size_t p = 0; p < n; ++p) {
    if (kept[p]) total += pl.nll[p];
  }
  const T inv = T(1) / static_cast<T>(kept_count);
  auto ln = logits.node();
  std::vector<std::int32_t> ys(labels.begin(), labels.end());
  return make_op_result<T>(
      op, {1}, {total * inv}, {logits},
      [ln, m, n, inv, probs = std::move(pl.probs), kept = std::move(kept),
       ys = std::move(ys)](TensorNode<T>& self) {
        ln->ensure_grad();
        const T scale = self.grad[0] * inv;
        for (std::size_t p = 0; p < n; ++p) {
          if (!kept[p]) continue;
          for (std::size_t c = 0; c < m; ++c) ln->grad[c * n + p] += scale * probs[c * n + p];
          ln->grad[static_cast<std::size_t>(ys[p]) * n + p] -= scale;
        }
      });
}

}  // namespace detail

/// Mean cross entropy over non-ignored pixels, computed with log-sum-exp max
/// subtraction.  Throws DataError when every pixel is ignored.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> labels,
                        std::int32_t ignore_index = kIgnoreLabel) {
  detail::PixelLoss<T> pl = detail::pixel_losses("cross_entropy", logits, labels, ignore_index);
  if (pl.num_valid == 0) throw DataError("cross_entropy: every pixel is ignored");
  std::vector<std::uint8_t> kept = pl.valid;
  const std::size_t count = pl.num_valid;
  return detail::masked_mean_ce("cross_entropy", logits, labels, std::move(pl), std::move(kept),
                                count);
}

/// Hard-example-mined cross entropy: keep pixels whose true-class probability
/// falls below `threshold`, topping up to `min_kept` with the lowest
/// probability pixels when too few qualify.  Dropped pixels contribute neither
/// loss nor gradient.
template <typename T>
Tensor<T> ohem_loss(const Tensor<T>& logits, std::span<const std::int32_t> labels,
                    double threshold, std::size_t min_kept,
                    std::int32_t ignore_index = kIgnoreLabel) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw UsageError("ohem_loss: threshold must lie in (0, 1]");
  }
  if (min_kept == 0) throw UsageError("ohem_loss: min_kept must be at least 1");
  detail::PixelLoss<T> pl = detail::pixel_losses("ohem_loss", logits, labels, ignore_index);
  if (pl.num_valid == 0) throw DataError("ohem_loss: every pixel is ignored");
  min_kept = std::min(min_kept, pl.num_valid);

  const std::size_t n = pl.nll.size();
  std::vector<std::uint8_t> kept(n, 0);
  std::size_t kept_count = 0;
  std::vector<double> p_true(n, 2.0);
  for (std::size_t p = 0; p < n; ++p) {
    if (!pl.valid[p]) continue;
    p_true[p] = static_cast<double>(pl.probs[static_cast<std::size_t>(labels[p]) * n + p]);
    if (p_true[p] < threshold) {
      kept[p] = 1;
      ++kept_count;
    }
  }
  if (kept_count < min_kept) {
    // Too few hard pixels: fall back to the min_kept lowest-probability ones.
    std::vector<std::uint32_t> order;
    order.reserve(pl.num_valid);
    for (std::size_t p = 0; p < n; ++p) {
      if (pl.valid[p]) order.push_back(static_cast<std::uint32_t>(p));
    }
    std::sort(order.begin(), order.end(), [&p_true](std::uint32_t a, std::uint32_t b) {
      return p_true[a] != p_true[b] ? p_true[a] < p_true[b] : a < b;
    });
    std::fill(kept.begin(), kept.end(), 0);
    for (std::size_t i = 0; i < min_kept; ++i) kept[order[i]] = 1;
    kept_count = min_kept;
  }
  return detail::masked_mean_ce("ohem_loss", logits, labels, std::move(pl), std::move(kept),
                                kept_count);
}

/// Weighted sum alpha*l_c + beta*l_f + gamma*l_a of the three scalar losses.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& l_c, const Tensor<T>& l_f, const Tensor<T>& l_a,
                     const LossWeights& w) {
  w.validate();
  if (l_c.numel() != 1 || l_f.numel() != 1 || l_a.numel() != 1) {
    throw ShapeError("total_loss: inputs must be scalars");
  }
  Tensor<T> coarse = mul_scalar(l_c, static_cast<T>(w.alpha));
  Tensor<T> refined = mul_scalar(l_f, static_cast<T>(w.beta));
  Tensor<T> aux = mul_scalar(l_a, static_cast<T>(w.gamma));
  return add(add(coarse, refined), aux);
}

}  // namespace cdgc
