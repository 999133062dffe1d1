#pragma once

// Reference implementations used to cross-check the library: plain loops and
// set algebra, sharing no code with the operations under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

namespace oracles {

// c[PxR] = a[PxQ] * b[QxR] by the definition, one scalar at a time.
template <typename T>
std::vector<T> matmul(std::span<const T> a, std::span<const T> b, std::size_t p, std::size_t q,
                      std::size_t r) {
  std::vector<T> c(p * r, T(0));
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < r; ++j) {
      T acc = T(0);
      for (std::size_t k = 0; k < q; ++k) acc += a[i * q + k] * b[k * r + j];
      c[i * r + j] = acc;
    }
  }
  return c;
}

// Direct cross-correlation with zero padding, looping over every tap.
template <typename T>
std::vector<T> conv2d(std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                      std::size_t cin, std::size_t h, std::size_t wd, std::size_t cout,
                      std::size_t kh, std::size_t kw, std::size_t stride, std::size_t padding,
                      std::size_t dilation, std::size_t oh, std::size_t ow) {
  std::vector<T> out(cout * oh * ow, T(0));
  for (std::size_t co = 0; co < cout; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T acc = bias[co];
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky * dilation) -
                                        static_cast<std::ptrdiff_t>(padding);
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx * dilation) -
                                        static_cast<std::ptrdiff_t>(padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix < 0 ||
                  ix >= static_cast<std::ptrdiff_t>(wd)) {
                continue;
              }
              acc += x[(ci * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)] *
                     w[((co * cin + ci) * kh + ky) * kw + kx];
            }
          }
        }
        out[(co * oh + oy) * ow + ox] = acc;
      }
    }
  }
  return out;
}

// Per-pixel argmax over the class axis, lowest index wins ties.
template <typename T>
std::vector<std::int32_t> argmax(std::span<const T> logits, std::size_t classes, std::size_t n) {
  std::vector<std::int32_t> out(n, 0);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t c = 1; c < classes; ++c) {
      if (logits[c * n + p] > logits[static_cast<std::size_t>(out[p]) * n + p]) {
        out[p] = static_cast<std::int32_t>(c);
      }
    }
  }
  return out;
}

// High-precision softmax over the selected columns of one row.
inline std::vector<double> masked_softmax_row(std::span<const double> row,
                                              std::span<const std::uint32_t> support) {
  long double hi = row[support[0]];
  for (std::uint32_t j : support) hi = std::max<long double>(hi, row[j]);
  long double denom = 0;
  std::vector<long double> e(support.size());
  for (std::size_t k = 0; k < support.size(); ++k) {
    e[k] = std::exp(static_cast<long double>(row[support[k]]) - hi);
    denom += e[k];
  }
  std::vector<double> out(support.size());
  for (std::size_t k = 0; k < support.size(); ++k) out[k] = static_cast<double>(e[k] / denom);
  return out;
}

// Mean cross entropy by direct long-double evaluation.
inline double cross_entropy(std::span<const double> logits, std::span<const std::int32_t> labels,
                            std::size_t classes, std::size_t n, std::int32_t ignore) {
  long double total = 0;
  std::size_t valid = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (labels[p] == ignore) continue;
    long double hi = logits[p];
    for (std::size_t c = 1; c < classes; ++c) hi = std::max<long double>(hi, logits[c * n + p]);
    long double denom = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      denom += std::exp(static_cast<long double>(logits[c * n + p]) - hi);
    }
    const long double z = logits[static_cast<std::size_t>(labels[p]) * n + p];
    total += std::log(denom) - (z - hi);
    ++valid;
  }
  return static_cast<double>(total / static_cast<long double>(valid));
}

// The pixels a hard-example-mining loss should keep: all below the threshold,
// or the min_kept lowest-probability ones when too few are.
inline std::set<std::size_t> ohem_kept(std::span<const double> p_true,
                                       const std::vector<bool>& valid, double threshold,
                                       std::size_t min_kept) {
  std::set<std::size_t> kept;
  std::vector<std::size_t> order;
  for (std::size_t p = 0; p < p_true.size(); ++p) {
    if (!valid[p]) continue;
    order.push_back(p);
    if (p_true[p] < threshold) kept.insert(p);
  }
  if (kept.size() < min_kept) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p_true[a] < p_true[b]; });
    kept.clear();
    for (std::size_t i = 0; i < min_kept && i < order.size(); ++i) kept.insert(order[i]);
  }
  return kept;
}

struct SampleSets {
  std::set<std::uint32_t> coarse, truth;
};

// Checks the three defining properties of a hard-sample set by set algebra.
inline bool check_sampled_invariants(const SampleSets& sets,
                                     std::span<const std::uint32_t> sampled, double ratio) {
  const std::set<std::uint32_t> s(sampled.begin(), sampled.end());
  if (s.size() != sampled.size()) return false;  // duplicates
  std::set<std::uint32_t> uni = sets.coarse;
  uni.insert(sets.truth.begin(), sets.truth.end());
  std::set<std::uint32_t> overlap;
  for (std::uint32_t v : sets.coarse) {
    if (sets.truth.count(v)) overlap.insert(v);
  }
  // S within the union.
  for (std::uint32_t v : s) {
    if (!uni.count(v)) return false;
  }
  // Symmetric difference fully inside S.
  for (std::uint32_t v : uni) {
    if (!overlap.count(v) && !s.count(v)) return false;
  }
  // Exactly floor(ratio * |overlap|) overlap elements retained.
  std::size_t in_overlap = 0;
  for (std::uint32_t v : s) {
    if (overlap.count(v)) ++in_overlap;
  }
  const auto expect =
      static_cast<std::size_t>(std::floor(ratio * static_cast<double>(overlap.size())));
  return in_overlap == expect;
}

// Intersection-over-union straight from the definition.
inline double iou_from_maps(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth,
                            std::int32_t klass) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == klass, t = truth[i] == klass;
    if (p && t) ++inter;
    if (p || t) ++uni;
  }
  return uni == 0 ? -1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace oracles
