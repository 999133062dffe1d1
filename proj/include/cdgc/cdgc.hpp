#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdgc/conv.hpp"
#include "cdgc/graph.hpp"
#include "cdgc/ops.hpp"
#include "cdgc/params.hpp"
#include "cdgc/rng.hpp"
#include "cdgc/tensor.hpp"

namespace cdgc {

enum class FusionMode { concat, sum };

inline FusionMode parse_fusion(const std::string& text) {
  if (text == "concat") return FusionMode::concat;
  if (text == "sum") return FusionMode::sum;
  throw ConfigError("unknown fusion mode: " + text + " (expected concat or sum)");
}

inline const char* fusion_name(FusionMode mode) {
  return mode == FusionMode::concat ? "concat" : "sum";
}

/// Configuration and learnable state of the class-wise graph reasoning block:
/// shared similarity transforms, one graph-convolution weight per group, a 1x1
/// aggregation over the stacked group outputs, and a 1x1 fusion with the
/// incoming feature.  `num_groups` is the class count in class-wise mode and 1
/// for the single-graph baseline.
template <typename T>
struct CdgcConfig {
  std::size_t num_groups = 0;
  std::size_t channels = 0;
  FusionMode fusion = FusionMode::concat;

  Tensor<T> sim_w;                       // [C x C]
  Tensor<T> sim_w_prime;                 // [C x C]
  std::vector<Tensor<T>> group_weights;  // num_groups of [C x C]
  Tensor<T> aggregation_kernel;          // [C x (G*C) x 1 x 1]
  Tensor<T> aggregation_bias;            // [C]
  Tensor<T> fusion_kernel;               // [C x (2C or C) x 1 x 1]
  Tensor<T> fusion_bias;                 // [C]
};

/// Bounded uniform init with scale sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> init_weight(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const T s = static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
  return Tensor<T>::uniform(std::move(shape), -s, s, rng);
}

template <typename T>
CdgcConfig<T> make_cdgc(std::size_t num_groups, std::size_t channels, FusionMode fusion,
                        Rng& rng) {
  if (num_groups < 1 || channels < 1) {
    throw ConfigError("make_cdgc: need at least one group and one channel");
  }
  CdgcConfig<T> cfg;
  cfg.num_groups = num_groups;
  cfg.channels = channels;
  cfg.fusion = fusion;
  cfg.sim_w = init_weight<T>({channels, channels}, channels, channels, rng);
  cfg.sim_w_prime = init_weight<T>({channels, channels}, channels, channels, rng);
  cfg.group_weights.reserve(num_groups);
  for (std::size_t g = 0; g < num_groups; ++g) {
    cfg.group_weights.push_back(init_weight<T>({channels, channels}, channels, channels, rng));
  }
  const std::size_t stacked = num_groups * channels;
  cfg.aggregation_kernel = init_weight<T>({channels, stacked, 1, 1}, stacked, channels, rng);
  cfg.aggregation_bias = Tensor<T>::zeros({channels});
  const std::size_t fused_in = fusion == FusionMode::concat ? 2 * channels : channels;
  cfg.fusion_kernel = init_weight<T>({channels, fused_in, 1, 1}, fused_in, channels, rng);
  cfg.fusion_bias = Tensor<T>::zeros({channels});
  return cfg;
}

template <typename T>
void register_cdgc_params(CdgcConfig<T>& cfg, ParamStore<T>& store) {
  store.add("cdgc.sim_w", cfg.sim_w);
  store.add("cdgc.sim_w_prime", cfg.sim_w_prime);
  for (std::size_t g = 0; g < cfg.group_weights.size(); ++g) {
    store.add("cdgc.group." + std::to_string(g) + ".weight", cfg.group_weights[g]);
  }
  store.add("cdgc.aggregate.weight", cfg.aggregation_kernel);
  store.add("cdgc.aggregate.bias", cfg.aggregation_bias);
  store.add("cdgc.fuse.weight", cfg.fusion_kernel);
  store.add("cdgc.fuse.bias", cfg.fusion_bias);
}

/// Intermediate and final products of one refinement pass.
template <typename T>
struct RefinedFeature {
  Tensor<T> per_class;   // [G x C x N], group slice zero where the sampled set is empty
  Tensor<T> aggregated;  // [C x H x W]
  Tensor<T> fused;       // [C x H x W]
};

/// One graph propagation step: relu(A . X . W).
template <typename T>
Tensor<T> graph_convolve(const Tensor<T>& adjacency, const Tensor<T>& x_nodes,
                         const Tensor<T>& weight) {
  if (adjacency.rank() != 2 || adjacency.shape()[0] != adjacency.shape()[1]) {
    throw ShapeError("graph_convolve: adjacency must be square, got " +
                     shape_str(adjacency.shape()));
  }
  if (x_nodes.rank() != 2 || x_nodes.shape()[0] != adjacency.shape()[0]) {
    throw ShapeError("graph_convolve: node features " + shape_str(x_nodes.shape()) +
                     " do not match adjacency " + shape_str(adjacency.shape()));
  }
  if (weight.shape() != Shape{x_nodes.shape()[1], x_nodes.shape()[1]}) {
    throw ShapeError("graph_convolve: weight " + shape_str(weight.shape()) +
                     " does not match feature width");
  }
  return relu(matmul(matmul(adjacency, x_nodes), weight));
}

/// Per-group graph reasoning over the sampled node sets.  Each group builds
/// its similarity graph over its own nodes only and propagates features with
/// its group weight; nodes outside the group stay zero in that slice.  The
/// result stacks to [G x C x N].
template <typename T>
Tensor<T> class_wise_reason(const Tensor<T>& x, const SampledSet& sampled,
                            const CdgcConfig<T>& cfg) {
  if (x.rank() != 3 || x.shape()[0] != cfg.channels) {
    throw ShapeError("class_wise_reason: expected feature [C x H x W] with C = " +
                     std::to_string(cfg.channels) + ", got " + shape_str(x.shape()));
  }
  const std::size_t n = x.shape()[1] * x.shape()[2];
  if (sampled.num_nodes != n) {
    throw ShapeError("class_wise_reason: sampled set covers " +
                     std::to_string(sampled.num_nodes) + " nodes, feature has " +
                     std::to_string(n));
  }
  if (sampled.groups.size() != cfg.num_groups) {
    throw ConfigError("class_wise_reason: sampled set has " +
                      std::to_string(sampled.groups.size()) + " groups, module expects " +
                      std::to_string(cfg.num_groups));
  }

  const std::size_t c = cfg.channels;
  // All groups share one [N x C] node view of the feature map.
  Tensor<T> nodes = transpose(reshape(x, {c, n}));

  std::vector<std::uint32_t> local;
  std::vector<Tensor<T>> slices;
  slices.reserve(cfg.num_groups);
  for (std::size_t g = 0; g < cfg.num_groups; ++g) {
    const std::vector<std::uint32_t>& support = sampled.groups[g];
    if (support.empty()) {
      slices.push_back(Tensor<T>::zeros({1, c, n}));
      continue;
    }
    // Work on the [k x C] slice of the group's own nodes; this is value-equal
    // to the dense N x N route because excluded rows and columns there are
    // exactly zero and contribute nothing.
    Tensor<T> xs = take_rows(nodes, support);
    Tensor<T> lhs = matmul(xs, transpose(cfg.sim_w));
    Tensor<T> rhs = matmul(xs, transpose(cfg.sim_w_prime));
    Tensor<T> block = matmul(lhs, transpose(rhs));  // [k x k] similarity
    local.resize(support.size());
    for (std::uint32_t i = 0; i < local.size(); ++i) local[i] = i;
    Tensor<T> adjacency = row_softmax(block, local);
    Tensor<T> propagated = graph_convolve(adjacency, xs, cfg.group_weights[g]);  // [k x C]
    Tensor<T> scattered = put_rows(propagated, support, n);                      // [N x C]
    slices.push_back(reshape(transpose(scattered), {1, c, n}));
  }
  return concat(std::span<const Tensor<T>>(slices), 0);
}

/// Mix the stacked group outputs [G x C x N] down to one [C x H x W] feature
/// with the learned 1x1 aggregation.
template <typename T>
Tensor<T> aggregate_classes(const Tensor<T>& per_class, const CdgcConfig<T>& cfg, std::size_t h,
                            std::size_t w) {
  if (per_class.rank() != 3 || per_class.shape()[0] != cfg.num_groups ||
      per_class.shape()[1] != cfg.channels) {
    throw ShapeError("aggregate_classes: expected [G x C x N], got " +
                     shape_str(per_class.shape()));
  }
  if (per_class.shape()[2] != h * w) {
    throw ShapeError("aggregate_classes: node count does not equal H*W");
  }
  Tensor<T> stacked = reshape(per_class, {cfg.num_groups * cfg.channels, h, w});
  return conv2d(stacked, cfg.aggregation_kernel, cfg.aggregation_bias);
}

/// Combine the incoming feature with its refinement, then project back to C
/// channels through the learned 1x1 fusion.
template <typename T>
Tensor<T> fuse(const Tensor<T>& original, const Tensor<T>& refined, const CdgcConfig<T>& cfg) {
  if (original.shape() != refined.shape()) {
    throw ShapeError("fuse: features " + shape_str(original.shape()) + " and " +
                     shape_str(refined.shape()) + " differ");
  }
  if (cfg.fusion == FusionMode::concat) {
    Tensor<T> joined = concat({original, refined}, 0);
    return conv2d(joined, cfg.fusion_kernel, cfg.fusion_bias);
  }
  return conv2d(add(original, refined), cfg.fusion_kernel, cfg.fusion_bias);
}

/// Full refinement pass: reason per group, aggregate, fuse.
template <typename T>
RefinedFeature<T> cdgc_forward(const Tensor<T>& x, const SampledSet& sampled,
                               const CdgcConfig<T>& cfg) {
  RefinedFeature<T> out;
  out.per_class = class_wise_reason(x, sampled, cfg);
  out.aggregated = aggregate_classes(out.per_class, cfg, x.shape()[1], x.shape()[2]);
  out.fused = fuse(x, out.aggregated, cfg);
  return out;
}

}  // namespace cdgc
