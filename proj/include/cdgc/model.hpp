#pragma once

#include <optional>
#include <string>

#include "cdgc/basic_net.hpp"
#include "cdgc/cdgc.hpp"
#include "cdgc/graph.hpp"
#include "cdgc/params.hpp"

namespace cdgc {

/// Which refinement path an experiment exercises.
enum class Variant {
  none,       // coarse head only, no graph reasoning
  plain_gcn,  // one graph over every node, ignoring classes
  class_sim,  // per-class graphs over the coarse prediction's nodes
  class_ds,   // per-class graphs with hard-sample selection during training
};

struct VariantSpec {
  Variant kind = Variant::class_ds;
  double ratio = 1.0;  // overlap sampling fraction, used by class_ds only

  bool uses_refinement() const { return kind != Variant::none; }

  static VariantSpec parse(const std::string& text) {
    VariantSpec spec;
    if (text == "none") {
      spec.kind = Variant::none;
    } else if (text == "plain-gcn") {
      spec.kind = Variant::plain_gcn;
    } else if (text == "class-sim") {
      spec.kind = Variant::class_sim;
    } else if (text.rfind("class-ds:", 0) == 0) {
      spec.kind = Variant::class_ds;
      const std::string arg = text.substr(9);
      try {
        std::size_t used = 0;
        spec.ratio = std::stod(arg, &used);
        if (used != arg.size()) throw std::invalid_argument(arg);
      } catch (const std::exception&) {
        throw ConfigError("bad sampling ratio in variant: " + text);
      }
      if (!(spec.ratio >= 0.0 && spec.ratio <= 1.0)) {
        throw ConfigError("sampling ratio must lie in [0, 1]: " + text);
      }
    } else {
      throw ConfigError("unknown variant: " + text +
                        " (expected none, plain-gcn, class-sim or class-ds:<ratio>)");
    }
    return spec;
  }

  std::string str() const {
    switch (kind) {
      case Variant::none: return "none";
      case Variant::plain_gcn: return "plain-gcn";
      case Variant::class_sim: return "class-sim";
      case Variant::class_ds: {
        std::string out = "class-ds:" + std::to_string(ratio);
        // std::to_string pads with zeros; trim to a tidy ratio string.
        while (out.back() == '0') out.pop_back();
        if (out.back() == '.') out.push_back('0');
        return out;
      }
    }
    throw UsageError("unreachable variant kind");
  }
};

/// The coarse-to-fine segmentation model: basic network plus the graph
/// refinement block.  The refinement block uses one group per class, or a
/// single group when the variant ignores classes.
template <typename T>
struct SegModel {
  BasicNetConfig net_cfg;
  VariantSpec variant;
  BasicNet<T> net;
  CdgcConfig<T> refine;
};

template <typename T>
SegModel<T> make_model(const BasicNetConfig& net_cfg, const VariantSpec& variant,
                       FusionMode fusion, Rng& rng) {
  SegModel<T> model;
  model.net_cfg = net_cfg;
  model.variant = variant;
  model.net = make_basic_net<T>(net_cfg, rng);
  const std::size_t groups = variant.kind == Variant::plain_gcn ? 1 : net_cfg.num_classes;
  model.refine = make_cdgc<T>(groups, net_cfg.feature_channels, fusion, rng);
  return model;
}

template <typename T>
void register_model_params(SegModel<T>& model, ParamStore<T>& store) {
  register_basic_net_params(model.net, store);
  register_cdgc_params(model.refine, store);
}

/// Everything one forward pass produces; refinement products are absent under
/// the coarse-only variant.
template <typename T>
struct PipelineOutput {
  Tensor<T> coarse_logits;
  Tensor<T> aux_logits;
  std::optional<SampledSet> sampled;
  std::optional<RefinedFeature<T>> refined;
  std::optional<Tensor<T>> refined_logits;
};

/// Node selection for one training step.  Class-wise variants mask by the
/// coarse prediction; the dynamic variant additionally pulls in ground truth
/// to mine hard samples.
template <typename T>
SampledSet select_train_nodes(const VariantSpec& variant, const Tensor<T>& coarse_logits,
                              std::span<const std::int32_t> labels, Rng& rng) {
  const std::size_t n = coarse_logits.shape()[1] * coarse_logits.shape()[2];
  switch (variant.kind) {
    case Variant::plain_gcn:
      return all_nodes_sample(n);
    case Variant::class_sim:
      return inference_sample(class_masks_from_logits(coarse_logits));
    case Variant::class_ds: {
      ClassMasks coarse = class_masks_from_logits(coarse_logits);
      ClassMasks gt = masks_from_labels(labels, coarse.num_classes);
      return dynamic_sample(coarse, gt, variant.ratio, rng);
    }
    case Variant::none:
      break;
  }
  throw UsageError("select_train_nodes: coarse-only variant samples no nodes");
}

/// Node selection at inference: the coarse prediction alone decides the
/// groups, for every variant.
template <typename T>
SampledSet select_eval_nodes(const VariantSpec& variant, const Tensor<T>& coarse_logits) {
  const std::size_t n = coarse_logits.shape()[1] * coarse_logits.shape()[2];
  if (variant.kind == Variant::plain_gcn) return all_nodes_sample(n);
  return inference_sample(class_masks_from_logits(coarse_logits));
}

/// Shared forward pass.  `labels` drives hard-sample mining and must be
/// present exactly when training a dynamic-sampling model.
template <typename T>
PipelineOutput<T> forward_pipeline(SegModel<T>& model, const Tensor<T>& image,
                                   std::span<const std::int32_t> labels, bool training, Rng& rng) {
  PipelineOutput<T> out;
  TrunkOutput<T> trunk = forward_trunk(model.net, image);
  out.coarse_logits = coarse_head(model.net, trunk.feature);
  out.aux_logits = aux_head(model.net, trunk.aux_feature);
  if (!model.variant.uses_refinement()) return out;

  out.sampled = training ? select_train_nodes(model.variant, out.coarse_logits, labels, rng)
                         : select_eval_nodes(model.variant, out.coarse_logits);
  out.refined = cdgc_forward(trunk.feature, *out.sampled, model.refine);
  out.refined_logits = refined_head(model.net, out.refined->fused);
  return out;
}

}  // namespace cdgc
