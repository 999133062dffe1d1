#include "cdgc/gradsuite.hpp"

#include <cmath>
#include <functional>
#include <utility>

#include "cdgc/cdgc.hpp"
#include "cdgc/conv.hpp"
#include "cdgc/graph.hpp"
#include "cdgc/loss.hpp"
#include "cdgc/model.hpp"
#include "cdgc/ops.hpp"
#include "cdgc/rng.hpp"

namespace cdgc {

namespace {

using TD = Tensor<double>;

TD param(Shape shape, double lo, double hi, Rng& rng) {
  TD t = TD::uniform(std::move(shape), lo, hi, rng);
  t.set_requires_grad(true);
  return t;
}

/// Random values bounded away from zero, for testing kinked activations at
/// well-defined points.
TD signed_param(Shape shape, double lo, double hi, Rng& rng) {
  TD t = TD::uniform(shape, lo, hi, rng);
  auto vals = t.mutable_values();
  for (double& v : vals) {
    if (rng.next_u64() & 1) v = -v;
  }
  t.set_requires_grad(true);
  return t;
}

/// Fixed random mixing matrix so reductions see non-uniform output gradients.
TD fixed(Shape shape, Rng& rng) { return TD::uniform(std::move(shape), -1.0, 1.0, rng); }

TD weighted_sum(const TD& y, const TD& k) { return sum(mul(y, k)); }

void run_entry(std::vector<GradSuiteEntry>& out, std::string name, std::vector<TD> params,
               const std::function<TD()>& f, double eps = 1e-4) {
  GradSuiteEntry entry;
  entry.name = std::move(name);
  entry.report = grad_check<double>(f, params, eps);
  entry.passed = entry.report.max_rel_err <= kGradTolerance;
  out.push_back(std::move(entry));
}

void elementwise_entries(std::vector<GradSuiteEntry>& out) {
  {
    Rng rng(101);
    TD a = param({6}, -1, 1, rng), b = param({6}, -1, 1, rng);
    TD k = fixed({6}, rng);
    run_entry(out, "add.vec", {a, b}, [=] { return weighted_sum(add(a, b), k); });
  }
  {
    Rng rng(102);
    TD a = param({2, 3}, -1, 1, rng), b = param({2, 3}, -1, 1, rng);
    TD k = fixed({2, 3}, rng);
    run_entry(out, "add.mat", {a, b}, [=] { return weighted_sum(add(a, b), k); });
  }
  {
    Rng rng(103);
    TD a = param({3, 2}, -1, 1, rng), b = param({3, 2}, -1, 1, rng);
    TD k = fixed({3, 2}, rng);
    run_entry(out, "sub.mat", {a, b}, [=] { return weighted_sum(sub(a, b), k); });
  }
  {
    Rng rng(104);
    TD a = param({2, 4}, -1, 1, rng), b = param({2, 4}, -1, 1, rng);
    TD k = fixed({2, 4}, rng);
    run_entry(out, "mul.mat", {a, b}, [=] { return weighted_sum(mul(a, b), k); });
  }
  {
    Rng rng(105);
    TD a = param({2, 2, 3}, -1, 1, rng), b = param({2, 2, 3}, -1, 1, rng);
    TD k = fixed({2, 2, 3}, rng);
    run_entry(out, "mul.cube", {a, b}, [=] { return weighted_sum(mul(a, b), k); });
  }
  {
    Rng rng(106);
    TD a = param({5}, -1, 1, rng);
    TD k = fixed({5}, rng);
    run_entry(out, "scalar.affine", {a},
              [=] { return weighted_sum(neg(add_scalar(mul_scalar(a, 1.7), -0.3)), k); });
  }
  {
    Rng rng(107);
    TD a = param({2, 3}, -1, 1, rng);
    TD k = fixed({2, 3}, rng);
    run_entry(out, "exp.mat", {a}, [=] { return weighted_sum(exp(a), k); });
  }
  {
    Rng rng(108);
    TD a = param({2, 3}, 0.5, 2.0, rng);
    TD k = fixed({2, 3}, rng);
    run_entry(out, "log.mat", {a}, [=] { return weighted_sum(log(a), k); });
  }
  {
    Rng rng(109);
    TD a = signed_param({3, 3}, 0.2, 1.0, rng);  // keeps the kink at 0 out of reach
    TD k = fixed({3, 3}, rng);
    run_entry(out, "relu.mat", {a}, [=] { return weighted_sum(relu(a), k); });
  }
}

void shape_entries(std::vector<GradSuiteEntry>& out) {
  {
    Rng rng(201);
    TD a = param({2, 6}, -1, 1, rng);
    TD k = fixed({4, 3}, rng);
    run_entry(out, "reshape_transpose", {a},
              [=] { return weighted_sum(transpose(reshape(a, {3, 4})), k); });
  }
  {
    Rng rng(202);
    TD a = param({1, 3}, -1, 1, rng), b = param({2, 3}, -1, 1, rng), c = param({1, 3}, -1, 1, rng);
    TD k = fixed({4, 3}, rng);
    run_entry(out, "concat.axis0", {a, b, c},
              [=] { return weighted_sum(concat({a, b, c}, 0), k); });
  }
  {
    Rng rng(203);
    TD a = param({2, 2, 1}, -1, 1, rng), b = param({2, 2, 3}, -1, 1, rng);
    TD k = fixed({2, 2, 4}, rng);
    run_entry(out, "concat.axis2", {a, b}, [=] { return weighted_sum(concat({a, b}, 2), k); });
  }
  {
    Rng rng(204);
    TD a = param({2, 3, 2}, -1, 1, rng);
    run_entry(out, "sum.cube", {a}, [=] { return sum(a); });
  }
  {
    Rng rng(205);
    TD a = param({4, 3}, -1, 1, rng);
    run_entry(out, "mean.mat", {a}, [=] { return mean(a); });
  }
  {
    Rng rng(206);
    TD a = param({5, 3}, -1, 1, rng);
    std::vector<std::uint32_t> take{1, 3};
    std::vector<std::uint32_t> put{0, 4};
    TD k = fixed({6, 3}, rng);
    run_entry(out, "take_put_rows", {a},
              [=] { return weighted_sum(put_rows(take_rows(a, take), put, 6), k); });
  }
  {
    Rng rng(207);
    TD x = param({3, 2, 2}, -1, 1, rng), b = param({3}, -1, 1, rng);
    TD k = fixed({3, 2, 2}, rng);
    run_entry(out, "bias_add", {x, b}, [=] { return weighted_sum(bias_add(x, b), k); });
  }
}

void matmul_conv_entries(std::vector<GradSuiteEntry>& out) {
  {
    Rng rng(301);
    TD a = param({3, 4}, -1, 1, rng), b = param({4, 2}, -1, 1, rng);
    TD k = fixed({3, 2}, rng);
    run_entry(out, "matmul.3x4x2", {a, b}, [=] { return weighted_sum(matmul(a, b), k); });
  }
  {
    Rng rng(302);
    TD a = param({8, 8}, -1, 1, rng), b = param({8, 8}, -1, 1, rng);
    TD k = fixed({8, 8}, rng);
    run_entry(out, "matmul.8x8x8", {a, b}, [=] { return weighted_sum(matmul(a, b), k); });
  }
  {
    Rng rng(303);
    TD x = param({2, 3, 3}, -1, 1, rng), w = param({3, 2, 1, 1}, -1, 1, rng),
       b = param({3}, -1, 1, rng);
    TD k = fixed({3, 3, 3}, rng);
    run_entry(out, "conv2d.1x1", {x, w, b},
              [=] { return weighted_sum(conv2d(x, w, b), k); });
  }
  {
    Rng rng(304);
    TD x = param({2, 5, 5}, -1, 1, rng), w = param({3, 2, 3, 3}, -1, 1, rng),
       b = param({3}, -1, 1, rng);
    TD k = fixed({3, 5, 5}, rng);
    ConvGeometry geo{.stride = 1, .padding = 1, .dilation = 1};
    run_entry(out, "conv2d.3x3.pad1", {x, w, b},
              [=] { return weighted_sum(conv2d(x, w, b, geo), k); });
  }
  {
    Rng rng(305);
    TD x = param({1, 8, 8}, -1, 1, rng), w = param({2, 1, 3, 3}, -1, 1, rng),
       b = param({2}, -1, 1, rng);
    TD k = fixed({2, 8, 8}, rng);
    ConvGeometry geo{.stride = 1, .padding = 2, .dilation = 2};
    run_entry(out, "conv2d.3x3.dil2", {x, w, b},
              [=] { return weighted_sum(conv2d(x, w, b, geo), k); });
  }
  {
    Rng rng(306);
    TD x = param({2, 5, 5}, -1, 1, rng), w = param({3, 2, 3, 3}, -1, 1, rng),
       b = param({3}, -1, 1, rng);
    TD k = fixed({3, 3, 3}, rng);
    ConvGeometry geo{.stride = 2, .padding = 1, .dilation = 1};
    run_entry(out, "conv2d.3x3.stride2", {x, w, b},
              [=] { return weighted_sum(conv2d(x, w, b, geo), k); });
  }
}

/// Smallest |pre-activation| over a detached mirror of relu(A Xs W) per group;
/// used to reject seeds that would park a kink within finite-difference reach.
double graph_relu_margin(const TD& x_nodes, const TD& w, const TD& w_prime,
                         const std::vector<TD>& group_weights, const SampledSet& sampled) {
  double margin = 1e30;
  TD nodes = transpose(x_nodes.detach());
  for (std::size_t g = 0; g < sampled.groups.size(); ++g) {
    const auto& support = sampled.groups[g];
    if (support.empty()) continue;
    TD xs = take_rows(nodes, support);
    TD block = matmul(matmul(xs, transpose(w.detach())),
                      transpose(matmul(xs, transpose(w_prime.detach()))));
    std::vector<std::uint32_t> local(support.size());
    for (std::uint32_t i = 0; i < local.size(); ++i) local[i] = i;
    TD pre = matmul(matmul(row_softmax(block, local), xs), group_weights[g].detach());
    for (double v : pre.values()) margin = std::min(margin, std::abs(v));
  }
  return margin;
}

void graph_entries(std::vector<GradSuiteEntry>& out) {
  {
    Rng rng(401);
    TD x = param({3, 6}, -1, 1, rng);  // C=3, N=6
    TD w = param({3, 3}, -0.7, 0.7, rng), wp = param({3, 3}, -0.7, 0.7, rng);
    std::vector<std::uint32_t> support{0, 2, 3, 5};
    TD k = fixed({6, 6}, rng);
    run_entry(out, "similarity_scores", {x, w, wp},
              [=] { return weighted_sum(similarity_scores(x, w, wp, support), k); });
  }
  {
    Rng rng(402);
    TD f = param({5, 5}, -2, 2, rng);
    std::vector<std::uint32_t> support{0, 2, 4};
    TD k = fixed({5, 5}, rng);
    run_entry(out, "row_softmax", {f}, [=] { return weighted_sum(row_softmax(f, support), k); });
  }
  {
    // relu(A X W) with a seed giving pre-activations clear of the kink.
    for (std::uint64_t seed = 403;; ++seed) {
      Rng rng(seed);
      TD x = param({5, 3}, -1, 1, rng);  // nodes as rows here
      TD w = param({3, 3}, -0.8, 0.8, rng);
      TD scores = fixed({5, 5}, rng);
      std::vector<std::uint32_t> all{0, 1, 2, 3, 4};
      TD a = row_softmax(scores, all).detach();
      TD pre = matmul(matmul(a, x.detach()), w.detach());
      double margin = 1e30;
      for (double v : pre.values()) margin = std::min(margin, std::abs(v));
      if (margin < 1e-3) continue;
      TD k = fixed({5, 3}, rng);
      run_entry(out, "graph_convolve", {x, w},
                [=] { return weighted_sum(graph_convolve(a, x, w), k); });
      break;
    }
  }
  {
    // The graph-reasoning block end to end (reason, aggregate, fuse), with one
    // deliberately empty group.
    for (std::uint64_t seed = 404;; ++seed) {
      Rng rng(seed);
      CdgcConfig<double> cfg = make_cdgc<double>(2, 3, FusionMode::concat, rng);
      TD x = param({3, 2, 3}, -1, 1, rng);  // C=3, H=2, W=3, N=6
      SampledSet sampled;
      sampled.num_nodes = 6;
      sampled.ratio = 1.0;
      sampled.groups = {{0, 2, 3, 5}, {}};
      TD x_nodes = reshape(x.detach(), {3, 6});
      if (graph_relu_margin(x_nodes, cfg.sim_w, cfg.sim_w_prime, cfg.group_weights, sampled) <
          1e-3) {
        continue;
      }
      std::vector<TD> params{x, cfg.sim_w, cfg.sim_w_prime};
      for (TD& gw : cfg.group_weights) params.push_back(gw);
      params.insert(params.end(), {cfg.aggregation_kernel, cfg.aggregation_bias, cfg.fusion_kernel,
                                   cfg.fusion_bias});
      for (TD& p : params) p.set_requires_grad(true);
      run_entry(out, "cdgc_forward", params,
                [=] { return sum(cdgc_forward(x, sampled, cfg).fused); });
      break;
    }
  }
}

void loss_entries(std::vector<GradSuiteEntry>& out) {
  {
    Rng rng(501);
    TD logits = param({3, 2, 2}, -1.5, 1.5, rng);
    std::vector<std::int32_t> labels{0, 2, 1, 255};
    run_entry(out, "cross_entropy", {logits}, [=] { return cross_entropy(logits, labels); });
  }
  {
    // OHEM keeps a probability-thresholded pixel set; the seed must keep every
    // pixel's true-class probability away from the threshold so the kept set
    // is stable under perturbation.
    const double threshold = 0.6;
    for (std::uint64_t seed = 502;; ++seed) {
      Rng rng(seed);
      TD logits = param({3, 2, 2}, -1.5, 1.5, rng);
      std::vector<std::int32_t> labels{1, 0, 2, 1};
      const std::size_t n = 4;
      bool ok = true;
      std::size_t below = 0;
      for (std::size_t p = 0; p < n; ++p) {
        double hi = logits.values()[p];
        for (std::size_t c = 1; c < 3; ++c) hi = std::max(hi, logits.values()[c * n + p]);
        double denom = 0;
        for (std::size_t c = 0; c < 3; ++c) denom += std::exp(logits.values()[c * n + p] - hi);
        const double p_true =
            std::exp(logits.values()[static_cast<std::size_t>(labels[p]) * n + p] - hi) / denom;
        if (std::abs(p_true - threshold) < 1e-2) ok = false;
        if (p_true < threshold) ++below;
      }
      if (!ok || below < 2) continue;
      run_entry(out, "ohem_loss", {logits},
                [=] { return ohem_loss(logits, labels, threshold, 1); });
      break;
    }
  }
  {
    Rng rng(503);
    TD a = param({1}, 0.5, 2.0, rng), b = param({1}, 0.5, 2.0, rng), c = param({1}, 0.5, 2.0, rng);
    run_entry(out, "total_loss", {a, b, c}, [=] { return total_loss(a, b, c, LossWeights{}); });
  }
}

/// Loss of the whole coarse-to-fine pipeline with the sampled set frozen, so
/// the check exercises exactly the differentiable part of a training step.
void pipeline_entry(std::vector<GradSuiteEntry>& out) {
  BasicNetConfig net_cfg;
  net_cfg.in_channels = 2;
  net_cfg.feature_channels = 4;
  net_cfg.num_classes = 2;
  net_cfg.trunk = {{4, 3, 1}, {4, 1, 1}};
  net_cfg.aux_tap = 0;

  const std::size_t h = 4, w = 4, n = h * w;
  const double ohem_threshold = 0.7;

  for (std::uint64_t seed = 601;; ++seed) {
    Rng rng(seed);
    SegModel<double> model =
        make_model<double>(net_cfg, VariantSpec::parse("class-ds:0.5"), FusionMode::concat, rng);
    TD image = param({2, h, w}, 0.0, 1.0, rng);
    std::vector<std::int32_t> labels(n);
    for (std::int32_t& y : labels) y = static_cast<std::int32_t>(rng.uniform_int(2));

    // Freeze the sampled set from the initial coarse prediction, exactly as a
    // training step would before the backward pass.
    TrunkOutput<double> trunk0 = forward_trunk(model.net, image);
    TD coarse0 = coarse_head(model.net, trunk0.feature);
    ClassMasks gt = masks_from_labels(labels, 2);
    Rng sample_rng = rng.split();
    SampledSet sampled =
        dynamic_sample(class_masks_from_logits(coarse0), gt, 0.5, sample_rng);

    // Reject seeds that put any kinked quantity near its breakpoint: trunk
    // relu inputs, graph relu inputs, and OHEM probabilities vs threshold.
    // The trunk is mirrored on detached tensors to reach its pre-activations.
    double margin = 1e30;
    {
      TD tx = image.detach();
      for (std::size_t i = 0; i < net_cfg.trunk.size(); ++i) {
        ConvGeometry geo;
        geo.dilation = net_cfg.trunk[i].dilation;
        geo.padding = net_cfg.trunk[i].dilation * (net_cfg.trunk[i].kernel - 1) / 2;
        TD pre = conv2d(tx, model.net.trunk_weights[i].detach(),
                        model.net.trunk_biases[i].detach(), geo);
        if (i + 1 < net_cfg.trunk.size()) {
          for (double v : pre.values()) margin = std::min(margin, std::abs(v));
          tx = relu(pre);
        }
      }
    }
    TD x_nodes = reshape(trunk0.feature.detach(), {4, n});
    margin = std::min(margin, graph_relu_margin(x_nodes, model.refine.sim_w,
                                                model.refine.sim_w_prime,
                                                model.refine.group_weights, sampled));
    RefinedFeature<double> refined0 = cdgc_forward(trunk0.feature.detach(), sampled, model.refine);
    TD rl0 = refined_head(model.net, refined0.fused);
    std::size_t below = 0;
    for (std::size_t p = 0; p < n; ++p) {
      double hi = std::max(rl0.values()[p], rl0.values()[n + p]);
      double denom = std::exp(rl0.values()[p] - hi) + std::exp(rl0.values()[n + p] - hi);
      const double p_true =
          std::exp(rl0.values()[static_cast<std::size_t>(labels[p]) * n + p] - hi) / denom;
      margin = std::min(margin, std::abs(p_true - ohem_threshold));
      if (p_true < ohem_threshold) ++below;
    }
    if (margin < 1e-3 || below < 2) continue;

    ParamStore<double> store;
    register_model_params(model, store);
    std::vector<TD> params = store.tensors();
    auto f = [&model, image, labels, sampled, ohem_threshold] {
      TrunkOutput<double> trunk = forward_trunk(model.net, image);
      TD l_c = cross_entropy(coarse_head(model.net, trunk.feature), labels);
      TD l_a = cross_entropy(aux_head(model.net, trunk.aux_feature), labels);
      RefinedFeature<double> refined = cdgc_forward(trunk.feature, sampled, model.refine);
      TD l_f = ohem_loss(refined_head(model.net, refined.fused), labels, ohem_threshold, 1);
      return total_loss(l_c, l_f, l_a, LossWeights{});
    };
    run_entry(out, "pipeline.2class.4x4", std::move(params), f);
    break;
  }
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite() {
  std::vector<GradSuiteEntry> out;
  elementwise_entries(out);
  shape_entries(out);
  matmul_conv_entries(out);
  graph_entries(out);
  loss_entries(out);
  pipeline_entry(out);
  return out;
}

}  // namespace cdgc
