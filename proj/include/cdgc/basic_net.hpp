#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cdgc/cdgc.hpp"
#include "cdgc/conv.hpp"
#include "cdgc/params.hpp"
#include "cdgc/rng.hpp"
#include "cdgc/tensor.hpp"

namespace cdgc {

/// One trunk convolution: `channels` output maps from a square `kernel` with
/// the given dilation; padding is chosen to preserve the spatial size.
struct ConvSpec {
  std::size_t channels = 16;
  std::size_t kernel = 3;
  std::size_t dilation = 1;
};

/// Shape of the toy segmentation network: a small stack of dilated
/// convolutions stands in for a real backbone, with 1x1 classifier heads for
/// the coarse, refined and auxiliary predictions.
struct BasicNetConfig {
  std::size_t in_channels = 3;
  std::size_t feature_channels = 16;
  std::size_t num_classes = 3;
  std::vector<ConvSpec> trunk;
  std::size_t aux_tap = 2;  // trunk layer whose activation feeds the auxiliary head

  /// Growing dilations widen the receptive field without shrinking the map;
  /// the closing 1x1 layer mixes channels down to the shared feature.
  static std::vector<ConvSpec> default_trunk(std::size_t channels) {
    return {{channels, 3, 1}, {channels, 3, 1}, {channels, 3, 2}, {channels, 3, 4},
            {channels, 1, 1}};
  }

  void validate() const {
    if (num_classes < 2) throw ConfigError("basic net: need at least two classes");
    if (in_channels < 1 || feature_channels < 1) {
      throw ConfigError("basic net: channel counts must be positive");
    }
    if (trunk.empty()) throw ConfigError("basic net: trunk must have at least one layer");
    if (aux_tap >= trunk.size()) throw ConfigError("basic net: aux tap beyond last trunk layer");
    for (const ConvSpec& spec : trunk) {
      if (spec.kernel % 2 == 0) {
        throw ConfigError("basic net: even kernels cannot preserve the spatial size");
      }
      if (spec.channels < 1 || spec.dilation < 1) {
        throw ConfigError("basic net: conv spec must have positive channels and dilation");
      }
    }
    if (trunk.back().channels != feature_channels) {
      throw ConfigError("basic net: last trunk layer must emit the shared feature channels");
    }
  }
};

/// Learnable state of the basic network.
template <typename T>
struct BasicNet {
  BasicNetConfig cfg;
  std::vector<Tensor<T>> trunk_weights;
  std::vector<Tensor<T>> trunk_biases;
  Tensor<T> coarse_weight, coarse_bias;    // [M x C x 1 x 1], [M]
  Tensor<T> refined_weight, refined_bias;  // [M x C x 1 x 1], [M]
  Tensor<T> aux_weight, aux_bias;          // [M x C_tap x 1 x 1], [M]
};

template <typename T>
BasicNet<T> make_basic_net(const BasicNetConfig& cfg, Rng& rng) {
  cfg.validate();
  BasicNet<T> net;
  net.cfg = cfg;
  std::size_t channels = cfg.in_channels;
  for (const ConvSpec& spec : cfg.trunk) {
    const std::size_t fan = spec.kernel * spec.kernel;
    net.trunk_weights.push_back(init_weight<T>({spec.channels, channels, spec.kernel, spec.kernel},
                                               channels * fan, spec.channels * fan, rng));
    net.trunk_biases.push_back(Tensor<T>::zeros({spec.channels}));
    channels = spec.channels;
  }
  const std::size_t m = cfg.num_classes;
  const std::size_t c = cfg.feature_channels;
  net.coarse_weight = init_weight<T>({m, c, 1, 1}, c, m, rng);
  net.coarse_bias = Tensor<T>::zeros({m});
  net.refined_weight = init_weight<T>({m, c, 1, 1}, c, m, rng);
  net.refined_bias = Tensor<T>::zeros({m});
  const std::size_t tap_channels = cfg.trunk[cfg.aux_tap].channels;
  net.aux_weight = init_weight<T>({m, tap_channels, 1, 1}, tap_channels, m, rng);
  net.aux_bias = Tensor<T>::zeros({m});
  return net;
}

template <typename T>
void register_basic_net_params(BasicNet<T>& net, ParamStore<T>& store) {
  for (std::size_t i = 0; i < net.trunk_weights.size(); ++i) {
    store.add("trunk." + std::to_string(i) + ".weight", net.trunk_weights[i]);
    store.add("trunk." + std::to_string(i) + ".bias", net.trunk_biases[i]);
  }
  store.add("coarse.weight", net.coarse_weight);
  store.add("coarse.bias", net.coarse_bias);
  store.add("refined.weight", net.refined_weight);
  store.add("refined.bias", net.refined_bias);
  store.add("aux.weight", net.aux_weight);
  store.add("aux.bias", net.aux_bias);
}

/// Shared feature plus the intermediate activation tapped for the auxiliary
/// head.
template <typename T>
struct TrunkOutput {
  Tensor<T> feature;
  Tensor<T> aux_feature;
};

/// Run the trunk with ReLU between layers (none after the last).  The tapped
/// activation is the value the next layer consumes, so it includes that ReLU
/// unless the tap is the final layer.
template <typename T>
TrunkOutput<T> forward_trunk(const BasicNet<T>& net, const Tensor<T>& image) {
  if (image.rank() != 3 || image.shape()[0] != net.cfg.in_channels) {
    throw ShapeError("forward_trunk: expected image [" + std::to_string(net.cfg.in_channels) +
                     " x H x W], got " + shape_str(image.shape()));
  }
  TrunkOutput<T> out;
  Tensor<T> x = image;
  for (std::size_t i = 0; i < net.cfg.trunk.size(); ++i) {
    const ConvSpec& spec = net.cfg.trunk[i];
    ConvGeometry geo;
    geo.dilation = spec.dilation;
    geo.padding = spec.dilation * (spec.kernel - 1) / 2;
    x = conv2d(x, net.trunk_weights[i], net.trunk_biases[i], geo);
    if (i + 1 < net.cfg.trunk.size()) x = relu(x);
    if (i == net.cfg.aux_tap) out.aux_feature = x;
  }
  out.feature = x;
  return out;
}

template <typename T>
Tensor<T> coarse_head(const BasicNet<T>& net, const Tensor<T>& feature) {
  return conv2d(feature, net.coarse_weight, net.coarse_bias);
}

template <typename T>
Tensor<T> refined_head(const BasicNet<T>& net, const Tensor<T>& fused) {
  return conv2d(fused, net.refined_weight, net.refined_bias);
}

template <typename T>
Tensor<T> aux_head(const BasicNet<T>& net, const Tensor<T>& aux_feature) {
  return conv2d(aux_feature, net.aux_weight, net.aux_bias);
}

}  // namespace cdgc
