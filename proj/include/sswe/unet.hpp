#pragma once

#include <string>
#include <vector>

#include "sswe/autodiff.hpp"
#include "sswe/tensor.hpp"

namespace sswe {

/// Encoder-decoder layout. Each encoder block is two 3x3 convs and a 2x2
/// max-pool; the decoder mirrors it with nearest upsampling and skip
/// concatenation.
struct NetConfig {
  int encoder_blocks = 2;
  Index channels = 32;
  Index height = 64;
  Index width = 96;
  double leaky_alpha = 0.1;
  double dropout = 0.5;
  double init_range = 0.05;

  /// Throws ShapeError when the input grid does not survive the pooling ladder.
  void validate() const;

  Index latent_height() const { return height >> encoder_blocks; }
  Index latent_width() const { return width >> encoder_blocks; }
  Shape latent_shape() const { return {channels, latent_height(), latent_width()}; }
  Shape image_shape() const { return {1, height, width}; }

  bool operator==(const NetConfig&) const = default;
};

struct ConvSpec {
  std::string name;
  Index in_channels;
  Index out_channels;
};

/// Conv layers in evaluation order.
std::vector<ConvSpec> layer_specs(const NetConfig& config);

template <typename Scalar>
struct Layer {
  std::string name;
  Tensor<Scalar> weights;  // [C_out, C_in, 3, 3]
  Tensor<Scalar> bias;     // [C_out]
};

template <typename Scalar>
struct UNetParams {
  NetConfig config;
  std::vector<Layer<Scalar>> layers;

  const Layer<Scalar>& layer(const std::string& name) const {
    for (const auto& l : layers) {
      if (l.name == name) return l;
    }
    throw std::out_of_range("UNetParams: no layer " + name);
  }

  template <typename Other>
  UNetParams<Other> cast() const {
    UNetParams<Other> out{config, {}};
    for (const auto& l : layers) {
      out.layers.push_back({l.name, l.weights.template cast<Other>(), l.bias.template cast<Other>()});
    }
    return out;
  }
};

/// Weights ~ Uniform[-r, r) drawn layer by layer in row-major order; biases zero.
template <typename Scalar>
UNetParams<Scalar> build(const NetConfig& config, Rng& rng) {
  config.validate();
  UNetParams<Scalar> params{config, {}};
  const auto r = static_cast<Scalar>(config.init_range);
  for (const ConvSpec& spec : layer_specs(config)) {
    params.layers.push_back({spec.name, uniform<Scalar>(rng, {spec.out_channels, spec.in_channels, 3, 3}, -r, r),
                             Tensor<Scalar>({spec.out_channels})});
  }
  return params;
}

template <typename Scalar>
Index param_count(const UNetParams<Scalar>& params) {
  Index n = 0;
  for (const auto& l : params.layers) n += l.weights.size() + l.bias.size();
  return n;
}

/// Node handles of one traced forward pass.
struct UNetTrace {
  Var output;
  Var latent;
  std::vector<Var> weights;  // parallel to UNetParams::layers
  std::vector<Var> biases;
  std::vector<Shape> stage_shapes;  // activation shape after every conv, in order
};

/// Records the forward pass of `params` on `input` ([1,H,W] or [N,1,H,W]).
/// Parameters enter the graph as differentiable leaves.
/// With `latent_only` the decoder is skipped and `output` aliases `latent`.
template <typename Scalar>
UNetTrace trace(Graph<Scalar>& g, const UNetParams<Scalar>& params, Var input, Mode mode, Rng& rng,
                bool latent_only = false) {
  const NetConfig& cfg = params.config;
  const Tensor<Scalar>& x = g.value(input);
  const bool batched = x.rank() == 4;
  const Index c = batched ? x.dim(1) : x.dim(0);
  if ((x.rank() != 3 && x.rank() != 4) || c != 1 || x.dim(x.rank() - 2) != cfg.height ||
      x.dim(x.rank() - 1) != cfg.width) {
    throw ShapeError("unet: input " + to_string(x.shape()) + " does not match config " +
                     to_string(cfg.image_shape()));
  }
  const auto expected = layer_specs(cfg);
  if (expected.size() != params.layers.size()) throw ShapeError("unet: layer count mismatch");

  UNetTrace t;
  for (const auto& l : params.layers) {
    t.weights.push_back(g.parameter(l.weights));
    t.biases.push_back(g.parameter(l.bias));
  }
  const auto alpha = static_cast<Scalar>(cfg.leaky_alpha);
  std::size_t next = 0;
  auto conv_act = [&](Var in) {
    Var y = leaky_relu(g, conv2d(g, in, t.weights[next], t.biases[next]), alpha);
    ++next;
    t.stage_shapes.push_back(g.value(y).shape());
    return y;
  };

  Var h = input;
  std::vector<Var> skips;
  for (int b = 0; b < cfg.encoder_blocks; ++b) {
    h = conv_act(conv_act(h));
    skips.push_back(h);
    h = dropout(g, maxpool2(g, h), cfg.dropout, mode, rng);
  }
  h = conv_act(conv_act(h));
  t.latent = h;
  if (latent_only) {
    t.output = h;
    return t;
  }
  for (int b = cfg.encoder_blocks - 1; b >= 0; --b) {
    h = concat_channels(g, upsample2_nearest(g, h), skips[static_cast<std::size_t>(b)]);
    h = conv_act(conv_act(h));
  }
  Var out = conv2d(g, h, t.weights[next], t.biases[next]);
  t.stage_shapes.push_back(g.value(out).shape());
  t.output = sigmoid(g, out);
  return t;
}

template <typename Scalar>
Tensor<Scalar> forward(const UNetParams<Scalar>& params, const Tensor<Scalar>& x, Mode mode, Rng& rng) {
  Graph<Scalar> g;
  const UNetTrace t = trace(g, params, g.constant(x), mode, rng);
  return g.value(t.output);
}

/// Latent feature map (output of the last bottleneck conv).
template <typename Scalar>
Tensor<Scalar> encode(const UNetParams<Scalar>& params, const Tensor<Scalar>& x, Mode mode, Rng& rng) {
  Graph<Scalar> g;
  const UNetTrace t = trace(g, params, g.constant(x), mode, rng, true);
  return g.value(t.latent);
}

}  // namespace sswe
