#include <gtest/gtest.h>

#include "sswe/train.hpp"
#include "sswe/unet.hpp"
#include "support/gradcheck.hpp"

namespace sswe {
namespace {

// Layer-by-layer parameter arithmetic, written independently of layer_specs.
Index count_oracle(int blocks, Index c) {
  auto conv = [](Index in, Index out) { return 9 * in * out + out; };
  Index n = conv(1, c) + conv(c, c);                  // first encoder block
  n += (2 * blocks - 2) * conv(c, c);                 // remaining encoder convs
  n += 2 * conv(c, c);                                // latent
  n += blocks * (conv(2 * c, c) + conv(c, c));        // decoder blocks
  return n + conv(c, 1);                              // output conv
}

Tensorf random_image(const NetConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  return uniform<float>(rng, c.image_shape(), 0.0f, 1.0f);
}

TEST(UNet, LayerParameterCounts) {
  Rng rng(1);
  const auto p = build<float>(NetConfig{}, rng);
  const auto& first = p.layer("enc-conv1");
  EXPECT_EQ(first.weights.size() + first.bias.size(), 320);
  const auto& hidden = p.layer("lat-conv1");
  EXPECT_EQ(hidden.weights.size() + hidden.bias.size(), 9248);
  Index encoder = 0;
  for (const auto& l : p.layers) {
    if (l.name.rfind("enc-", 0) == 0) encoder += l.weights.size() + l.bias.size();
  }
  EXPECT_EQ(encoder, 28064);
}

TEST(UNet, ParameterCountMatchesOracle) {
  Rng rng(1);
  EXPECT_EQ(param_count(build<float>(NetConfig{}, rng)), 102273);
  EXPECT_EQ(count_oracle(2, 32), 102273);
  Index previous = 0;
  for (int blocks : {2, 3, 4}) {
    NetConfig c;
    c.encoder_blocks = blocks;
    const Index n = param_count(build<float>(c, rng));
    EXPECT_EQ(n, count_oracle(blocks, 32));
    EXPECT_GT(n, previous);
    previous = n;
  }
}

TEST(UNet, LayerOrderAndNames) {
  const auto specs = layer_specs(NetConfig{});
  std::vector<std::string> names;
  for (const auto& s : specs) names.push_back(s.name);
  EXPECT_EQ(names, (std::vector<std::string>{"enc-conv1", "enc-conv2", "enc-conv3", "enc-conv4", "lat-conv1",
                                             "lat-conv2", "dec-conv1", "dec-conv2", "dec-conv3", "dec-conv4",
                                             "out-conv"}));
  EXPECT_EQ(specs[6].in_channels, 64);
  EXPECT_EQ(specs[8].in_channels, 64);
  EXPECT_EQ(specs[10].out_channels, 1);
}

TEST(UNet, FreshBuildHasZeroBiasesAndBoundedWeights) {
  Rng rng(2);
  const auto p = build<float>(NetConfig{}, rng);
  for (const auto& l : p.layers) {
    for (float b : l.bias.values()) EXPECT_EQ(b, 0.0f);
    for (float w : l.weights.values()) {
      ASSERT_GE(w, -0.05f);
      ASSERT_LT(w, 0.05f);
    }
  }
}

TEST(UNet, ShapeLadderMirrors) {
  Rng rng(3);
  const NetConfig cfg;
  const auto p = build<float>(cfg, rng);
  Graph<float> g;
  const auto t = trace(g, p, g.constant(random_image(cfg, 4)), Mode::train, rng);
  const std::vector<Shape> expected{{32, 64, 96}, {32, 64, 96}, {32, 32, 48}, {32, 32, 48}, {32, 16, 24},
                                    {32, 16, 24}, {32, 32, 48}, {32, 32, 48}, {32, 64, 96}, {32, 64, 96},
                                    {1, 64, 96}};
  EXPECT_EQ(t.stage_shapes, expected);
  EXPECT_EQ(g.value(t.latent).shape(), (Shape{32, 16, 24}));
  EXPECT_EQ(g.value(t.output).shape(), (Shape{1, 64, 96}));
}

TEST(UNet, OutputsStrictlyInsideUnitInterval) {
  NetConfig cfg;
  cfg.init_range = 1.0;  // large weights push the pre-activation far into the tails
  Rng rng(5);
  const auto p = build<float>(cfg, rng);
  const Tensorf y = forward(p, random_image(cfg, 6), Mode::infer, rng);
  for (float v : y.values()) {
    ASSERT_GT(v, 0.0f);
    ASSERT_LT(v, 1.0f);
  }
}

TEST(UNet, ZeroParametersGiveHalfAndZeroLatent) {
  Rng rng(7);
  auto p = build<float>(NetConfig{}, rng);
  for (auto& l : p.layers) l.weights.array().setZero();
  const Tensorf y = forward(p, random_image(p.config, 8), Mode::infer, rng);
  for (float v : y.values()) ASSERT_EQ(v, 0.5f);
  const Tensorf z = encode(p, Tensorf(p.config.image_shape()), Mode::infer, rng);
  EXPECT_EQ(z, Tensorf({32, 16, 24}));
}

TEST(UNet, InferModeIsPure) {
  Rng rng(9);
  const auto p = build<float>(NetConfig{}, rng);
  const Tensorf x = random_image(p.config, 10);
  Rng a(1), b(2);
  EXPECT_EQ(forward(p, x, Mode::infer, a), forward(p, x, Mode::infer, b));
  EXPECT_EQ(encode(p, x, Mode::infer, a), encode(p, x, Mode::infer, b));
}

TEST(UNet, TrainModeDropoutDependsOnStream) {
  Rng rng(11);
  const auto p = build<float>(NetConfig{}, rng);
  const Tensorf x = random_image(p.config, 12);
  Rng a(1), b(1), c(2);
  const Tensorf ya = forward(p, x, Mode::train, a);
  EXPECT_EQ(ya, forward(p, x, Mode::train, b));
  EXPECT_NE(ya, forward(p, x, Mode::train, c));
}

TEST(UNet, BatchedMatchesSingle) {
  Rng rng(13);
  const auto p = build<float>(NetConfig{}, rng);
  const Tensorf x0 = random_image(p.config, 14), x1 = random_image(p.config, 15);
  const std::vector<const Tensorf*> xs{&x0, &x1};
  const Tensorf batch = forward(p, stack(xs), Mode::infer, rng);
  const Tensorf y1 = forward(p, x1, Mode::infer, rng);
  for (Index i = 0; i < y1.size(); ++i) EXPECT_NEAR(batch[y1.size() + i], y1[i], 1e-6f);
}

TEST(UNet, RejectsBadShapes) {
  NetConfig cfg;
  cfg.height = 66;
  EXPECT_THROW(cfg.validate(), ShapeError);
  Rng rng(16);
  const auto p = build<float>(NetConfig{}, rng);
  EXPECT_THROW(forward(p, Tensorf({1, 32, 96}), Mode::infer, rng), ShapeError);
  EXPECT_THROW(forward(p, Tensorf({2, 64, 96}), Mode::infer, rng), ShapeError);
}

TEST(UNet, EveryLayerReceivesGradient) {
  Rng rng(17);
  const auto p = build<float>(NetConfig{}, rng);
  Graph<float> g;
  const auto t = trace(g, p, g.constant(random_image(p.config, 18)), Mode::train, rng);
  Rng lr(19);
  const Tensorf label = uniform<float>(lr, {1, 64, 96}, 0.0f, 1.0f);
  g.backward(masked_rmse(g, t.output, label, Tensorf({1, 64, 96}, 1.0f)));
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const Tensorf& gw = g.grad(t.weights[l]);
    Index nonzero = 0;
    for (float v : gw.values()) nonzero += v != 0.0f;
    EXPECT_GT(static_cast<double>(nonzero) / static_cast<double>(gw.size()), 0.9) << p.layers[l].name;
  }
}

TEST(UNet, FullNetworkGradientMatchesFiniteDifferences) {
  NetConfig cfg;
  cfg.height = 8;
  cfg.width = 12;
  cfg.init_range = 0.2;  // keeps gradients well above finite-difference roundoff
  const auto r = testing::check_network_gradients(cfg, 30, 6);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_GE(r.checked, 21u * 6u);
}

}  // namespace
}  // namespace sswe
