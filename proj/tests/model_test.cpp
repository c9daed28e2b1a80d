#include <gtest/gtest.h>

#include <cmath>

#include "eeggaze/gradcheck.hpp"
#include "eeggaze/model.hpp"
#include "test_util.hpp"

namespace eeggaze {
namespace {

using testing::random_tensor;
using TD = Tensor<double>;

ModelConfig tiny(std::size_t channels = 4, std::size_t height = 4) {
  ModelConfig c;
  c.channels = channels;
  c.timepoints = 30;
  c.padded_timepoints = 32;
  c.temporal_filters = 2;
  c.temporal_kernel = 8;
  c.temporal_stride = 8;
  c.spatial_kernel_height = height;
  c.spatial_stride = 1;
  c.spatial_out = 4;
  c.embed_dim = 4;
  c.vit_depth = 1;
  c.vit_heads = 2;
  c.vit_mlp_dim = 8;
  c.head_hidden = {4, 5};
  return c;
}

TEST(ModelConfig, DefaultSpatialKernelAndTokens) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(token_count(c), 32u);
  EXPECT_EQ(c.depthwise_multiplier(), 3u);
  EXPECT_EQ(c.pad_before(), 6u);
  EXPECT_EQ(c.pad_after(), 6u);
  RngStream rng(1);
  auto m = build_model<float>(c, rng);
  EXPECT_EQ(m.conv_spatial_weight().shape(), (Shape{768, 1, 129, 1}));
}

TEST(ModelConfig, VariantBuilds) {
  auto c = ModelConfig::eegvit_variant();
  EXPECT_EQ(c.temporal_kernel, 36u);
  EXPECT_EQ(c.spatial_kernel_height, 8u);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.temporal_positions(), 14u);
  EXPECT_GT(token_count(c), token_count(ModelConfig{}));
}

TEST(ModelConfig, ViolationsNamed) {
  auto expect_msg = [](ModelConfig c, const std::string& needle) {
    try {
      c.validate();
      ADD_FAILURE() << "no error for " << needle;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  ModelConfig c;
  c.vit_heads = 5;
  expect_msg(c, "vit_heads");
  c = ModelConfig{};
  c.spatial_out = 700;
  expect_msg(c, "temporal_filters");
  c = ModelConfig{};
  c.embed_dim = 512;
  expect_msg(c, "embed_dim");
  c = ModelConfig{};
  c.padded_timepoints = 400;
  expect_msg(c, "padded_timepoints");
  RngStream rng(1);
  c = ModelConfig{};
  c.vit_heads = 5;
  EXPECT_THROW(build_model<float>(c, rng), ConfigError);
}

TEST(ModelConfig, TokenCountFormula) {
  ModelConfig c;
  c.padded_timepoints = 504;
  c.temporal_kernel = 36;
  c.temporal_stride = 36;
  EXPECT_EQ(c.temporal_positions(), 14u);
  c.temporal_kernel = 504;
  c.temporal_stride = 7;
  EXPECT_EQ(token_count(c), 1u);
}

TEST(ModelConfig, JsonRoundTrip) {
  auto c = ModelConfig::eegvit_variant();
  c.head_hidden = {12, 34, 56};
  EXPECT_EQ(ModelConfig::from_json(c.to_json()), c);
  EXPECT_THROW(ModelConfig::from_json(R"({"bogus": 1})"), ConfigError);
}

TEST(ParamCount, DefaultLayers) {
  auto p = param_count(ModelConfig{});
  EXPECT_EQ(p.at("conv_temporal"), 4352u);
  EXPECT_EQ(p.at("conv_spatial"), 99840u);
  EXPECT_EQ(p.at("head2"), 2002u);
  std::size_t sum = 0;
  for (auto& [name, n] : p.layers) sum += n;
  EXPECT_EQ(sum, p.total);
}

TEST(ParamCount, MatchesParameterRegistry) {
  for (auto c : {tiny(), ModelConfig::desk(), tiny(6, 2)}) {
    RngStream rng(3);
    auto m = build_model<float>(c, rng);
    std::size_t n = 0;
    for (auto& p : m.parameters()) {
      EXPECT_TRUE(p.tensor.requires_grad()) << p.name;
      n += p.tensor.numel();
    }
    EXPECT_EQ(n, param_count(c).total);
  }
}

TEST(Forward, PaperBatchShape) {
  RngStream rng(1);
  auto m = build_model<float>(ModelConfig{}, rng);
  m.set_training(false);
  NoGradGuard guard;
  ForwardTrace tr;
  auto y = m.forward(random_tensor<float>({64, 1, 129, 500}, 2), &tr);
  EXPECT_EQ(y.shape(), (Shape{64, 2}));
  EXPECT_EQ(tr.padded, (Shape{64, 1, 129, 512}));
  EXPECT_EQ(tr.temporal, (Shape{64, 256, 129, 32}));
  EXPECT_EQ(tr.spatial, (Shape{64, 768, 1, 32}));
  EXPECT_EQ(tr.tokens, (Shape{64, 32, 768}));
  EXPECT_EQ(tr.embedded, (Shape{64, 33, 768}));
  EXPECT_EQ(tr.cls, (Shape{64, 768}));
}

TEST(Forward, TraceMatchesFormulasOnRandomConfigs) {
  RngStream pick(77);
  for (int trial = 0; trial < 6; ++trial) {
    ModelConfig c = tiny();
    c.channels = 3 + pick.below(6);
    c.spatial_kernel_height = 1 + pick.below(c.channels);
    c.spatial_stride = 1 + pick.below(3);
    c.timepoints = 20 + pick.below(20);
    c.temporal_kernel = 2 + pick.below(6);
    c.temporal_stride = 1 + pick.below(c.temporal_kernel);
    c.padded_timepoints = c.timepoints + pick.below(4);
    c.temporal_filters = 1 + pick.below(3);
    c.spatial_out = c.embed_dim = c.temporal_filters * 2;
    c.vit_heads = 2;
    ASSERT_NO_THROW(c.validate());
    RngStream rng(trial);
    auto m = build_model<double>(c, rng);
    ForwardTrace tr;
    const std::size_t b = 1 + pick.below(3);
    auto y = m.forward(random_tensor<double>({b, 1, c.channels, c.timepoints}, trial), &tr);
    EXPECT_EQ(y.shape(), (Shape{b, 2}));
    EXPECT_EQ(tr.temporal, (Shape{b, c.temporal_filters, c.channels, c.temporal_positions()}));
    EXPECT_EQ(tr.spatial, (Shape{b, c.spatial_out, c.spatial_positions(), c.temporal_positions()}));
    EXPECT_EQ(tr.tokens, (Shape{b, token_count(c), c.embed_dim}));
  }
}

TEST(Forward, EvalDeterministicAndInputChecked) {
  RngStream rng(5);
  auto m = build_model<double>(tiny(), rng);
  m.set_training(false);
  auto x = random_tensor<double>({3, 1, 4, 30}, 1);
  auto a = m.forward(x);
  auto b = m.forward(x);
  for (std::size_t k = 0; k < a.numel(); ++k) EXPECT_EQ(a.values()[k], b.values()[k]);
  EXPECT_THROW(m.forward(random_tensor<double>({3, 1, 5, 30}, 1)), ShapeError);
}

TEST(Forward, SameSeedSameModel) {
  auto a = build_model<float>(ModelConfig::desk(), RngStream(4));
  auto b = build_model<float>(ModelConfig::desk(), RngStream(4));
  auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_TRUE(std::equal(pa[i].tensor.values().begin(), pa[i].tensor.values().end(),
                           pb[i].tensor.values().begin()));
  }
}

TEST(Forward, EndToEndGradCheck) {
  RngStream rng(2);
  auto m = build_model<double>(tiny(), rng);
  m.set_training(false);
  auto x = random_tensor<double>({2, 1, 4, 30}, 5);
  std::vector<TD> inputs;
  for (auto& p : m.parameters()) inputs.push_back(p.tensor);
  auto r = grad_check([&] { return sum_all(square(m.forward(x))); }, inputs);
  EXPECT_LT(r.max_relative_error, 1e-3);
}

TEST(Permutation, IdentityAndInvolution) {
  RngStream rng(1);
  auto m = build_model<double>(tiny(), rng);
  auto same = apply_channel_permutation_to_weights(m, ChannelPermutation::identity(4));
  auto w = m.conv_spatial_weight().values();
  auto ws = same.conv_spatial_weight().values();
  EXPECT_TRUE(std::equal(w.begin(), w.end(), ws.begin()));
  auto rev = ChannelPermutation::reverse(4);
  auto twice = apply_channel_permutation_to_weights(apply_channel_permutation_to_weights(m, rev), rev);
  auto wt = twice.conv_spatial_weight().values();
  EXPECT_TRUE(std::equal(w.begin(), w.end(), wt.begin()));
}

TEST(Permutation, ForwardEquivariance) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RngStream rng(seed);
    auto m = build_model<double>(tiny(6, 6), rng);
    m.set_training(false);
    auto perm = ChannelPermutation::shuffle(6, seed + 10);
    auto pm = apply_channel_permutation_to_weights(m, perm);
    pm.set_training(false);
    auto x = random_tensor<double>({2, 1, 6, 30}, seed);
    auto px = index_select(x, 2, perm.mapping);
    auto a = m.forward(x), b = pm.forward(px);
    for (std::size_t k = 0; k < a.numel(); ++k) EXPECT_NEAR(a.values()[k], b.values()[k], 1e-9);
  }
}

TEST(Permutation, Refusals) {
  RngStream rng(1);
  auto partial = build_model<double>(tiny(6, 2), rng);
  EXPECT_THROW(apply_channel_permutation_to_weights(partial, ChannelPermutation::identity(6)), ConfigError);
  auto full = build_model<double>(tiny(), rng);
  EXPECT_THROW(apply_channel_permutation_to_weights(full, ChannelPermutation{{0, 0, 1, 2}}), ConfigError);
}

TEST(Model, CloneIsIndependent) {
  RngStream rng(1);
  auto m = build_model<double>(tiny(), rng);
  auto c = m.clone();
  c.conv_spatial_weight().values_mut()[0] += 1.0;
  EXPECT_NE(c.conv_spatial_weight().values()[0], m.conv_spatial_weight().values()[0]);
  m.copy_state_from(c);
  EXPECT_EQ(c.conv_spatial_weight().values()[0], m.conv_spatial_weight().values()[0]);
}

}  // namespace
}  // namespace eeggaze
