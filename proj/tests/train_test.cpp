#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "eeggaze/eval.hpp"
#include "eeggaze/io.hpp"
#include "eeggaze/train.hpp"

namespace eeggaze {
namespace {

using TD = Tensor<double>;

TEST(Schedule, PaperBreakpoints) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(lr_at_epoch(c, 0), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(c, 5), 1e-4);
  EXPECT_NEAR(lr_at_epoch(c, 6), 1e-5, 1e-18);
  EXPECT_NEAR(lr_at_epoch(c, 12), 1e-6, 1e-19);
  EXPECT_THROW(lr_at_epoch(c, 15), ConfigError);
}

TEST(Schedule, NonIncreasingPiecewiseConstant) {
  TrainConfig c;
  c.epochs = 40;
  c.decay_every = 7;
  c.decay_factor = 0.5;
  for (std::size_t e = 1; e < c.epochs; ++e) {
    EXPECT_LE(lr_at_epoch(c, e), lr_at_epoch(c, e - 1));
    EXPECT_EQ(lr_at_epoch(c, e) < lr_at_epoch(c, e - 1), e % 7 == 0) << e;
  }
}

TEST(TrainConfig, ValidationAndJson) {
  TrainConfig c;
  c.seed = 99;
  c.epochs = 3;
  EXPECT_EQ(TrainConfig::from_json(c.to_json()), c);
  EXPECT_THROW(TrainConfig::from_json(R"({"epoch": 3})"), ConfigError);
  c.decay_factor = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(MseLoss, Examples) {
  TD a({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(mse_loss(a, a).item(), 0.0);
  EXPECT_EQ(mse_loss(TD({1, 2}, {1, 1}), TD({1, 2}, {0, 0})).item(), 1.0);
  EXPECT_THROW(mse_loss(TD({1, 2}, 0.0), TD({2, 1}, 0.0)), ShapeError);
  RngStream rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t b = 1 + rng.below(10);
    PredictionSet ps;
    std::vector<double> p, t;
    for (std::size_t i = 0; i < b; ++i) {
      ps.pred.push_back({rng.normal(), rng.normal()});
      ps.truth.push_back({rng.normal(), rng.normal()});
      p.insert(p.end(), {ps.pred[i].x, ps.pred[i].y});
      t.insert(t.end(), {ps.truth[i].x, ps.truth[i].y});
    }
    EXPECT_NEAR(mse_loss(TD({b, 2}, p), TD({b, 2}, t)).item(), std::pow(rmse(ps), 2), 1e-6);
  }
}

TEST(Adam, ZeroGradientLeavesParams) {
  TD p({3}, {1, 2, 3}, true);
  Adam<double> opt({{"p", p}});
  std::fill(p.grad_mut().begin(), p.grad_mut().end(), 0.0);
  opt.step(0.1);
  EXPECT_EQ(std::vector<double>(p.values().begin(), p.values().end()), (std::vector<double>{1, 2, 3}));
}

TEST(Adam, FirstStepIsAboutLr) {
  TD p({1}, {0.5}, true);
  Adam<double> opt({{"p", p}});
  p.grad_mut()[0] = 1.0;
  opt.step(0.1);
  EXPECT_NEAR(p.values()[0] - 0.5, -0.1 / (1 + 1e-8), 1e-15);
  EXPECT_EQ(opt.state().t, 1u);
}

TEST(Adam, MinimizesSquare) {
  TD theta({1}, {1.0}, true);
  Adam<double> opt({{"theta", theta}});
  for (int i = 0; i < 100; ++i) {
    opt.zero_grad();
    sum_all(square(theta)).backward();
    opt.step(0.1);
  }
  EXPECT_LT(std::abs(theta.values()[0]), 0.1);
}

TEST(Adam, MatchesFormulaOver1000Steps) {
  RngStream rng(8);
  const std::size_t n = 7;
  TD p({n}, std::vector<double>(n, 0.0), true);
  for (auto& v : p.values_mut()) v = rng.normal();
  std::vector<double> ref(p.values().begin(), p.values().end()), m(n, 0), v(n, 0);
  Adam<double> opt({{"p", p}}, 0.9, 0.999, 1e-8);
  for (int t = 1; t <= 1000; ++t) {
    const double lr = rng.uniform(1e-4, 1e-2);
    std::vector<double> g(n);
    for (auto& x : g) x = rng.normal() * 3;
    std::copy(g.begin(), g.end(), p.grad_mut().begin());
    opt.step(lr);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(p.values()[i], ref[i], 1e-12);
  for (double x : opt.state().v[0]) EXPECT_GE(x, 0.0);
}

TEST(Adam, NonFiniteGradientRejected) {
  TD p({2}, {1, 2}, true);
  Adam<double> opt({{"p", p}});
  p.grad_mut()[1] = NAN;
  EXPECT_THROW(opt.step(0.1), NumericError);
  EXPECT_EQ(p.values()[0], 1.0);
  EXPECT_EQ(opt.state().t, 0u);
}

ModelConfig small_config() {
  ModelConfig c;
  c.channels = 6;
  c.timepoints = 24;
  c.padded_timepoints = 24;
  c.temporal_filters = 4;
  c.temporal_kernel = 4;
  c.temporal_stride = 4;
  c.spatial_kernel_height = 6;
  c.spatial_out = c.embed_dim = 8;
  c.vit_depth = 1;
  c.vit_heads = 2;
  c.vit_mlp_dim = 16;
  c.head_hidden = {8, 12};
  return c;
}

struct Splits {
  Dataset train, val, test;
};

Splits small_splits(std::uint64_t seed = 3) {
  SyntheticConfig s;
  s.n_samples = 240;
  s.n_participants = 12;
  s.channels = 6;
  s.timepoints = 24;
  s.signal_channels = {0, 2, 4};
  s.seed = seed;
  auto ds = generate_synthetic(s);
  auto sp = split_by_participant(ds, SplitSpec{0.7, 0.15, 0.15, 1});
  return {ds.subset(sp.train), ds.subset(sp.val), ds.subset(sp.test)};
}

TEST(Adam, StepTouchesParamCount) {
  auto model = build_model<float>(small_config(), RngStream(1));
  Adam<float> opt(model.parameters());
  auto sp = small_splits();
  std::vector<std::size_t> idx{0, 1, 2};
  auto y = model.forward(make_batch<float>(sp.train, idx));
  mse_loss(y, Tensor<float>({3, 2}, 0.0f)).backward();
  EXPECT_EQ(opt.step(1e-3), param_count(small_config()).total);
}

TEST(Train, SelectsArgminAndIsDeterministic) {
  auto sp = small_splits();
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 16;
  tc.lr0 = 3e-3;
  tc.decay_every = 2;
  tc.seed = 5;
  auto m1 = build_model<float>(small_config(), RngStream(1));
  auto m2 = build_model<float>(small_config(), RngStream(1));
  std::size_t calls = 0;
  auto r1 = train(m1, sp.train, sp.val, tc, [&](const EpochRecord&) { ++calls; });
  auto r2 = train(m2, sp.train, sp.val, tc);
  EXPECT_EQ(calls, 5u);
  ASSERT_EQ(r1.history.epochs.size(), 5u);
  std::size_t argmin = 0;
  for (std::size_t e = 0; e < 5; ++e) {
    const auto& a = r1.history.epochs[e];
    const auto& b = r2.history.epochs[e];
    EXPECT_EQ(a.train_mse, b.train_mse);
    EXPECT_EQ(a.val_rmse, b.val_rmse);
    EXPECT_EQ(a.lr, lr_at_epoch(tc, e));
    EXPECT_GT(a.seconds, 0.0);
    if (a.val_rmse < r1.history.epochs[argmin].val_rmse) argmin = e;
  }
  EXPECT_EQ(r1.best.epoch, argmin);
  EXPECT_EQ(r1.best.val_rmse, r1.history.epochs[argmin].val_rmse);
  EXPECT_EQ(r1.best, r2.best);
  // The model now holds the selected weights.
  EXPECT_EQ(rmse(evaluate(m1, sp.val, std::nullopt, tc.batch_size).predictions), r1.best.val_rmse);
}

TEST(Train, Errors) {
  auto sp = small_splits();
  auto model = build_model<float>(small_config(), RngStream(1));
  TrainConfig tc;
  tc.epochs = 1;
  EXPECT_THROW(train(model, Dataset{6, 24, {}, {}, {}}, sp.val, tc), ShapeError);
  SyntheticConfig s;
  s.n_samples = 4;
  s.channels = 7;
  s.timepoints = 24;
  EXPECT_THROW(train(model, generate_synthetic(s), sp.val, tc), ShapeError);
}

TEST(Checkpoint, RoundTripReproducesEvaluation) {
  auto sp = small_splits();
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 32;
  tc.lr0 = 1e-3;
  auto model = build_model<float>(small_config(), RngStream(7));
  auto res = train(model, sp.train, sp.val, tc);
  const auto dir = std::filesystem::temp_directory_path() / "eeggaze_train_test";
  std::filesystem::create_directories(dir);
  save_checkpoint(res.best, dir / "best.egck");
  auto loaded = load_checkpoint(dir / "best.egck");
  EXPECT_EQ(loaded, res.best);
  auto again = model_from_checkpoint<float>(loaded);
  auto a = predict(model, sp.val), b = predict(again, sp.val);
  EXPECT_EQ(a, b);

  const auto bytes = encode_checkpoint(res.best);
  EXPECT_EQ(bytes.substr(0, 4), "EGCK");
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), TruncatedError);
  auto bad = bytes;
  bad[1] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), BadMagicError);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(decode_checkpoint(bad), VersionError);

  auto other = build_model<float>(ModelConfig::desk(), RngStream(1));
  EXPECT_THROW(restore_checkpoint(other, res.best), ConfigError);
}

TEST(History, CsvRoundTrip) {
  TrainHistory h;
  h.epochs.push_back({0, 1e-4, 0.1 + 0.2, 1.0 / 3, 12.5});
  h.epochs.push_back({1, 1e-5, 0.01, 0.2, 1e-3});
  const auto csv = h.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,lr,train_mse,val_rmse,seconds");
  auto back = TrainHistory::from_csv(csv);
  ASSERT_EQ(back.epochs.size(), 2u);
  EXPECT_EQ(back.epochs[0].train_mse, 0.1 + 0.2);
  EXPECT_EQ(back.epochs[1].seconds, 1e-3);
  EXPECT_EQ(back.to_csv(), csv);
}

}  // namespace
}  // namespace eeggaze
