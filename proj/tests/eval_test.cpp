#include <gtest/gtest.h>

#include <cmath>

#include "eeggaze/eval.hpp"
#include "eeggaze/rng.hpp"

namespace eeggaze {
namespace {

PredictionSet worked_set() {
  PredictionSet ps;
  ps.truth = {{0, 0}, {0, 0}};
  ps.pred = {{3, 4}, {4, 3}};
  return ps;
}

PredictionSet random_set(RngStream& rng, std::size_t n, double scale = 100.0) {
  PredictionSet ps;
  for (std::size_t i = 0; i < n; ++i) {
    ps.truth.push_back({rng.normal() * scale, rng.normal() * scale});
    ps.pred.push_back({rng.normal() * scale, rng.normal() * scale});
  }
  return ps;
}

// Straight from the definitions, kept independent of eval.cpp.
double oracle_rmse(const PredictionSet& ps) {
  long double s = 0;
  for (std::size_t i = 0; i < ps.size(); ++i)
    s += std::pow(ps.truth[i].x - ps.pred[i].x, 2) + std::pow(ps.truth[i].y - ps.pred[i].y, 2);
  return static_cast<double>(std::sqrt(s / (2.0L * ps.size())));
}

TEST(Metrics, HandExamples) {
  PredictionSet one;
  one.truth = {{0, 0}};
  one.pred = {{3, 4}};
  EXPECT_NEAR(rmse(one), 3.5355339059327378, 1e-12);
  EXPECT_NEAR(rmse(worked_set()), 3.5355339059327378, 1e-12);
  EXPECT_NEAR(med(worked_set()), 5.0, 1e-12);
  PredictionSet two;
  two.truth = {{0, 0}, {3, 4}};
  two.pred = {{0, 0}, {0, 0}};
  EXPECT_NEAR(med(two), 2.5, 1e-12);
  PredictionSet same;
  same.truth = same.pred = {{1, 2}, {3, 4}};
  EXPECT_EQ(rmse(same), 0.0);
  EXPECT_EQ(med(same), 0.0);
}

TEST(Metrics, Errors) {
  PredictionSet empty;
  EXPECT_THROW(rmse(empty), ShapeError);
  EXPECT_THROW(med(empty), ShapeError);
  auto bad = worked_set();
  bad.pred.pop_back();
  EXPECT_THROW(rmse(bad), ShapeError);
  bad = worked_set();
  bad.pred[0].x = NAN;
  EXPECT_THROW(med(bad), ShapeError);
}

TEST(Metrics, RandomSetProperties) {
  RngStream rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    auto ps = random_set(rng, 1 + rng.below(30));
    const double r = rmse(ps), m = med(ps);
    EXPECT_NEAR(r, oracle_rmse(ps), 1e-9 * r);
    EXPECT_LE(m, std::sqrt(2.0) * r * (1 + 1e-12));
    const double dx = rng.normal() * 1000, dy = rng.normal() * 1000, c = rng.normal() * 10;
    auto shifted = ps, scaled = ps;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      for (auto* v : {&shifted.truth, &shifted.pred}) (*v)[i] = {(*v)[i].x + dx, (*v)[i].y + dy};
      for (auto* v : {&scaled.truth, &scaled.pred}) (*v)[i] = {(*v)[i].x * c, (*v)[i].y * c};
    }
    EXPECT_NEAR(rmse(shifted), r, 1e-9 * std::max(1.0, r));
    EXPECT_NEAR(med(shifted), m, 1e-9 * std::max(1.0, m));
    EXPECT_NEAR(rmse(scaled), std::abs(c) * r, 1e-9 * std::max(1.0, std::abs(c) * r));
    EXPECT_NEAR(med(scaled), std::abs(c) * m, 1e-9 * std::max(1.0, std::abs(c) * m));
  }
}

TEST(Metrics, ZeroIffExact) {
  RngStream rng(2);
  auto ps = random_set(rng, 5);
  ps.pred = ps.truth;
  EXPECT_EQ(rmse(ps), 0.0);
  ps.pred[3].y = std::nextafter(ps.pred[3].y, 1e9);
  EXPECT_GT(rmse(ps), 0.0);
}

TEST(Naive, Examples) {
  std::vector<Point> g{{0, 0}, {2, 0}, {4, 6}};
  EXPECT_EQ(naive_predictor(NaiveKind::kCenter, {}, ScreenRect{0, 0, 800, 600}), (Point{400, 300}));
  EXPECT_EQ(naive_predictor(NaiveKind::kMean, g), (Point{2, 2}));
  EXPECT_EQ(naive_predictor(NaiveKind::kMedian, g), (Point{2, 0}));
  g.push_back({10, 1});
  EXPECT_EQ(naive_predictor(NaiveKind::kMedian, g), (Point{3, 0.5}));
  EXPECT_THROW(naive_predictor(NaiveKind::kMean, {}), ShapeError);
  EXPECT_THROW(naive_predictor(NaiveKind::kMedian, {}), ShapeError);
  EXPECT_THROW(parse_naive_kind("mode"), ConfigError);
}

TEST(Naive, MeanMinimizesRmseAmongConstants) {
  RngStream rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Point> g;
    const std::size_t n = 2 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i) g.push_back({rng.uniform(0, 800), rng.uniform(0, 600)});
    const double best = rmse(constant_predictions(g, naive_predictor(NaiveKind::kMean, g)));
    for (int c = 0; c < 100; ++c) {
      const double challenger = rmse(constant_predictions(g, {rng.uniform(-100, 900), rng.uniform(-100, 700)}));
      ASSERT_LE(best, challenger * (1 + 1e-12));
    }
    const double ratio = med(constant_predictions(g, naive_predictor(NaiveKind::kMean, g))) / best;
    EXPECT_GE(ratio, 1.0 - 1e-12);
    EXPECT_LE(ratio, std::sqrt(2.0) + 1e-12);
  }
  EXPECT_GE(123.31 / 95.81, 1.0);
  EXPECT_LE(123.31 / 95.81, std::sqrt(2.0));
}

TEST(Audit, WorkedSet) {
  auto ps = worked_set();
  EXPECT_EQ(audit_metric(ps, 5.0, 0.01), AuditResult::kMed);
  EXPECT_EQ(audit_metric(ps, 3.536, 0.01), AuditResult::kRmse);
  EXPECT_EQ(audit_metric(ps, 10.0, 0.01), AuditResult::kNeither);
  PredictionSet single;
  single.truth = {{0, 0}, {1, 1}};
  single.pred = {{0, 0}, {1, 1}};
  EXPECT_EQ(audit_metric(single, 0.0, 0.01), AuditResult::kBoth);
  EXPECT_THROW(audit_metric(ps, 5.0, 0.0), ConfigError);
  EXPECT_EQ(to_string(AuditResult::kMed), "MED");
}

TEST(Aggregate, MeanAndSampleStd) {
  std::vector<MetricReport> r{{1, 4, 10, "mm", {}}, {2, 5, 10, "mm", {}}, {3, 6, 10, "mm", {}}};
  auto a = aggregate_runs(r);
  ASSERT_TRUE(a.mean_std);
  EXPECT_DOUBLE_EQ(a.mean_std->rmse_mean, 2.0);
  EXPECT_DOUBLE_EQ(a.mean_std->rmse_std, 1.0);
  EXPECT_DOUBLE_EQ(a.mean_std->med_mean, 5.0);
  EXPECT_EQ(a.mean_std->runs, 3u);
  EXPECT_EQ(a.n, 30u);
  std::vector<MetricReport> same(3, MetricReport{2, 3, 4, "native", {}});
  EXPECT_EQ(aggregate_runs(same).mean_std->rmse_std, 0.0);
  EXPECT_THROW(aggregate_runs(std::vector<MetricReport>{r[0]}), ConfigError);
  r[1].units = "native";
  EXPECT_THROW(aggregate_runs(r), ConfigError);
}

TEST(Serialization, ReportJsonRoundTrip) {
  MetricReport r{0.1 + 0.2, 1.0 / 3.0, 7, "mm", RunStats{1e-17, 2.5, 3, 4, 5}};
  EXPECT_EQ(MetricReport::from_json(r.to_json()), r);
  MetricReport plain{1, 2, 3, "native", {}};
  EXPECT_EQ(MetricReport::from_json(plain.to_json()), plain);
  EXPECT_THROW(MetricReport::from_json("{}"), FormatError);
}

TEST(Serialization, PredictionCsvRoundTrip) {
  RngStream rng(3);
  auto ps = random_set(rng, 50);
  ps.pred[0].x = 0.1 + 0.2;
  ps.truth[1].y = -1e-300;
  const auto csv = prediction_csv(ps);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "index,x_true,y_true,x_pred,y_pred");
  EXPECT_EQ(parse_prediction_csv(csv), ps);
  EXPECT_EQ(prediction_csv(ps), csv);
  EXPECT_THROW(parse_prediction_csv("a,b\n"), FormatError);
  EXPECT_THROW(parse_prediction_csv("index,x_true,y_true,x_pred,y_pred\n0,1,2,3\n"), FormatError);
}

TEST(UnitScale, HalvesMetrics) {
  auto ps = worked_set();
  auto mm = ps.to_mm(2.0);
  EXPECT_EQ(mm.units, "mm");
  EXPECT_NEAR(rmse(mm), rmse(ps) / 2, 1e-12);
  EXPECT_NEAR(med(mm), med(ps) / 2, 1e-12);
  EXPECT_THROW(ps.to_mm(0.0), ConfigError);
}

ModelConfig small_config() {
  ModelConfig c;
  c.channels = 5;
  c.timepoints = 20;
  c.padded_timepoints = 20;
  c.temporal_filters = 2;
  c.temporal_kernel = 4;
  c.temporal_stride = 4;
  c.spatial_kernel_height = 5;
  c.spatial_out = c.embed_dim = 4;
  c.vit_heads = 2;
  c.vit_mlp_dim = 8;
  c.head_hidden = {6};
  return c;
}

Dataset small_data(std::size_t n) {
  SyntheticConfig s;
  s.n_samples = n;
  s.channels = 5;
  s.timepoints = 20;
  s.signal_channels = {1, 3};
  s.seed = 4;
  return generate_synthetic(s);
}

TEST(Evaluate, BatchSizeIndependentAndScaled) {
  auto model = build_model<float>(small_config(), RngStream(2));
  model.set_training(true);
  auto ds = small_data(150);
  auto one = evaluate(model, ds, std::nullopt, 150);
  auto b64 = evaluate(model, ds, std::nullopt, 64);
  auto b7 = evaluate(model, ds, std::nullopt, 7);
  EXPECT_TRUE(model.training());
  EXPECT_NEAR(one.report.rmse, b64.report.rmse, 1e-6);
  EXPECT_NEAR(one.report.med, b7.report.med, 1e-6);
  auto mm = evaluate(model, ds, 2.0, 64);
  EXPECT_EQ(mm.report.units, "mm");
  EXPECT_NEAR(mm.report.rmse, b64.report.rmse / 2, 1e-9);
  EXPECT_NEAR(mm.report.med, b64.report.med / 2, 1e-9);
  // Cross-check the report against the definition on the returned predictions.
  EXPECT_NEAR(b64.report.rmse, oracle_rmse(b64.predictions), 1e-9);
}

TEST(Evaluate, ConstantModelReducesToNaive) {
  auto model = build_model<double>(small_config(), RngStream(2));
  auto ds = small_data(40);
  const Point mean = naive_predictor(NaiveKind::kMean, gaze_points(ds));
  auto& last = model.head(1);
  std::fill(last.weight.values_mut().begin(), last.weight.values_mut().end(), 0.0);
  last.bias.values_mut()[0] = mean.x;
  last.bias.values_mut()[1] = mean.y;
  auto ev = evaluate(model, ds);
  EXPECT_NEAR(ev.report.rmse, rmse(constant_predictions(gaze_points(ds), mean)), 1e-12);
}

TEST(Evaluate, ShapeMismatch) {
  auto model = build_model<float>(small_config(), RngStream(2));
  SyntheticConfig s;
  s.n_samples = 3;
  s.channels = 6;
  s.timepoints = 20;
  EXPECT_THROW(evaluate(model, generate_synthetic(s)), ShapeError);
}

}  // namespace
}  // namespace eeggaze
