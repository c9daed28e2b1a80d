#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "eeggaze/bench.hpp"
#include "eeggaze/io.hpp"

namespace eeggaze {
namespace {

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

RunSpec tiny_spec() {
  RunSpec s;
  auto& c = s.model;
  c.channels = 8;
  c.timepoints = 30;
  c.padded_timepoints = 32;
  c.temporal_filters = 4;
  c.temporal_kernel = 4;
  c.temporal_stride = 4;
  c.spatial_kernel_height = 8;
  c.spatial_out = c.embed_dim = 8;
  c.vit_depth = 1;
  c.vit_heads = 2;
  c.vit_mlp_dim = 16;
  c.head_hidden = {8, 12};
  s.train.epochs = 2;
  s.train.batch_size = 16;
  s.train.lr0 = 3e-3;
  s.split.seed = 2;
  SyntheticConfig syn;
  syn.n_samples = 160;
  syn.n_participants = 8;
  syn.channels = 8;
  syn.timepoints = 30;
  syn.seed = 11;
  s.data.synthetic = syn;
  s.seeds = {1, 2};
  return s;
}

// Zero the wall-clock fields, which are the only ones allowed to differ.
RunReport without_timing(RunReport r) {
  r.seconds_mean = r.seconds_std = 0;
  for (auto& run : r.runs) run.seconds = run.epoch_seconds = 0;
  return r;
}

TEST(RunSpec, JsonRoundTrip) {
  auto s = tiny_spec();
  s.units_per_mm = 2.5;
  s.data.permutation = "shuffle:3";
  s.data.synthetic->snr = std::numeric_limits<double>::infinity();
  const auto back = RunSpec::from_json(s.to_json());
  EXPECT_EQ(back.to_json(), s.to_json());
  EXPECT_EQ(back.data, s.data);
  EXPECT_EQ(back.seeds, s.seeds);
  EXPECT_EQ(back.model, s.model);
  EXPECT_TRUE(std::isinf(back.data.synthetic->snr));
}

TEST(RunSpec, Validation) {
  auto s = tiny_spec();
  s.seeds.clear();
  EXPECT_THROW(s.validate(), ConfigError);
  s = tiny_spec();
  s.data.path = "x.eegz";
  EXPECT_THROW(s.validate(), ConfigError);
  s = tiny_spec();
  s.data.synthetic.reset();
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_NO_THROW(s.validate(false));
  EXPECT_THROW(RunSpec::from_json(R"({"modle": {}})"), ConfigError);
  EXPECT_THROW(RunSpec::from_json(R"({"seeds": "one"})"), ConfigError);
}

TEST(MeasureRuntime, NoOpIsFast) {
  const double t = measure_runtime([] {});
  EXPECT_GE(t, 0.0);
  EXPECT_LT(t, 0.01);
}

TEST(RunExperiment, RepeatedSeedGivesIdenticalRuns) {
  auto s = tiny_spec();
  s.seeds = {1, 1};
  const auto res = run_experiment(s);
  ASSERT_EQ(res.report.runs.size(), 2u);
  const auto r = without_timing(res.report);
  EXPECT_EQ(r.runs[0], r.runs[1]);
  ASSERT_TRUE(res.report.aggregate.mean_std);
  EXPECT_EQ(res.report.aggregate.mean_std->rmse_std, 0.0);
  EXPECT_EQ(res.report.aggregate.mean_std->med_std, 0.0);
  for (const auto& run : res.report.runs) {
    EXPECT_GT(run.seconds, 0.0);
    EXPECT_GT(run.epoch_seconds, 0.0);
  }
}

TEST(RunExperiment, DeterministicModuloTiming) {
  auto s = tiny_spec();
  const auto a = run_experiment(s), b = run_experiment(s);
  EXPECT_EQ(without_timing(a.report), without_timing(b.report));
  EXPECT_EQ(a.artifacts[1].predictions, b.artifacts[1].predictions);
  EXPECT_EQ(a.artifacts[1].checkpoint, b.artifacts[1].checkpoint);
}

TEST(RunExperiment, FiveSeedProtocol) {
  auto s = tiny_spec();
  s.train.epochs = 1;
  s.seeds = {1, 2, 3, 4, 5};
  const auto res = run_experiment(s);
  ASSERT_EQ(res.report.runs.size(), 5u);
  ASSERT_TRUE(res.report.aggregate.mean_std);
  const auto& ms = *res.report.aggregate.mean_std;
  EXPECT_EQ(ms.runs, 5u);
  EXPECT_TRUE(std::isfinite(ms.rmse_std));
  double mean = 0;
  for (const auto& r : res.report.runs) mean += r.test.rmse / 5;
  EXPECT_NEAR(res.report.aggregate.rmse, mean, 1e-12);
  EXPECT_EQ(res.report.param_count, param_count(s.model).total);
  EXPECT_EQ(res.report.token_count, token_count(s.model));
  EXPECT_GT(res.report.seconds_mean, 0.0);
}

TEST(RunExperiment, ShapeMismatch) {
  auto s = tiny_spec();
  auto data = load_source(s.data);
  s.model.channels = 9;
  s.model.spatial_kernel_height = 9;
  s.data.synthetic.reset();
  EXPECT_THROW(run_experiment(s, data), ShapeError);
}

TEST(RunReport, DefaultConfigCountsAndJson) {
  RunReport r;
  r.param_count = param_count(ModelConfig{}).total;
  r.conv_spatial_params = param_count(ModelConfig{}).at("conv_spatial");
  r.token_count = token_count(ModelConfig{});
  EXPECT_EQ(r.conv_spatial_params, 99840u);
  EXPECT_EQ(r.token_count, 32u);
  auto s = tiny_spec();
  s.train.epochs = 1;
  const auto res = run_experiment(s);
  EXPECT_EQ(RunReport::from_json(res.report.to_json()), res.report);
  EXPECT_EQ(RunReport::from_json(res.report.to_json()).to_json(), res.report.to_json());
}

TEST(Ablation, DefaultGrid) {
  AblationSpec a;
  const auto cfgs = ablation_configs(a);
  ASSERT_EQ(cfgs.size(), 6u);
  for (const auto& c : cfgs) {
    if (c.spatial_kernel_height != 129) continue;
    if (c.temporal_kernel == 16) EXPECT_EQ(token_count(c), 32u);
    if (c.temporal_kernel == 36) {
      EXPECT_EQ(c.padded_timepoints, 504u);
      EXPECT_EQ(token_count(c), 14u);
    }
    if (c.temporal_kernel == 64) EXPECT_EQ(token_count(c), 8u);
  }
  // Partial-height kernels tile the channel axis, so they always produce more tokens.
  for (std::size_t i = 0; i < cfgs.size(); i += 2) {
    EXPECT_EQ(cfgs[i].spatial_kernel_height, 8u);
    EXPECT_GT(token_count(cfgs[i]), token_count(cfgs[i + 1]));
  }
}

TEST(Ablation, InvalidConfigAbortsBeforeTraining) {
  AblationSpec a;
  a.base = tiny_spec();
  a.temporal_kernels = {4};
  a.spatial_heights = {8, 9};
  std::size_t calls = 0;
  EXPECT_THROW(run_ablation(a, load_source(a.base.data), 1, [&](const std::string&) { ++calls; }), ConfigError);
  EXPECT_EQ(calls, 0u);
  a.spatial_heights = {};
  EXPECT_THROW(ablation_configs(a), ConfigError);
}

TEST(Ablation, PairedAndIndependentOfWorkers) {
  AblationSpec a;
  a.base = tiny_spec();
  a.base.seeds = {3};
  a.base.train.epochs = 1;
  a.temporal_kernels = {4, 8};
  a.spatial_heights = {4, 8};
  const auto data = load_source(a.base.data);
  const auto t1 = run_ablation(a, data, 1), t2 = run_ablation(a, data, 3);
  ASSERT_EQ(t1.rows.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(t1.rows[i].report.split_digest, t1.rows[0].report.split_digest);
    EXPECT_EQ(without_timing(t1.rows[i].report), without_timing(t2.rows[i].report));
    EXPECT_EQ(t1.rows[i].temporal_kernel, t2.rows[i].temporal_kernel);
  }
  EXPECT_EQ(AblationTable::from_json(t1.to_json()), t1);
  EXPECT_EQ(t1.to_csv(), AblationTable::from_json(t1.to_json()).to_csv());

  const auto csv = t1.to_csv();
  EXPECT_EQ(count(csv, "\n"), 5u);
  // Sorted by mean test RMSE.
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  double prev = -1;
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
    const double r = std::stod(cols[4]);
    EXPECT_GE(r, prev);
    prev = r;
  }
}

TEST(Report, ScatterCountsPoints) {
  PredictionSet ps;
  RngStream rng(5);
  for (int i = 0; i < 100; ++i) {
    ps.truth.push_back({rng.normal(), rng.normal()});
    ps.pred.push_back({rng.normal(), rng.normal()});
  }
  const auto svg = scatter_svg(ps);
  EXPECT_EQ(count(svg, "<circle"), 200u);
  const auto red = svg.find("<g fill=\"red\""), blue = svg.find("<g fill=\"blue\"");
  ASSERT_NE(red, std::string::npos);
  ASSERT_NE(blue, std::string::npos);
  EXPECT_EQ(count(svg.substr(red, blue - red), "<circle"), 100u);
  EXPECT_EQ(count(svg.substr(blue), "<circle"), 100u);
  EXPECT_EQ(svg, scatter_svg(ps));
  EXPECT_EQ(svg.substr(0, 4), "<svg");
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Report, EmptyInputsGiveValidSvg) {
  const auto svg = scatter_svg(PredictionSet{});
  EXPECT_EQ(count(svg, "<circle"), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  const auto loss = loss_curve_svg(TrainHistory{});
  EXPECT_NE(loss.find("</svg>"), std::string::npos);
}

TEST(Report, EmitWritesEveryArtifactDeterministically) {
  auto s = tiny_spec();
  s.train.epochs = 1;
  const auto res = run_experiment(s);
  const auto dir = std::filesystem::temp_directory_path() / "eeggaze_bench_test";
  std::filesystem::remove_all(dir);
  emit_report(res, dir);
  emit_report(res, dir / "again");
  for (const char* f : {"report.json", "runs.csv", "seed1_history.csv", "seed1_predictions.csv", "seed1_scatter.svg",
                        "seed2_loss.svg"}) {
    ASSERT_TRUE(std::filesystem::exists(dir / f)) << f;
    EXPECT_EQ(io::read_file(dir / f), io::read_file(dir / "again" / f)) << f;
  }
  EXPECT_EQ(RunReport::from_json(io::read_file(dir / "report.json")), res.report);
  EXPECT_EQ(parse_prediction_csv(io::read_file(dir / "seed2_predictions.csv")), res.artifacts[1].predictions);
  EXPECT_EQ(count(runs_csv(res.report), "\n"), 3u);
}

}  // namespace
}  // namespace eeggaze
