#include "eeggaze/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "eeggaze/errors.hpp"
#include "eeggaze/io.hpp"
#include "json.hpp"

namespace eeggaze {

using nlohmann::json;

namespace {

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string synthetic_to_json(const SyntheticConfig& c) {
  json j = {{"n_samples", c.n_samples},
            {"n_participants", c.n_participants},
            {"channels", c.channels},
            {"timepoints", c.timepoints},
            {"sample_rate", c.sample_rate},
            {"grid_cols", c.grid_cols},
            {"grid_rows", c.grid_rows},
            {"screen", {c.screen.x_min, c.screen.y_min, c.screen.x_max, c.screen.y_max}},
            {"signal_channels", c.signal_channels},
            {"amplitude", c.amplitude},
            {"seed", c.seed}};
  // JSON has no infinity; null snr means noiseless.
  j["snr"] = std::isfinite(c.snr) ? json(c.snr) : json(nullptr);
  return j.dump();
}

SyntheticConfig synthetic_from_json(const std::string& text) {
  const json j = parse_json(text, "synthetic config");
  if (!j.is_object()) throw ConfigError("synthetic config must be a JSON object");
  SyntheticConfig c;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "n_samples") c.n_samples = v.get<std::size_t>();
      else if (k == "n_participants") c.n_participants = v.get<std::size_t>();
      else if (k == "channels") c.channels = v.get<std::size_t>();
      else if (k == "timepoints") c.timepoints = v.get<std::size_t>();
      else if (k == "sample_rate") c.sample_rate = v.get<double>();
      else if (k == "grid_cols") c.grid_cols = v.get<std::size_t>();
      else if (k == "grid_rows") c.grid_rows = v.get<std::size_t>();
      else if (k == "screen") {
        const auto s = v.get<std::vector<double>>();
        if (s.size() != 4) throw ConfigError("synthetic screen needs [x_min, y_min, x_max, y_max]");
        c.screen = {s[0], s[1], s[2], s[3]};
      } else if (k == "signal_channels") c.signal_channels = v.get<std::vector<std::size_t>>();
      else if (k == "snr") c.snr = v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
      else if (k == "amplitude") c.amplitude = v.get<double>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else throw ConfigError("unknown synthetic config key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic config field has wrong type: ") + e.what());
  }
  return c;
}

void RunSpec::validate(bool require_source) const {
  model.validate();
  train.validate();
  split.validate();
  if (seeds.empty()) throw ConfigError("run spec needs at least one seed");
  if (data.path && data.synthetic) throw ConfigError("run spec data needs exactly one of 'path' or 'synthetic'");
  if (require_source && !data.path && !data.synthetic)
    throw ConfigError("run spec data needs exactly one of 'path' or 'synthetic'");
  if (data.synthetic) {
    data.synthetic->validate();
    if (data.synthetic->channels != model.channels || data.synthetic->timepoints != model.timepoints)
      throw ConfigError("synthetic data shape differs from the model's channels/timepoints");
  }
  if (data.permutation) builtin_permutation(*data.permutation, model.channels);
  if (units_per_mm && !(*units_per_mm > 0.0)) throw ConfigError("units_per_mm must be positive");
}

std::string RunSpec::to_json() const {
  json d = json::object();
  if (data.path) d["path"] = *data.path;
  if (data.synthetic) d["synthetic"] = json::parse(synthetic_to_json(*data.synthetic));
  if (data.permutation) d["permutation"] = *data.permutation;
  json sp = {{"train", split.train}, {"val", split.val}, {"test", split.test}, {"seed", split.seed}};
  json j = {{"model", json::parse(model.to_json())},
            {"train", json::parse(train.to_json())},
            {"split", sp},
            {"data", d},
            {"seeds", seeds}};
  if (units_per_mm) j["units_per_mm"] = *units_per_mm;
  return j.dump(2);
}

RunSpec RunSpec::from_json(const std::string& text) {
  const json j = parse_json(text, "run config");
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunSpec s;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "model") s.model = ModelConfig::from_json(v.dump());
      else if (k == "train") s.train = TrainConfig::from_json(v.dump());
      else if (k == "split") {
        for (const auto& [sk, sv] : v.items()) {
          if (sk == "train") s.split.train = sv.get<double>();
          else if (sk == "val") s.split.val = sv.get<double>();
          else if (sk == "test") s.split.test = sv.get<double>();
          else if (sk == "seed") s.split.seed = sv.get<std::uint64_t>();
          else throw ConfigError("unknown split key '" + sk + "'");
        }
      } else if (k == "data") {
        for (const auto& [dk, dv] : v.items()) {
          if (dk == "path") s.data.path = dv.get<std::string>();
          else if (dk == "synthetic") s.data.synthetic = synthetic_from_json(dv.dump());
          else if (dk == "permutation") s.data.permutation = dv.get<std::string>();
          else throw ConfigError("unknown data key '" + dk + "'");
        }
      } else if (k == "seeds") s.seeds = v.get<std::vector<std::uint64_t>>();
      else if (k == "units_per_mm") s.units_per_mm = v.get<double>();
      else throw ConfigError("unknown run config section '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config field has wrong type: ") + e.what());
  }
  return s;
}

Dataset load_source(const DataSource& src) {
  Dataset ds = src.synthetic ? generate_synthetic(*src.synthetic) : load_dataset(*src.path);
  if (src.permutation) ds = apply_permutation(ds, builtin_permutation(*src.permutation, ds.channels));
  return ds;
}

double measure_runtime(const std::function<void()>& run) {
  const auto t0 = std::chrono::steady_clock::now();
  run();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::uint64_t split_digest(const SplitIndices& s) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xFF;
      h *= 1099511628211ull;
    }
  };
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    mix(part->size());
    for (auto i : *part) mix(i);
  }
  return h;
}

ExperimentResult run_experiment(const RunSpec& spec, const Dataset& data, const ProgressFn& progress) {
  spec.validate(false);
  if (data.channels != spec.model.channels || data.timepoints != spec.model.timepoints) {
    throw ShapeError("dataset samples are " + std::to_string(data.channels) + "x" +
                     std::to_string(data.timepoints) + " but the model expects " +
                     std::to_string(spec.model.channels) + "x" + std::to_string(spec.model.timepoints));
  }
  const auto split = split_by_participant(data, spec.split);
  const Dataset train_ds = data.subset(split.train);
  const Dataset val_ds = data.subset(split.val);
  const Dataset test_ds = data.subset(split.test);

  ExperimentResult out;
  RunReport& rep = out.report;
  const auto params = param_count(spec.model);
  rep.param_count = params.total;
  rep.conv_spatial_params = params.at("conv_spatial");
  rep.token_count = token_count(spec.model);
  rep.split_digest = split_digest(split);
  {
    auto ps = constant_predictions(gaze_points(test_ds),
                                   naive_predictor(NaiveKind::kMean, gaze_points(train_ds)));
    if (spec.units_per_mm) ps = ps.to_mm(*spec.units_per_mm);
    rep.naive_mean = report_of(ps);
  }

  for (std::uint64_t seed : spec.seeds) {
    auto model = build_model<float>(spec.model, RngStream(seed));
    TrainConfig tc = spec.train;
    tc.seed = seed;
    TrainResult tr;
    const double seconds = measure_runtime([&] {
      tr = train(model, train_ds, val_ds, tc, [&](const EpochRecord& e) {
        if (progress) {
          char line[160];
          std::snprintf(line, sizeof line, "seed %llu epoch %zu lr %.1e train_mse %.6g val_rmse %.6g (%.1fs)",
                        static_cast<unsigned long long>(seed), e.epoch, e.lr, e.train_mse, e.val_rmse, e.seconds);
          progress(line);
        }
      });
    });
    auto ev = evaluate(model, test_ds, spec.units_per_mm, tc.batch_size);
    SeedRun run;
    run.seed = seed;
    run.test = ev.report;
    run.seconds = seconds;
    run.epoch_seconds = 0;
    for (const auto& e : tr.history.epochs) run.epoch_seconds += e.seconds;
    run.epoch_seconds /= static_cast<double>(tr.history.epochs.size());
    run.best_epoch = tr.best.epoch;
    run.best_val_rmse = tr.best.val_rmse;
    rep.runs.push_back(run);
    out.artifacts.push_back({std::move(tr.history), std::move(ev.predictions), std::move(tr.best)});
  }

  std::vector<MetricReport> tests;
  std::vector<double> secs;
  for (const auto& r : rep.runs) {
    tests.push_back(r.test);
    secs.push_back(r.seconds);
  }
  rep.aggregate = tests.size() >= 2 ? aggregate_runs(tests) : tests.front();
  rep.seconds_mean = std::accumulate(secs.begin(), secs.end(), 0.0) / static_cast<double>(secs.size());
  if (secs.size() >= 2) {
    double ss = 0;
    for (double s : secs) ss += (s - rep.seconds_mean) * (s - rep.seconds_mean);
    rep.seconds_std = std::sqrt(ss / static_cast<double>(secs.size() - 1));
  }
  return out;
}

ExperimentResult run_experiment(const RunSpec& spec, const ProgressFn& progress) {
  spec.validate();
  return run_experiment(spec, load_source(spec.data), progress);
}

namespace {

json seed_run_json(const SeedRun& r) {
  return {{"seed", r.seed},
          {"test", json::parse(r.test.to_json())},
          {"seconds", r.seconds},
          {"epoch_seconds", r.epoch_seconds},
          {"best_epoch", r.best_epoch},
          {"best_val_rmse", r.best_val_rmse}};
}

json run_report_json(const RunReport& r) {
  json runs = json::array();
  for (const auto& s : r.runs) runs.push_back(seed_run_json(s));
  return {{"runs", runs},
          {"aggregate", json::parse(r.aggregate.to_json())},
          {"naive_mean", json::parse(r.naive_mean.to_json())},
          {"seconds_mean", r.seconds_mean},
          {"seconds_std", r.seconds_std},
          {"param_count", r.param_count},
          {"conv_spatial_params", r.conv_spatial_params},
          {"token_count", r.token_count},
          {"split_digest", r.split_digest}};
}

RunReport run_report_from(const json& j) {
  RunReport r;
  for (const auto& s : j.at("runs")) {
    SeedRun run;
    run.seed = s.at("seed").get<std::uint64_t>();
    run.test = MetricReport::from_json(s.at("test").dump());
    run.seconds = s.at("seconds").get<double>();
    run.epoch_seconds = s.at("epoch_seconds").get<double>();
    run.best_epoch = s.at("best_epoch").get<std::uint32_t>();
    run.best_val_rmse = s.at("best_val_rmse").get<double>();
    r.runs.push_back(run);
  }
  r.aggregate = MetricReport::from_json(j.at("aggregate").dump());
  r.naive_mean = MetricReport::from_json(j.at("naive_mean").dump());
  r.seconds_mean = j.at("seconds_mean").get<double>();
  r.seconds_std = j.at("seconds_std").get<double>();
  r.param_count = j.at("param_count").get<std::size_t>();
  r.conv_spatial_params = j.at("conv_spatial_params").get<std::size_t>();
  r.token_count = j.at("token_count").get<std::size_t>();
  r.split_digest = j.at("split_digest").get<std::uint64_t>();
  return r;
}

double rmse_std_of(const RunReport& r) { return r.aggregate.mean_std ? r.aggregate.mean_std->rmse_std : 0.0; }
double med_std_of(const RunReport& r) { return r.aggregate.mean_std ? r.aggregate.mean_std->med_std : 0.0; }
double epoch_seconds_of(const RunReport& r) {
  double s = 0;
  for (const auto& run : r.runs) s += run.epoch_seconds;
  return r.runs.empty() ? 0.0 : s / static_cast<double>(r.runs.size());
}

}  // namespace

std::string RunReport::to_json() const { return run_report_json(*this).dump(2); }

RunReport RunReport::from_json(const std::string& text) {
  try {
    return run_report_from(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad run report JSON: ") + e.what());
  }
}

std::vector<ModelConfig> ablation_configs(const AblationSpec& spec) {
  if (spec.temporal_kernels.empty() || spec.spatial_heights.empty())
    throw ConfigError("ablation axes must be non-empty");
  std::vector<ModelConfig> out;
  for (std::size_t k : spec.temporal_kernels)
    for (std::size_t h : spec.spatial_heights) {
      if (k == 0) throw ConfigError("ablation temporal kernel must be positive");
      ModelConfig c = spec.base.model;
      c.temporal_kernel = k;
      c.temporal_stride = k;
      c.padded_timepoints = (c.timepoints + k - 1) / k * k;
      c.spatial_kernel_height = h;
      c.spatial_stride = h == c.channels ? 1 : h;
      try {
        c.validate();
      } catch (const ConfigError& e) {
        throw ConfigError("ablation config (temporal " + std::to_string(k) + ", height " + std::to_string(h) +
                          "): " + e.what());
      }
      out.push_back(c);
    }
  return out;
}

std::size_t worker_count() {
  const char* env = std::getenv("EEGGAZE_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const unsigned long v = std::strtoul(env, &end, 10);
  if (*end != '\0' || v == 0) throw ConfigError(std::string("EEGGAZE_THREADS must be a positive integer, got '") +
                                                env + "'");
  return v;
}

AblationTable run_ablation(const AblationSpec& spec, const Dataset& data, std::size_t workers,
                           const ProgressFn& progress) {
  spec.base.validate(false);
  const auto configs = ablation_configs(spec);
  if (workers == 0) workers = worker_count();
  workers = std::min(workers, configs.size());

  AblationTable table;
  table.rows.resize(configs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  std::exception_ptr failure;
  auto work = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        RunSpec rs = spec.base;
        rs.model = configs[i];
        const std::string tag = "[k=" + std::to_string(configs[i].temporal_kernel) +
                                " h=" + std::to_string(configs[i].spatial_kernel_height) + "] ";
        auto res = run_experiment(rs, data, [&](const std::string& line) {
          if (!progress) return;
          std::lock_guard<std::mutex> lock(log_mu);
          progress(tag + line);
        });
        table.rows[i] = {configs[i].temporal_kernel, configs[i].spatial_kernel_height, std::move(res.report)};
      } catch (...) {
        std::lock_guard<std::mutex> lock(log_mu);
        if (!failure) failure = std::current_exception();
        next = configs.size();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return table;
}

std::string AblationTable::to_csv() const {
  std::vector<const AblationRow*> sorted;
  for (const auto& r : rows) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const AblationRow* a, const AblationRow* b) {
    if (a->report.aggregate.rmse != b->report.aggregate.rmse) return a->report.aggregate.rmse < b->report.aggregate.rmse;
    if (a->temporal_kernel != b->temporal_kernel) return a->temporal_kernel < b->temporal_kernel;
    return a->spatial_height < b->spatial_height;
  });
  std::string out =
      "temporal_kernel,spatial_height,token_count,param_count,rmse_mean,rmse_std,med_mean,med_std,"
      "naive_mean_rmse,seconds_mean,epoch_seconds_mean,runs,split_digest\n";
  for (const auto* r : sorted) {
    const auto& rep = r->report;
    out += std::to_string(r->temporal_kernel) + "," + std::to_string(r->spatial_height) + "," +
           std::to_string(rep.token_count) + "," + std::to_string(rep.param_count) + "," +
           fmt("%.10g", rep.aggregate.rmse) + "," + fmt("%.10g", rmse_std_of(rep)) + "," +
           fmt("%.10g", rep.aggregate.med) + "," + fmt("%.10g", med_std_of(rep)) + "," +
           fmt("%.10g", rep.naive_mean.rmse) + "," + fmt("%.6g", rep.seconds_mean) + "," +
           fmt("%.6g", epoch_seconds_of(rep)) + "," + std::to_string(rep.runs.size()) + "," +
           std::to_string(rep.split_digest) + "\n";
  }
  return out;
}

std::string AblationTable::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows)
    rows_j.push_back({{"temporal_kernel", r.temporal_kernel},
                      {"spatial_height", r.spatial_height},
                      {"report", run_report_json(r.report)}});
  return json{{"rows", rows_j}}.dump(2);
}

AblationTable AblationTable::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    AblationTable t;
    for (const auto& r : j.at("rows"))
      t.rows.push_back({r.at("temporal_kernel").get<std::size_t>(), r.at("spatial_height").get<std::size_t>(),
                        run_report_from(r.at("report"))});
    return t;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad ablation JSON: ") + e.what());
  }
}

std::string runs_csv(const RunReport& report) {
  std::string out = "seed,rmse,med,n,units,seconds,epoch_seconds,best_epoch,best_val_rmse\n";
  for (const auto& r : report.runs) {
    out += std::to_string(r.seed) + "," + fmt("%.17g", r.test.rmse) + "," + fmt("%.17g", r.test.med) + "," +
           std::to_string(r.test.n) + "," + r.test.units + "," + fmt("%.6g", r.seconds) + "," +
           fmt("%.6g", r.epoch_seconds) + "," + std::to_string(r.best_epoch) + "," +
           fmt("%.17g", r.best_val_rmse) + "\n";
  }
  return out;
}

namespace {

constexpr double kW = 640, kH = 480, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;

struct Axis {
  double lo, hi;
  static Axis of(double lo, double hi) {
    if (!(hi > lo)) {
      lo -= 1;
      hi += 1;
    }
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
  }
  double map(double v, double a, double b) const { return a + (v - lo) / (hi - lo) * (b - a); }
};

std::string svg_open(const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n";
  s += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" + title +
       "</text>\n";
  s += "<rect x=\"60\" y=\"40\" width=\"560\" height=\"390\" fill=\"none\" stroke=\"black\"/>\n";
  return s;
}

std::string axis_labels(const Axis& x, const Axis& y, const std::string& xl, const std::string& yl) {
  std::string s;
  s += "<text x=\"60\" y=\"448\" font-family=\"sans-serif\" font-size=\"11\">" + fmt("%.4g", x.lo) + "</text>\n";
  s += "<text x=\"620\" y=\"448\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
       fmt("%.4g", x.hi) + "</text>\n";
  s += "<text x=\"55\" y=\"430\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
       fmt("%.4g", y.lo) + "</text>\n";
  s += "<text x=\"55\" y=\"48\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
       fmt("%.4g", y.hi) + "</text>\n";
  s += "<text x=\"340\" y=\"470\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + xl +
       "</text>\n";
  s += "<text x=\"16\" y=\"235\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
       "transform=\"rotate(-90 16 235)\">" +
       yl + "</text>\n";
  return s;
}

std::string legend(const std::vector<std::pair<std::string, std::string>>& items) {
  std::string s;
  double y = 52;
  for (const auto& [color, label] : items) {
    s += "<rect x=\"500\" y=\"" + fmt("%.0f", y) + "\" width=\"10\" height=\"10\" fill=\"" + color + "\"/>\n";
    s += "<text x=\"516\" y=\"" + fmt("%.0f", y + 9) + "\" font-family=\"sans-serif\" font-size=\"11\">" + label +
         "</text>\n";
    y += 16;
  }
  return s;
}

}  // namespace

std::string scatter_svg(const PredictionSet& ps, const std::string& title) {
  if (ps.truth.size() != ps.pred.size()) throw ShapeError("scatter needs equal truth and prediction counts");
  double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
  bool first = true;
  for (const auto* v : {&ps.truth, &ps.pred})
    for (const auto& p : *v) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ShapeError("scatter points must be finite");
      if (first) {
        xlo = xhi = p.x;
        ylo = yhi = p.y;
        first = false;
      }
      xlo = std::min(xlo, p.x);
      xhi = std::max(xhi, p.x);
      ylo = std::min(ylo, p.y);
      yhi = std::max(yhi, p.y);
    }
  const Axis ax = Axis::of(xlo, xhi), ay = Axis::of(ylo, yhi);
  std::string s = svg_open(title);
  s += axis_labels(ax, ay, "x (" + ps.units + ")", "y (" + ps.units + ")");
  s += legend({{"red", "ground truth"}, {"blue", "prediction"}});
  auto dots = [&](const std::vector<Point>& pts, const char* color) {
    s += "<g fill=\"" + std::string(color) + "\" fill-opacity=\"0.6\">\n";
    for (const auto& p : pts) {
      // Screen y grows downward, matching gaze coordinates in pixels.
      s += "<circle cx=\"" + fmt("%.2f", ax.map(p.x, kLeft, kW - kRight)) + "\" cy=\"" +
           fmt("%.2f", ay.map(p.y, kTop, kH - kBottom)) + "\" r=\"3\"/>\n";
    }
    s += "</g>\n";
  };
  dots(ps.truth, "red");
  dots(ps.pred, "blue");
  s += "</svg>\n";
  return s;
}

std::string loss_curve_svg(const TrainHistory& history) {
  double hi = 0;
  for (const auto& e : history.epochs) hi = std::max({hi, e.train_mse, e.val_rmse});
  const Axis ax = Axis::of(0, history.epochs.empty() ? 1.0 : static_cast<double>(history.epochs.size() - 1));
  const Axis ay = Axis::of(0, hi > 0 ? hi : 1.0);
  std::string s = svg_open("MSE loss during training");
  s += axis_labels(ax, ay, "epoch", "loss");
  s += legend({{"steelblue", "train MSE"}, {"darkorange", "validation RMSE"}});
  auto line = [&](auto get, const char* color) {
    if (history.epochs.empty()) return;
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < history.epochs.size(); ++i) {
      if (i) s += " ";
      s += fmt("%.2f", ax.map(static_cast<double>(i), kLeft, kW - kRight)) + "," +
           fmt("%.2f", ay.map(get(history.epochs[i]), kH - kBottom, kTop));
    }
    s += "\"/>\n";
  };
  line([](const EpochRecord& e) { return e.train_mse; }, "steelblue");
  line([](const EpochRecord& e) { return e.val_rmse; }, "darkorange");
  s += "</svg>\n";
  return s;
}

void emit_report(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string());
  io::write_file_atomic(dir / "report.json", result.report.to_json());
  io::write_file_atomic(dir / "runs.csv", runs_csv(result.report));
  for (std::size_t i = 0; i < result.artifacts.size(); ++i) {
    const std::string tag = "seed" + std::to_string(result.report.runs[i].seed);
    const auto& a = result.artifacts[i];
    io::write_file_atomic(dir / (tag + "_history.csv"), a.history.to_csv());
    io::write_file_atomic(dir / (tag + "_predictions.csv"), prediction_csv(a.predictions));
    io::write_file_atomic(dir / (tag + "_scatter.svg"), scatter_svg(a.predictions));
    io::write_file_atomic(dir / (tag + "_loss.svg"), loss_curve_svg(a.history));
  }
}

}  // namespace eeggaze
