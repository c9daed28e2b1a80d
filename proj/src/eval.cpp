#include "eeggaze/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "eeggaze/errors.hpp"
#include "json.hpp"

namespace eeggaze {

using nlohmann::json;

void PredictionSet::validate() const {
  if (truth.size() != pred.size()) {
    throw ShapeError("prediction set has " + std::to_string(truth.size()) + " truths but " +
                     std::to_string(pred.size()) + " predictions");
  }
  if (truth.empty()) throw ShapeError("prediction set is empty");
  auto finite = [](const Point& p) { return std::isfinite(p.x) && std::isfinite(p.y); };
  if (!std::all_of(truth.begin(), truth.end(), finite) || !std::all_of(pred.begin(), pred.end(), finite))
    throw ShapeError("prediction set contains non-finite coordinates");
}

PredictionSet PredictionSet::to_mm(double units_per_mm) const {
  if (!(units_per_mm > 0.0) || !std::isfinite(units_per_mm)) throw ConfigError("units_per_mm must be positive");
  PredictionSet out = *this;
  for (auto* v : {&out.truth, &out.pred})
    for (auto& p : *v) p = {p.x / units_per_mm, p.y / units_per_mm};
  out.units = "mm";
  return out;
}

double rmse(const PredictionSet& ps) {
  ps.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const double dx = ps.pred[i].x - ps.truth[i].x, dy = ps.pred[i].y - ps.truth[i].y;
    s += dx * dx + dy * dy;
  }
  return std::sqrt(s / (2.0 * static_cast<double>(ps.size())));
}

double med(const PredictionSet& ps) {
  ps.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i)
    s += std::hypot(ps.pred[i].x - ps.truth[i].x, ps.pred[i].y - ps.truth[i].y);
  return s / static_cast<double>(ps.size());
}

NaiveKind parse_naive_kind(const std::string& s) {
  if (s == "center") return NaiveKind::kCenter;
  if (s == "mean") return NaiveKind::kMean;
  if (s == "median") return NaiveKind::kMedian;
  throw ConfigError("unknown naive predictor '" + s + "' (center, mean, median)");
}

std::string to_string(NaiveKind k) {
  switch (k) {
    case NaiveKind::kCenter: return "center";
    case NaiveKind::kMean: return "mean";
    case NaiveKind::kMedian: return "median";
  }
  return "?";
}

namespace {
double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace

Point naive_predictor(NaiveKind kind, std::span<const Point> train_gaze, const ScreenRect& screen) {
  if (kind == NaiveKind::kCenter) {
    if (!(screen.x_max > screen.x_min && screen.y_max > screen.y_min))
      throw ConfigError("naive center needs a non-empty screen rectangle");
    return {0.5 * (screen.x_min + screen.x_max), 0.5 * (screen.y_min + screen.y_max)};
  }
  if (train_gaze.empty()) throw ShapeError("naive " + to_string(kind) + " predictor needs training gaze");
  std::vector<double> xs, ys;
  for (const auto& p : train_gaze) {
    xs.push_back(p.x);
    ys.push_back(p.y);
  }
  if (kind == NaiveKind::kMean) {
    const double n = static_cast<double>(xs.size());
    return {std::accumulate(xs.begin(), xs.end(), 0.0) / n, std::accumulate(ys.begin(), ys.end(), 0.0) / n};
  }
  return {median_of(std::move(xs)), median_of(std::move(ys))};
}

std::vector<Point> gaze_points(const Dataset& ds) {
  std::vector<Point> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out[i] = {ds.gaze[2 * i], ds.gaze[2 * i + 1]};
  return out;
}

PredictionSet constant_predictions(std::span<const Point> truth, Point guess) {
  PredictionSet ps;
  ps.truth.assign(truth.begin(), truth.end());
  ps.pred.assign(truth.size(), guess);
  return ps;
}

namespace {
json stats_json(const RunStats& s) {
  return {{"rmse_mean", s.rmse_mean}, {"rmse_std", s.rmse_std}, {"med_mean", s.med_mean},
          {"med_std", s.med_std},     {"runs", s.runs}};
}
}  // namespace

std::string MetricReport::to_json() const {
  json j = {{"rmse", rmse}, {"med", med}, {"n", n}, {"units", units}};
  if (mean_std) j["mean_std"] = stats_json(*mean_std);
  return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    MetricReport r;
    r.rmse = j.at("rmse").get<double>();
    r.med = j.at("med").get<double>();
    r.n = j.at("n").get<std::size_t>();
    r.units = j.at("units").get<std::string>();
    if (j.contains("mean_std")) {
      const auto& s = j.at("mean_std");
      r.mean_std = RunStats{s.at("rmse_mean").get<double>(), s.at("rmse_std").get<double>(),
                            s.at("med_mean").get<double>(), s.at("med_std").get<double>(),
                            s.at("runs").get<std::size_t>()};
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad metric report JSON: ") + e.what());
  }
}

MetricReport report_of(const PredictionSet& ps) { return {rmse(ps), med(ps), ps.size(), ps.units, std::nullopt}; }

MetricReport aggregate_runs(std::span<const MetricReport> reports) {
  if (reports.size() < 2) throw ConfigError("aggregate_runs needs at least 2 reports");
  MetricReport out;
  out.units = reports[0].units;
  std::vector<double> r, m;
  for (const auto& rep : reports) {
    if (rep.units != out.units)
      throw ConfigError("cannot aggregate reports in mixed units (" + out.units + ", " + rep.units + ")");
    r.push_back(rep.rmse);
    m.push_back(rep.med);
    out.n += rep.n;
  }
  auto mean_std = [](const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::pair{mean, std::sqrt(ss / (n - 1.0))};
  };
  const auto [rm, rs] = mean_std(r);
  const auto [mm, ms] = mean_std(m);
  out.rmse = rm;
  out.med = mm;
  out.mean_std = RunStats{rm, rs, mm, ms, reports.size()};
  return out;
}

std::string to_string(AuditResult r) {
  switch (r) {
    case AuditResult::kRmse: return "RMSE";
    case AuditResult::kMed: return "MED";
    case AuditResult::kBoth: return "BOTH";
    case AuditResult::kNeither: return "NEITHER";
  }
  return "?";
}

AuditResult audit_metric(const PredictionSet& ps, double reported_value, double rel_tol) {
  if (!(rel_tol > 0.0)) throw ConfigError("audit rel_tol must be positive");
  auto close = [&](double metric) {
    return std::abs(reported_value - metric) <= rel_tol * std::max(std::abs(metric), 1e-300);
  };
  const bool r = close(rmse(ps)), m = close(med(ps));
  if (r && m) return AuditResult::kBoth;
  if (r) return AuditResult::kRmse;
  if (m) return AuditResult::kMed;
  return AuditResult::kNeither;
}

template <typename T>
Tensor<T> make_batch(const Dataset& ds, std::span<const std::size_t> indices) {
  const std::size_t stride = ds.channels * ds.timepoints;
  std::vector<T> buf(indices.size() * stride);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    if (indices[b] >= ds.size()) throw ShapeError("batch index out of range");
    auto s = ds.sample(indices[b]);
    std::copy(s.begin(), s.end(), buf.begin() + static_cast<std::ptrdiff_t>(b * stride));
  }
  return Tensor<T>(Shape{indices.size(), 1, ds.channels, ds.timepoints}, std::move(buf));
}

template <typename T>
std::vector<double> predict(GazeModel<T>& model, const Dataset& ds, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  const auto& c = model.config();
  if (ds.channels != c.channels || ds.timepoints != c.timepoints) {
    throw ShapeError("dataset samples are " + std::to_string(ds.channels) + "x" + std::to_string(ds.timepoints) +
                     " but the model expects " + std::to_string(c.channels) + "x" + std::to_string(c.timepoints));
  }
  const bool was_training = model.training();
  model.set_training(false);
  NoGradGuard no_grad;
  std::vector<double> out;
  out.reserve(2 * ds.size());
  std::vector<std::size_t> idx;
  try {
    for (std::size_t start = 0; start < ds.size(); start += batch_size) {
      idx.resize(std::min(batch_size, ds.size() - start));
      std::iota(idx.begin(), idx.end(), start);
      auto y = model.forward(make_batch<T>(ds, idx));
      for (T v : y.values()) out.push_back(static_cast<double>(v));
    }
  } catch (...) {
    model.set_training(was_training);
    throw;
  }
  model.set_training(was_training);
  return out;
}

template <typename T>
Evaluation evaluate(GazeModel<T>& model, const Dataset& ds, std::optional<double> units_per_mm,
                    std::size_t batch_size) {
  if (ds.size() == 0) throw ShapeError("cannot evaluate on an empty dataset");
  if (model.config().output_dim != 2) throw ConfigError("evaluation needs a 2-output model");
  const auto y = predict(model, ds, batch_size);
  PredictionSet ps;
  ps.truth = gaze_points(ds);
  ps.pred.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) ps.pred[i] = {y[2 * i], y[2 * i + 1]};
  if (units_per_mm) ps = ps.to_mm(*units_per_mm);
  return {report_of(ps), std::move(ps)};
}

std::string prediction_csv(const PredictionSet& ps) {
  ps.validate();
  std::string out = "index,x_true,y_true,x_pred,y_pred\n";
  char line[160];
  for (std::size_t i = 0; i < ps.size(); ++i) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g\n", i, ps.truth[i].x, ps.truth[i].y,
                  ps.pred[i].x, ps.pred[i].y);
    out += line;
  }
  return out;
}

PredictionSet parse_prediction_csv(const std::string& text, const std::string& units) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "index,x_true,y_true,x_pred,y_pred")
    throw FormatError("prediction CSV must start with header index,x_true,y_true,x_pred,y_pred");
  PredictionSet ps;
  ps.units = units;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(fields, cell, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::logic_error&) {
        throw FormatError("prediction CSV row " + std::to_string(row + 1) + ": bad number '" + cell + "'");
      }
    }
    if (v.size() != 5) throw FormatError("prediction CSV row " + std::to_string(row + 1) + " needs 5 fields");
    if (v[0] != static_cast<double>(row)) throw FormatError("prediction CSV rows must be indexed 0..n-1 in order");
    ps.truth.push_back({v[1], v[2]});
    ps.pred.push_back({v[3], v[4]});
    ++row;
  }
  ps.validate();
  return ps;
}

#define EEGGAZE_INSTANTIATE(T)                                                                    \
  template Tensor<T> make_batch<T>(const Dataset&, std::span<const std::size_t>);                 \
  template std::vector<double> predict<T>(GazeModel<T>&, const Dataset&, std::size_t);            \
  template Evaluation evaluate<T>(GazeModel<T>&, const Dataset&, std::optional<double>, std::size_t);
EEGGAZE_INSTANTIATE(float)
EEGGAZE_INSTANTIATE(double)
#undef EEGGAZE_INSTANTIATE

}  // namespace eeggaze
