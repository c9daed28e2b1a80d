#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eeggaze/data.hpp"
#include "eeggaze/model.hpp"

namespace eeggaze {

struct Point {
  double x = 0.0, y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Paired ground-truth and predicted gaze positions. units is "native" or "mm".
struct PredictionSet {
  std::vector<Point> truth;
  std::vector<Point> pred;
  std::string units = "native";

  std::size_t size() const { return truth.size(); }
  /// Throws ShapeError for unequal lengths, an empty set or non-finite values.
  void validate() const;
  /// Divides every coordinate by units_per_mm (must be > 0) and relabels as mm.
  PredictionSet to_mm(double units_per_mm) const;

  friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

/// sqrt(sum(dx^2 + dy^2) / (2n)).
double rmse(const PredictionSet& ps);
/// Mean Euclidean distance.
double med(const PredictionSet& ps);

enum class NaiveKind { kCenter, kMean, kMedian };
NaiveKind parse_naive_kind(const std::string& s);
std::string to_string(NaiveKind k);

/// Constant gaze guess. center uses the screen rectangle's midpoint; mean and
/// median are coordinate-wise over train_gaze (median of an even count is the
/// midpoint of the two central values).
Point naive_predictor(NaiveKind kind, std::span<const Point> train_gaze, const ScreenRect& screen = {});

/// Dataset gaze as points.
std::vector<Point> gaze_points(const Dataset& ds);
PredictionSet constant_predictions(std::span<const Point> truth, Point guess);

struct RunStats {
  double rmse_mean = 0, rmse_std = 0, med_mean = 0, med_std = 0;
  std::size_t runs = 0;
  friend bool operator==(const RunStats&, const RunStats&) = default;
};

struct MetricReport {
  double rmse = 0;
  double med = 0;
  std::size_t n = 0;
  std::string units = "native";
  std::optional<RunStats> mean_std;

  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

MetricReport report_of(const PredictionSet& ps);

/// Mean and sample (n-1) standard deviation over runs. rmse/med of the result
/// hold the means and n sums the runs' sample counts. Needs at least two
/// reports that share units.
MetricReport aggregate_runs(std::span<const MetricReport> reports);

enum class AuditResult { kRmse, kMed, kBoth, kNeither };
std::string to_string(AuditResult r);
/// Which metric a published number matches within rel_tol (relative to the
/// computed metric).
AuditResult audit_metric(const PredictionSet& ps, double reported_value, double rel_tol);

/// Forward pass over ds in batches, in eval mode without recording a graph.
/// Returns [n][2] row-major predictions. The model's mode is restored.
template <typename T>
std::vector<double> predict(GazeModel<T>& model, const Dataset& ds, std::size_t batch_size = 64);

/// Copies samples `indices` of ds into a [B,1,C,T] tensor.
template <typename T>
Tensor<T> make_batch(const Dataset& ds, std::span<const std::size_t> indices);

struct Evaluation {
  MetricReport report;
  PredictionSet predictions;
};

template <typename T>
Evaluation evaluate(GazeModel<T>& model, const Dataset& ds, std::optional<double> units_per_mm = std::nullopt,
                    std::size_t batch_size = 64);

/// CSV with header index,x_true,y_true,x_pred,y_pred; values round-trip exactly.
std::string prediction_csv(const PredictionSet& ps);
PredictionSet parse_prediction_csv(const std::string& text, const std::string& units = "native");

}  // namespace eeggaze
