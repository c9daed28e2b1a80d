#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "eeggaze/data.hpp"
#include "eeggaze/eval.hpp"
#include "eeggaze/model.hpp"
#include "eeggaze/train.hpp"

namespace eeggaze {

/// Where samples come from: a dataset file or the synthetic generator, with an
/// optional channel permutation ("reverse", "shuffle:<seed>", "file:<path>").
struct DataSource {
  std::optional<std::string> path;
  std::optional<SyntheticConfig> synthetic;
  std::optional<std::string> permutation;

  friend bool operator==(const DataSource&, const DataSource&) = default;
};

struct RunSpec {
  ModelConfig model;
  TrainConfig train;
  SplitSpec split;
  DataSource data;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::optional<double> units_per_mm;

  /// Config-level checks; file existence is checked when data is loaded.
  /// require_source=false accepts a spec whose data is supplied in memory.
  void validate(bool require_source = true) const;
  std::string to_json() const;
  /// JSON with sections {model, train, split, data, seeds, units_per_mm?}.
  static RunSpec from_json(const std::string& text);
};

std::string synthetic_to_json(const SyntheticConfig& cfg);
SyntheticConfig synthetic_from_json(const std::string& text);

/// Loads or generates the dataset and applies the permutation.
Dataset load_source(const DataSource& src);

/// Wall time of one call on the monotonic clock.
double measure_runtime(const std::function<void()>& run);

struct SeedRun {
  std::uint64_t seed = 0;
  MetricReport test;
  /// Training plus per-epoch validation, excluding data preparation and testing.
  double seconds = 0;
  double epoch_seconds = 0;
  std::uint32_t best_epoch = 0;
  double best_val_rmse = 0;

  friend bool operator==(const SeedRun&, const SeedRun&) = default;
};

struct RunReport {
  std::vector<SeedRun> runs;
  /// aggregate_runs over the seeds (plain copy of the single run otherwise).
  MetricReport aggregate;
  MetricReport naive_mean;
  double seconds_mean = 0, seconds_std = 0;
  std::size_t param_count = 0;
  std::size_t conv_spatial_params = 0;
  std::size_t token_count = 0;
  std::uint64_t split_digest = 0;

  std::string to_json() const;
  static RunReport from_json(const std::string& text);
  friend bool operator==(const RunReport&, const RunReport&) = default;
};

/// Per-seed artifacts kept in memory for report emission.
struct SeedArtifacts {
  TrainHistory history;
  PredictionSet predictions;
  Checkpoint checkpoint;
};

struct ExperimentResult {
  RunReport report;
  std::vector<SeedArtifacts> artifacts;
};

/// FNV-1a over the three index lists; equal digests mean equal splits.
std::uint64_t split_digest(const SplitIndices& s);

using ProgressFn = std::function<void(const std::string&)>;

/// For every seed: split (by spec.split, shared across seeds), build the model
/// from the seed, train with train.seed = seed, then evaluate the selected
/// checkpoint on the test split.
ExperimentResult run_experiment(const RunSpec& spec, const Dataset& data, const ProgressFn& progress = {});
ExperimentResult run_experiment(const RunSpec& spec, const ProgressFn& progress = {});

struct AblationSpec {
  RunSpec base;
  std::vector<std::size_t> temporal_kernels{16, 36, 64};
  std::vector<std::size_t> spatial_heights{8, 129};
};

/// One config per (temporal kernel, spatial height). Temporal stride equals
/// the kernel and the input is padded to the next multiple of it; partial
/// heights tile the channels with stride equal to the height.
std::vector<ModelConfig> ablation_configs(const AblationSpec& spec);

struct AblationRow {
  std::size_t temporal_kernel = 0;
  std::size_t spatial_height = 0;
  RunReport report;

  friend bool operator==(const AblationRow&, const AblationRow&) = default;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  /// Sorted by mean test RMSE, ties broken by (temporal kernel, height).
  std::string to_csv() const;
  std::string to_json() const;
  static AblationTable from_json(const std::string& text);
  friend bool operator==(const AblationTable&, const AblationTable&) = default;
};

/// Worker count from EEGGAZE_THREADS (default 1).
std::size_t worker_count();

/// Validates every generated config before any training, then runs them on
/// `workers` threads (0 means worker_count()). Row order follows the config
/// grid, independent of scheduling.
AblationTable run_ablation(const AblationSpec& spec, const Dataset& data, std::size_t workers = 0,
                           const ProgressFn& progress = {});

/// Per-seed CSV: seed,rmse,med,n,units,seconds,epoch_seconds,best_epoch,best_val_rmse
std::string runs_csv(const RunReport& report);

/// Truth in red, predictions in blue: exactly one circle per point.
std::string scatter_svg(const PredictionSet& ps, const std::string& title = "Gaze predictions");
/// Training MSE and validation RMSE per epoch.
std::string loss_curve_svg(const TrainHistory& history);

/// Writes report.json, runs.csv and, per seed, history, prediction CSV and
/// both figures into dir. Every file is written atomically.
void emit_report(const ExperimentResult& result, const std::filesystem::path& dir);

}  // namespace eeggaze
