#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eeggaze/data.hpp"
#include "eeggaze/model.hpp"
#include "eeggaze/rng.hpp"

namespace eeggaze {

struct TrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 64;
  double lr0 = 1e-4;
  double decay_factor = 0.1;
  std::size_t decay_every = 6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// lr0 * decay_factor^floor(epoch / decay_every), 0-based epochs.
double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

/// Mean over every coordinate of the squared error.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

/// One bias-corrected Adam update of `param` in place. `step` is the 1-based
/// step count after incrementing. Moments are kept in double.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<double> m, std::span<double> v,
                 std::uint64_t step, double lr, double beta1, double beta2, double eps);

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t t = 0;
};

template <typename T>
class Adam {
 public:
  Adam(nn::ParamList<T> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// Applies one update from the accumulated gradients. Parameters that never
  /// received a gradient count as zero-gradient. Returns the number of scalars
  /// visited. In checked mode a non-finite gradient raises NumericError before
  /// anything is modified.
  std::size_t step(double lr);
  void zero_grad();

  const AdamState& state() const { return state_; }
  const nn::ParamList<T>& params() const { return params_; }

 private:
  nn::ParamList<T> params_;
  AdamState state_;
  double beta1_, beta2_, eps_;
};

/// Model snapshot. Parameters and buffers are stored as float32 in registry order.
struct Checkpoint {
  ModelConfig config;
  std::vector<float> params;
  std::vector<float> buffers;
  std::uint32_t epoch = 0;
  double val_rmse = 0.0;
  RngStream rng;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
Checkpoint make_checkpoint(const GazeModel<T>& model, std::uint32_t epoch, double val_rmse);
/// Loads weights, buffers and RNG state; the configs must match.
template <typename T>
void restore_checkpoint(GazeModel<T>& model, const Checkpoint& ck);
template <typename T>
GazeModel<T> model_from_checkpoint(const Checkpoint& ck);

// Layout (little-endian): "EGCK", u32 version, u64 config length, config JSON,
// u64 parameter count, f32 parameters, u64 buffer count, f32 buffers,
// u32 epoch, f64 val_rmse, u64 rng seed, u64 rng counter.
std::string encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& what = "checkpoint");
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_mse = 0.0;
  double val_rmse = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// epoch,lr,train_mse,val_rmse,seconds
  std::string to_csv() const;
  static TrainHistory from_csv(const std::string& text);
};

struct TrainResult {
  Checkpoint best;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on MSE with per-epoch reshuffling. After every epoch the
/// validation RMSE is computed in eval mode; the lowest (earliest on ties)
/// becomes the returned checkpoint, and the model ends holding those weights.
template <typename T>
TrainResult train(GazeModel<T>& model, const Dataset& train_ds, const Dataset& val_ds, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace eeggaze
