#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eeggaze/permutation.hpp"

namespace eeggaze {

/// EEG windows with gaze targets and participant ids.
///
/// eeg is row-major [n][channels][timepoints]; gaze is [n][2] in native
/// screen units.
struct Dataset {
  std::size_t channels = 129;
  std::size_t timepoints = 500;
  std::vector<float> eeg;
  std::vector<float> gaze;
  std::vector<std::uint32_t> participant;

  std::size_t size() const { return participant.size(); }
  std::span<const float> sample(std::size_t i) const {
    return std::span<const float>(eeg).subspan(i * channels * timepoints, channels * timepoints);
  }
  /// Throws ShapeError on inconsistent field lengths or non-finite gaze.
  void validate() const;
  Dataset subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct DatasetExpectation {
  std::size_t channels = 129;
  std::size_t timepoints = 500;
};

// File layout (little-endian): "EEGZ", u32 version = 1, u64 n, u32 channels,
// u32 timepoints, f32 eeg[n][channels][timepoints], f32 gaze[n][2],
// u32 participant[n].
inline constexpr std::uint32_t kDatasetVersion = 1;

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
/// Distinct errors: BadMagicError, VersionError, TruncatedError,
/// ShapeMismatchError (header dims differ from `expect`).
Dataset load_dataset(const std::filesystem::path& path,
                     std::optional<DatasetExpectation> expect = std::nullopt);
std::string encode_dataset(const Dataset& ds);
Dataset decode_dataset(std::string_view bytes, std::optional<DatasetExpectation> expect = std::nullopt,
                       const std::string& what = "dataset");

/// Imports a directory holding meta.json ({"n", "channels", "timepoints"})
/// plus raw little-endian arrays eeg.f32, gaze.f32 and participant.u32.
Dataset import_array_directory(const std::filesystem::path& dir);

struct SplitSpec {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Participant-disjoint split. Distinct ids are shuffled by seed and handed
/// to test until its sample share reaches the test ratio, then to val
/// likewise; the rest go to train. Each split keeps at least one participant.
SplitIndices split_by_participant(const Dataset& ds, const SplitSpec& spec);

Dataset apply_permutation(const Dataset& ds, const ChannelPermutation& perm);

/// "identity", "reverse", "shuffle:<seed>" or "file:<path>".
ChannelPermutation builtin_permutation(const std::string& kind, std::size_t channels = 129);

struct ScreenRect {
  double x_min = -1.0, y_min = -1.0, x_max = 1.0, y_max = 1.0;
  friend bool operator==(const ScreenRect&, const ScreenRect&) = default;
};

struct SyntheticConfig {
  std::size_t n_samples = 1000;
  std::size_t n_participants = 20;
  std::size_t channels = 129;
  std::size_t timepoints = 500;
  double sample_rate = 500.0;
  std::size_t grid_cols = 5;
  std::size_t grid_rows = 5;
  ScreenRect screen;
  /// Empty selects 16 evenly spaced channels.
  std::vector<std::size_t> signal_channels;
  /// Planted amplitude over noise standard deviation; infinity means noiseless.
  double snr = 5.0;
  double amplitude = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<std::size_t> resolved_signal_channels() const;
  /// Grid target positions, row-major from (x_min, y_min).
  std::vector<std::pair<double, double>> grid() const;

  friend bool operator==(const SyntheticConfig&, const SyntheticConfig&) = default;
};

/// Planted-signal EEG. Signal channel k carries
///   amplitude * (cos(t_k) x' + sin(t_k) y') * (1 + 0.5 sin(2 pi f_k t / fs + phi_k))
/// where (x', y') is the gaze target rescaled to [-1, 1]^2; every channel adds
/// N(0, (amplitude / snr)^2) noise. Sample i draws from RngStream(seed).fork(i).
Dataset generate_synthetic(const SyntheticConfig& cfg);

}  // namespace eeggaze
