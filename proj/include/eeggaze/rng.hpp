#pragma once

#include <cstdint>

namespace eeggaze {

/// Counter-based random stream.
///
/// Draw k of a stream with seed s is SplitMix64's output function applied to
/// s + (k + 1) * 0x9E3779B97F4A7C15, so any draw can be computed directly from
/// (seed, counter) without replaying earlier ones. Streams for independent
/// work items are derived with fork(key), which keeps parallel generation
/// independent of scheduling order.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  static std::uint64_t at(std::uint64_t seed, std::uint64_t counter);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (consumes two draws).
  double normal();
  /// Normal(0, std) resampled until it lies within two standard deviations.
  double truncated_normal(double std);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  RngStream fork(std::uint64_t key) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace eeggaze
