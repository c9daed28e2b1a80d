#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace eeggaze {

/// Channel reordering: position c of the permuted recording holds original
/// channel mapping[c].
struct ChannelPermutation {
  std::vector<std::size_t> mapping;

  std::size_t size() const { return mapping.size(); }
  /// Throws ConfigError unless mapping is a bijection on [0, channels).
  void validate(std::size_t channels) const;
  ChannelPermutation inverse() const;

  static ChannelPermutation identity(std::size_t channels);
  static ChannelPermutation reverse(std::size_t channels);
  static ChannelPermutation shuffle(std::size_t channels, std::uint64_t seed);
  /// Whitespace-separated integers, one per channel (spiral, z-order and
  /// other electrode-geometry orderings are supplied this way).
  static ChannelPermutation from_file(const std::filesystem::path& path, std::size_t channels = 129);

  friend bool operator==(const ChannelPermutation&, const ChannelPermutation&) = default;
};

}  // namespace eeggaze
