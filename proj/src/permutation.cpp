#include "eeggaze/permutation.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "eeggaze/errors.hpp"
#include "eeggaze/rng.hpp"

namespace eeggaze {

void ChannelPermutation::validate(std::size_t channels) const {
  if (mapping.size() != channels) {
    throw ConfigError("permutation has " + std::to_string(mapping.size()) + " entries, expected " +
                      std::to_string(channels));
  }
  std::vector<bool> seen(channels, false);
  for (std::size_t m : mapping) {
    if (m >= channels) throw ConfigError("permutation index " + std::to_string(m) + " out of range");
    if (seen[m]) throw ConfigError("permutation repeats index " + std::to_string(m));
    seen[m] = true;
  }
}

ChannelPermutation ChannelPermutation::inverse() const {
  ChannelPermutation inv;
  inv.mapping.resize(mapping.size());
  for (std::size_t i = 0; i < mapping.size(); ++i) inv.mapping[mapping[i]] = i;
  return inv;
}

ChannelPermutation ChannelPermutation::identity(std::size_t channels) {
  ChannelPermutation p;
  p.mapping.resize(channels);
  std::iota(p.mapping.begin(), p.mapping.end(), std::size_t{0});
  return p;
}

ChannelPermutation ChannelPermutation::reverse(std::size_t channels) {
  ChannelPermutation p = identity(channels);
  std::reverse(p.mapping.begin(), p.mapping.end());
  return p;
}

ChannelPermutation ChannelPermutation::shuffle(std::size_t channels, std::uint64_t seed) {
  ChannelPermutation p = identity(channels);
  RngStream rng(seed);
  for (std::size_t i = channels; i > 1; --i) std::swap(p.mapping[i - 1], p.mapping[rng.below(i)]);
  return p;
}

ChannelPermutation ChannelPermutation::from_file(const std::filesystem::path& path, std::size_t channels) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open permutation file " + path.string());
  ChannelPermutation p;
  std::string token;
  while (in >> token) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size() || v < 0) {
      throw ConfigError("malformed permutation entry '" + token + "' in " + path.string());
    }
    p.mapping.push_back(static_cast<std::size_t>(v));
  }
  p.validate(channels);
  return p;
}

}  // namespace eeggaze
