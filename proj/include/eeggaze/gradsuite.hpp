#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "eeggaze/model.hpp"

namespace eeggaze {

struct GradSuiteEntry {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t seeds = 0;
  std::size_t coordinates = 0;
};

/// Smallest model used for end-to-end gradient checks: 4 channels, 32
/// timepoints, one transformer block.
ModelConfig gradcheck_tiny_config();

/// Finite-difference checks in double precision for every op, every layer and
/// the tiny end-to-end model, each over `seeds` random draws. One entry per
/// check holding the worst error seen.
std::vector<GradSuiteEntry> run_gradient_suite(std::size_t seeds = 10, double eps = 1e-5);

}  // namespace eeggaze
