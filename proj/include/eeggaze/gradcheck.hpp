#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "eeggaze/errors.hpp"
#include "eeggaze/tensor.hpp"

namespace eeggaze {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

/// Compares autograd gradients of a scalar function against central finite
/// differences (f(x + eps e) - f(x - eps e)) / (2 eps) for every coordinate
/// of every tensor in `inputs`. Relative error is |a - n| / max(|a|, |n|, 1e-3).
///
/// The inputs are perturbed in place and restored; they must be leaves.
inline GradCheckResult grad_check(const std::function<Tensor<double>()>& f,
                                  std::vector<Tensor<double>> inputs, double eps = 1e-5) {
  if (!(eps > 0.0)) throw ConfigError("grad_check eps must be positive");
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  Tensor<double> loss = f();
  if (loss.numel() != 1) throw GraphError("grad_check function must return a scalar");
  loss.backward();

  GradCheckResult result;
  for (auto& x : inputs) {
    std::vector<double> analytic(x.numel(), 0.0);
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    auto values = x.values_mut();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + eps;
      const double plus = f().item();
      values[i] = orig - eps;
      const double minus = f().item();
      values[i] = orig;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3});
      result.max_relative_error =
          std::max(result.max_relative_error, std::abs(analytic[i] - numeric) / denom);
      ++result.coordinates;
    }
  }
  return result;
}

inline GradCheckResult grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                                  Tensor<double> x, double eps = 1e-5) {
  return grad_check([&] { return f(x); }, std::vector<Tensor<double>>{x}, eps);
}

}  // namespace eeggaze
