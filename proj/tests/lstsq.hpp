#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace eeggaze::testing {

/// Least squares via the normal equations and Gauss-Jordan elimination with
/// partial pivoting. x is row-major [n][f], y is [n][outputs]; returns
/// coefficients [f][outputs].
inline std::vector<double> lstsq(const std::vector<double>& x, std::size_t f, const std::vector<double>& y,
                                 std::size_t outputs) {
  const std::size_t n = x.size() / f;
  const std::size_t w = f + outputs;
  std::vector<double> a(f * w, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < f; ++i) {
      for (std::size_t j = 0; j < f; ++j) a[i * w + j] += x[r * f + i] * x[r * f + j];
      for (std::size_t o = 0; o < outputs; ++o) a[i * w + f + o] += x[r * f + i] * y[r * outputs + o];
    }
  for (std::size_t col = 0; col < f; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < f; ++r)
      if (std::abs(a[r * w + col]) > std::abs(a[piv * w + col])) piv = r;
    if (std::abs(a[piv * w + col]) < 1e-300) throw std::runtime_error("singular normal equations");
    for (std::size_t j = 0; j < w; ++j) std::swap(a[col * w + j], a[piv * w + j]);
    const double d = a[col * w + col];
    for (std::size_t j = 0; j < w; ++j) a[col * w + j] /= d;
    for (std::size_t r = 0; r < f; ++r) {
      if (r == col) continue;
      const double m = a[r * w + col];
      for (std::size_t j = 0; j < w; ++j) a[r * w + j] -= m * a[col * w + j];
    }
  }
  std::vector<double> coef(f * outputs);
  for (std::size_t i = 0; i < f; ++i)
    for (std::size_t o = 0; o < outputs; ++o) coef[i * outputs + o] = a[i * w + f + o];
  return coef;
}

inline std::vector<double> lstsq_predict(const std::vector<double>& x, std::size_t f,
                                         const std::vector<double>& coef, std::size_t outputs) {
  const std::size_t n = x.size() / f;
  std::vector<double> out(n * outputs, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < f; ++i)
      for (std::size_t o = 0; o < outputs; ++o) out[r * outputs + o] += x[r * f + i] * coef[i * outputs + o];
  return out;
}

}  // namespace eeggaze::testing
