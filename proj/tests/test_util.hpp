#pragma once

#include <cstdint>
#include <vector>

#include "eeggaze/rng.hpp"
#include "eeggaze/tensor.hpp"

namespace eeggaze::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  RngStream rng(seed);
  std::vector<T> v(shape_numel(shape));
  for (T& x : v) x = static_cast<T>(rng.normal() * scale);
  return Tensor<T>(std::move(shape), std::move(v));
}

/// Direct nested-loop convolution, independent of the im2col/GEMM path.
inline std::vector<double> brute_conv2d(const std::vector<double>& x, std::size_t b, std::size_t cin,
                                        std::size_t h, std::size_t w, const std::vector<double>& k,
                                        std::size_t cout, std::size_t kh, std::size_t kw, std::size_t sh,
                                        std::size_t sw, std::size_t ph, std::size_t pw,
                                        std::size_t groups) {
  const std::size_t ho = (h + 2 * ph - kh) / sh + 1;
  const std::size_t wo = (w + 2 * pw - kw) / sw + 1;
  const std::size_t cin_g = cin / groups, cout_g = cout / groups;
  std::vector<double> out(b * cout * ho * wo, 0.0);
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t co = 0; co < cout; ++co) {
      const std::size_t grp = co / cout_g;
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < cin_g; ++ci)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const long iy = static_cast<long>(oy * sh + i) - static_cast<long>(ph);
                const long ix = static_cast<long>(ox * sw + j) - static_cast<long>(pw);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                const std::size_t c = grp * cin_g + ci;
                acc += x[((n * cin + c) * h + iy) * w + ix] * k[((co * cin_g + ci) * kh + i) * kw + j];
              }
          out[((n * cout + co) * ho + oy) * wo + ox] = acc;
        }
    }
  return out;
}

}  // namespace eeggaze::testing
