#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "eeggaze/rng.hpp"
#include "eeggaze/tensor.hpp"

namespace eeggaze {

enum class BinaryOp { kAdd, kSub, kMul, kDiv };
enum class UnaryOp { kNeg, kExp, kSqrt, kGelu, kRelu, kSquare };
enum class ReduceOp { kSum, kMean, kMax };

/// Numpy-style broadcast of two shapes (right-aligned).
Shape broadcast_shapes(const Shape& a, const Shape& b);

// Elementwise. Binary forms broadcast; gelu is the exact x * Phi(x).
template <typename T>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, BinaryOp op);
template <typename T>
Tensor<T> elementwise(const Tensor<T>& x, UnaryOp op);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(a, b, BinaryOp::kAdd); }
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(a, b, BinaryOp::kSub); }
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(a, b, BinaryOp::kMul); }
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(a, b, BinaryOp::kDiv); }

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value);
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T value);

template <typename T>
Tensor<T> neg(const Tensor<T>& x) { return elementwise(x, UnaryOp::kNeg); }
template <typename T>
Tensor<T> exp(const Tensor<T>& x) { return elementwise(x, UnaryOp::kExp); }
template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) { return elementwise(x, UnaryOp::kSqrt); }
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) { return elementwise(x, UnaryOp::kGelu); }
template <typename T>
Tensor<T> relu(const Tensor<T>& x) { return elementwise(x, UnaryOp::kRelu); }
template <typename T>
Tensor<T> square(const Tensor<T>& x) { return elementwise(x, UnaryOp::kSquare); }

/// Reduces over `axes`. An empty axes list reduces nothing (numpy semantics).
template <typename T>
Tensor<T> reduce(const Tensor<T>& x, ReduceOp op, std::vector<int> axes, bool keepdim = false);
template <typename T>
Tensor<T> sum(const Tensor<T>& x, std::vector<int> axes, bool keepdim = false) {
  return reduce(x, ReduceOp::kSum, std::move(axes), keepdim);
}
template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::vector<int> axes, bool keepdim = false) {
  return reduce(x, ReduceOp::kMean, std::move(axes), keepdim);
}
template <typename T>
Tensor<T> max(const Tensor<T>& x, std::vector<int> axes, bool keepdim = false) {
  return reduce(x, ReduceOp::kMax, std::move(axes), keepdim);
}
template <typename T>
Tensor<T> sum_all(const Tensor<T>& x);
template <typename T>
Tensor<T> mean_all(const Tensor<T>& x);

/// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

/// [m,k] x [k,p] -> [m,p].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// Batched product of rank-3 tensors with optional transposition of the two
/// trailing axes of either operand.
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a = false,
              bool transpose_b = false);
/// y = x W^T + b over the last axis of x. `bias` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

struct Conv2dOptions {
  std::array<std::size_t, 2> stride{1, 1};
  std::array<std::size_t, 2> padding{0, 0};
  std::size_t groups = 1;
};

/// input [B,Cin,H,W], kernel [Cout,Cin/groups,kh,kw] -> [B,Cout,H',W'] with
/// H' = (H + 2 ph - kh) / sh + 1. `bias` ([Cout]) may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 const Conv2dOptions& options = {});

template <typename T>
Tensor<T> pad_zero(const Tensor<T>& x, int axis, std::size_t before, std::size_t after);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& dims);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t start, std::size_t length);
/// Gathers `indices` along `axis` (indices may repeat).
template <typename T>
Tensor<T> index_select(const Tensor<T>& x, int axis, const std::vector<std::size_t>& indices);

/// Inverted dropout: survivors are scaled by 1/(1-p). Identity when not
/// training or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, RngStream& rng);

namespace detail {

/// C[M,N] (+)= op(A)[M,K] * op(B)[K,N]. With trans_a A is stored [K,M];
/// with trans_b B is stored [N,K].
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate);

}  // namespace detail

}  // namespace eeggaze
