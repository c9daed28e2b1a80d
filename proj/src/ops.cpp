#include "eeggaze/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

namespace eeggaze {
namespace {

template <typename T>
using NodeT = detail::Node<T>;

template <typename T>
void check_finite(const std::vector<T>& data, const char* op) {
  if (!checked_mode()) return;
  for (T v : data) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

template <typename T>
Tensor<T> make_output(Shape shape, std::vector<T> data, std::initializer_list<const Tensor<T>*> inputs,
                      const char* op, std::function<void(NodeT<T>&)> backward) {
  check_finite(data, op);
  auto node = std::make_shared<NodeT<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool tracked = false;
  for (const auto* in : inputs) tracked = tracked || (in->defined() && in->requires_grad());
  tracked = tracked && grad_enabled();
  if (tracked) {
    node->requires_grad = true;
    for (const auto* in : inputs) node->inputs.push_back(in->defined() ? in->node() : nullptr);
    node->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
Tensor<T> make_output_list(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                           const char* op, std::function<void(NodeT<T>&)> backward) {
  check_finite(data, op);
  auto node = std::make_shared<NodeT<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool tracked = false;
  for (const auto& in : inputs) tracked = tracked || in.requires_grad();
  tracked = tracked && grad_enabled();
  if (tracked) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

/// Grad buffer of input i, or nullptr when that input does not need one.
template <typename T>
std::vector<T>* input_grad(NodeT<T>& self, std::size_t i) {
  auto& in = self.inputs[i];
  if (!in || !in->requires_grad) return nullptr;
  return &in->grad_buffer();
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t d = shape.size(); d-- > 1;) s[d - 1] = s[d] * shape[d];
  return s;
}

// Iteration plan for an output shape with two operands broadcast into it.
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;
  std::size_t numel = 0;
  std::size_t numel_a = 0, numel_b = 0;

  BroadcastPlan(const Shape& a, const Shape& b) : out(broadcast_shapes(a, b)) {
    const std::size_t r = out.size();
    stride_a.assign(r, 0);
    stride_b.assign(r, 0);
    auto fill = [&](const Shape& s, std::vector<std::size_t>& st) {
      const auto own = strides_of(s);
      const std::size_t off = r - s.size();
      for (std::size_t d = 0; d < s.size(); ++d) st[off + d] = s[d] == 1 ? 0 : own[d];
    };
    fill(a, stride_a);
    fill(b, stride_b);
    numel = shape_numel(out);
    numel_a = shape_numel(a);
    numel_b = shape_numel(b);
  }

  // f(i, ia, ib) over every output element in row-major order.
  template <typename F>
  void run(F&& f) const {
    if (numel_a == numel && numel_b == numel) {
      for (std::size_t i = 0; i < numel; ++i) f(i, i, i);
      return;
    }
    if (numel_a == numel && numel_b == 1) {
      for (std::size_t i = 0; i < numel; ++i) f(i, i, std::size_t{0});
      return;
    }
    if (numel_b == numel && numel_a == 1) {
      for (std::size_t i = 0; i < numel; ++i) f(i, std::size_t{0}, i);
      return;
    }
    const std::size_t r = out.size();
    const std::size_t inner = out[r - 1];
    const std::size_t ia_step = stride_a[r - 1], ib_step = stride_b[r - 1];
    std::vector<std::size_t> idx(r, 0);
    std::size_t oa = 0, ob = 0;
    for (std::size_t i = 0; i < numel; i += inner) {
      std::size_t ia = oa, ib = ob;
      for (std::size_t j = 0; j < inner; ++j, ia += ia_step, ib += ib_step) f(i + j, ia, ib);
      for (std::size_t d = r - 1; d-- > 0;) {
        ++idx[d];
        oa += stride_a[d];
        ob += stride_b[d];
        if (idx[d] < out[d]) break;
        oa -= stride_a[d] * out[d];
        ob -= stride_b[d] * out[d];
        idx[d] = 0;
      }
    }
  }
};

template <typename T>
T gelu_value(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  return cdf + x * pdf;
}

template <typename T>
void transpose_into(const T* src, std::size_t rows, std::size_t cols, T* dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(ea, eb);
  }
  return out;
}

// ---------------------------------------------------------------------------
// GEMM

namespace detail {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T{0});
  if (m == 0 || n == 0 || k == 0) return;
  std::vector<T> a_buf, b_buf;
  if (trans_a) {
    a_buf.resize(m * k);
    transpose_into(a, k, m, a_buf.data());
    a = a_buf.data();
  }
  if (trans_b) {
    b_buf.resize(k * n);
    transpose_into(b, n, k, b_buf.data());
    b = b_buf.data();
  }
  constexpr std::size_t kBlockN = 512;
  constexpr std::size_t kBlockK = 128;
  for (std::size_t n0 = 0; n0 < n; n0 += kBlockN) {
    const std::size_t nn = std::min(kBlockN, n - n0);
    for (std::size_t k0 = 0; k0 < k; k0 += kBlockK) {
      const std::size_t k1 = std::min(k, k0 + kBlockK);
      std::size_t i = 0;
      for (; i + 4 <= m; i += 4) {
        T* c0 = c + i * n + n0;
        T* c1 = c0 + n;
        T* c2 = c1 + n;
        T* c3 = c2 + n;
        for (std::size_t p = k0; p < k1; ++p) {
          const T a0 = a[i * k + p], a1 = a[(i + 1) * k + p];
          const T a2 = a[(i + 2) * k + p], a3 = a[(i + 3) * k + p];
          const T* brow = b + p * n + n0;
          for (std::size_t j = 0; j < nn; ++j) {
            const T bv = brow[j];
            c0[j] += a0 * bv;
            c1[j] += a1 * bv;
            c2[j] += a2 * bv;
            c3[j] += a3 * bv;
          }
        }
      }
      for (; i < m; ++i) {
        T* c0 = c + i * n + n0;
        for (std::size_t p = k0; p < k1; ++p) {
          const T a0 = a[i * k + p];
          const T* brow = b + p * n + n0;
          for (std::size_t j = 0; j < nn; ++j) c0[j] += a0 * brow[j];
        }
      }
    }
  }
}

template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t, const float*,
                          const float*, float*, bool);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t, const double*,
                           const double*, double*, bool);

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

template <typename T>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, BinaryOp op) {
  BroadcastPlan plan(a.shape(), b.shape());
  std::vector<T> out(plan.numel);
  const T* pa = a.values().data();
  const T* pb = b.values().data();
  const char* name = "add";
  switch (op) {
    case BinaryOp::kAdd:
      plan.run([&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = pa[ia] + pb[ib]; });
      break;
    case BinaryOp::kSub:
      name = "sub";
      plan.run([&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = pa[ia] - pb[ib]; });
      break;
    case BinaryOp::kMul:
      name = "mul";
      plan.run([&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = pa[ia] * pb[ib]; });
      break;
    case BinaryOp::kDiv:
      name = "div";
      if (checked_mode()) {
        for (T v : b.values()) {
          if (v == T{0}) throw NumericError("division by zero");
        }
      }
      plan.run([&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = pa[ia] / pb[ib]; });
      break;
  }
  return make_output<T>(plan.out, std::move(out), {&a, &b}, name, [plan, op](NodeT<T>& self) {
    const T* g = self.grad.data();
    const T* va = self.inputs[0]->data.data();
    const T* vb = self.inputs[1]->data.data();
    std::vector<T>* ga = input_grad(self, 0);
    std::vector<T>* gb = input_grad(self, 1);
    T* pga = ga ? ga->data() : nullptr;
    T* pgb = gb ? gb->data() : nullptr;
    switch (op) {
      case BinaryOp::kAdd:
        plan.run([&](std::size_t i, std::size_t ia, std::size_t ib) {
          if (pga) pga[ia] += g[i];
          if (pgb) pgb[ib] += g[i];
        });
        break;
      case BinaryOp::kSub:
        plan.run([&](std::size_t i, std::size_t ia, std::size_t ib) {
          if (pga) pga[ia] += g[i];
          if (pgb) pgb[ib] -= g[i];
        });
        break;
      case BinaryOp::kMul:
        plan.run([&](std::size_t i, std::size_t ia, std::size_t ib) {
          if (pga) pga[ia] += g[i] * vb[ib];
          if (pgb) pgb[ib] += g[i] * va[ia];
        });
        break;
      case BinaryOp::kDiv:
        plan.run([&](std::size_t i, std::size_t ia, std::size_t ib) {
          if (pga) pga[ia] += g[i] / vb[ib];
          if (pgb) pgb[ib] -= g[i] * va[ia] / (vb[ib] * vb[ib]);
        });
        break;
    }
  });
}

template <typename T>
Tensor<T> elementwise(const Tensor<T>& x, UnaryOp op) {
  const auto& in = x.values();
  std::vector<T> out(in.size());
  const char* name = "neg";
  switch (op) {
    case UnaryOp::kNeg:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = -in[i];
      break;
    case UnaryOp::kExp:
      name = "exp";
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::exp(in[i]);
      break;
    case UnaryOp::kSqrt:
      name = "sqrt";
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::sqrt(in[i]);
      break;
    case UnaryOp::kGelu:
      name = "gelu";
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = gelu_value(in[i]);
      break;
    case UnaryOp::kRelu:
      name = "relu";
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T{0} ? in[i] : T{0};
      break;
    case UnaryOp::kSquare:
      name = "square";
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * in[i];
      break;
  }
  return make_output<T>(x.shape(), std::move(out), {&x}, name, [op](NodeT<T>& self) {
    std::vector<T>* gx = input_grad(self, 0);
    if (!gx) return;
    const auto& g = self.grad;
    const auto& xv = self.inputs[0]->data;
    const auto& y = self.data;
    for (std::size_t i = 0; i < g.size(); ++i) {
      T d{};
      switch (op) {
        case UnaryOp::kNeg: d = T(-1); break;
        case UnaryOp::kExp: d = y[i]; break;
        case UnaryOp::kSqrt: d = T(0.5) / y[i]; break;
        case UnaryOp::kGelu: d = gelu_grad(xv[i]); break;
        case UnaryOp::kRelu: d = xv[i] > T{0} ? T(1) : T(0); break;
        case UnaryOp::kSquare: d = T(2) * xv[i]; break;
      }
      (*gx)[i] += g[i] * d;
    }
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  std::vector<T> out(x.values().begin(), x.values().end());
  for (T& v : out) v += value;
  return make_output<T>(x.shape(), std::move(out), {&x}, "add_scalar", [](NodeT<T>& self) {
    if (auto* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T value) {
  std::vector<T> out(x.values().begin(), x.values().end());
  for (T& v : out) v *= value;
  return make_output<T>(x.shape(), std::move(out), {&x}, "mul_scalar", [value](NodeT<T>& self) {
    if (auto* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i] * value;
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> reduce(const Tensor<T>& x, ReduceOp op, std::vector<int> axes, bool keepdim) {
  const std::size_t r = x.rank();
  std::vector<bool> reduced(r, false);
  for (int a : axes) {
    const std::size_t ax = normalize_axis(a, r);
    if (reduced[ax]) throw ShapeError("duplicate reduction axis " + std::to_string(a));
    reduced[ax] = true;
  }
  Shape kept_shape = x.shape();
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t d = 0; d < r; ++d) {
    if (reduced[d]) {
      count *= kept_shape[d];
      kept_shape[d] = 1;
      if (keepdim) out_shape.push_back(1);
    } else {
      out_shape.push_back(kept_shape[d]);
    }
  }
  // Input indexes into itself (stride a) and into the kept-dim output (stride b).
  BroadcastPlan plan(x.shape(), kept_shape);
  const std::size_t out_n = shape_numel(kept_shape);
  const T* px = x.values().data();
  std::vector<T> out(out_n, T{0});
  std::vector<std::size_t> argmax;
  const char* name = "sum";
  if (op == ReduceOp::kMax) {
    name = "max";
    out.assign(out_n, -std::numeric_limits<T>::infinity());
    argmax.assign(out_n, 0);
    plan.run([&](std::size_t i, std::size_t, std::size_t o) {
      if (px[i] > out[o]) {
        out[o] = px[i];
        argmax[o] = i;
      }
    });
  } else {
    plan.run([&](std::size_t i, std::size_t, std::size_t o) { out[o] += px[i]; });
    if (op == ReduceOp::kMean) {
      name = "mean";
      for (T& v : out) v /= static_cast<T>(count);
    }
  }
  return make_output<T>(out_shape, std::move(out), {&x}, name,
                        [plan, op, count, argmax = std::move(argmax)](NodeT<T>& self) {
                          std::vector<T>* gx = input_grad(self, 0);
                          if (!gx) return;
                          const T* g = self.grad.data();
                          T* pg = gx->data();
                          if (op == ReduceOp::kMax) {
                            for (std::size_t o = 0; o < argmax.size(); ++o) pg[argmax[o]] += g[o];
                            return;
                          }
                          const T scale = op == ReduceOp::kMean ? T(1) / static_cast<T>(count) : T(1);
                          plan.run([&](std::size_t i, std::size_t, std::size_t o) { pg[i] += g[o] * scale; });
                        });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  std::vector<int> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return reduce(x, ReduceOp::kSum, axes, false);
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  std::vector<int> axes(x.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return reduce(x, ReduceOp::kMean, axes, false);
}

// ---------------------------------------------------------------------------
// Softmax

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const auto& shape = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= shape[d];
  for (std::size_t d = ax + 1; d < shape.size(); ++d) inner *= shape[d];
  const std::size_t len = shape[ax];
  const T* px = x.values().data();
  std::vector<T> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, px[base + j * inner]);
      T total{0};
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(px[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  }
  return make_output<T>(shape, std::move(out), {&x}, "softmax", [outer, inner, len](NodeT<T>& self) {
    std::vector<T>* gx = input_grad(self, 0);
    if (!gx) return;
    const T* g = self.grad.data();
    const T* y = self.data.data();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot{0};
        for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t i = base + j * inner;
          (*gx)[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Products

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool ta, bool tb) {
  if (a.rank() != 3 || b.rank() != 3) {
    throw ShapeError("bmm needs rank-3 operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t batch = a.shape()[0];
  if (b.shape()[0] != batch) throw ShapeError("bmm batch extents differ");
  const std::size_t m = ta ? a.shape()[2] : a.shape()[1];
  const std::size_t k = ta ? a.shape()[1] : a.shape()[2];
  const std::size_t kb = tb ? b.shape()[2] : b.shape()[1];
  const std::size_t p = tb ? b.shape()[1] : b.shape()[2];
  if (k != kb) {
    throw ShapeError("bmm inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<T> out(batch * m * p);
  const T* pa = a.values().data();
  const T* pb = b.values().data();
  for (std::size_t i = 0; i < batch; ++i) {
    detail::gemm(ta, tb, m, p, k, pa + i * m * k, pb + i * k * p, out.data() + i * m * p, false);
  }
  return make_output<T>(Shape{batch, m, p}, std::move(out), {&a, &b}, "bmm",
                        [batch, m, k, p, ta, tb](NodeT<T>& self) {
                          const T* g = self.grad.data();
                          const T* va = self.inputs[0]->data.data();
                          const T* vb = self.inputs[1]->data.data();
                          if (auto* ga = input_grad(self, 0)) {
                            for (std::size_t i = 0; i < batch; ++i) {
                              const T* gi = g + i * m * p;
                              const T* bi = vb + i * k * p;
                              T* gai = ga->data() + i * m * k;
                              if (!ta) {
                                detail::gemm(false, !tb, m, k, p, gi, bi, gai, true);
                              } else {
                                detail::gemm(tb, true, k, m, p, bi, gi, gai, true);
                              }
                            }
                          }
                          if (auto* gb = input_grad(self, 1)) {
                            for (std::size_t i = 0; i < batch; ++i) {
                              const T* gi = g + i * m * p;
                              const T* ai = va + i * m * k;
                              T* gbi = gb->data() + i * k * p;
                              if (!tb) {
                                detail::gemm(!ta, false, k, p, m, ai, gi, gbi, true);
                              } else {
                                detail::gemm(true, ta, p, k, m, gi, ai, gbi, true);
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul needs rank-2 operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  if (a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  auto a3 = reshape(a, Shape{1, a.shape()[0], a.shape()[1]});
  auto b3 = reshape(b, Shape{1, b.shape()[0], b.shape()[1]});
  return reshape(bmm(a3, b3), Shape{a.shape()[0], b.shape()[1]});
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.rank() != 2) throw ShapeError("linear weight must be [out,in]");
  const std::size_t out_f = weight.shape()[0];
  const std::size_t in_f = weight.shape()[1];
  if (x.rank() < 1 || x.shape().back() != in_f) {
    throw ShapeError("linear expects last extent " + std::to_string(in_f) + ", got " +
                     shape_str(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.shape()[0] != out_f)) {
    throw ShapeError("linear bias must be [" + std::to_string(out_f) + "]");
  }
  const std::size_t rows = x.numel() / in_f;
  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  std::vector<T> out(rows * out_f);
  detail::gemm(false, true, rows, out_f, in_f, x.values().data(), weight.values().data(), out.data(),
               false);
  if (bias.defined()) {
    const T* pb = bias.values().data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < out_f; ++j) out[r * out_f + j] += pb[j];
  }
  return make_output<T>(std::move(out_shape), std::move(out), {&x, &weight, &bias}, "linear",
                        [rows, in_f, out_f](NodeT<T>& self) {
                          const T* g = self.grad.data();
                          if (auto* gx = input_grad(self, 0)) {
                            detail::gemm(false, false, rows, in_f, out_f, g,
                                         self.inputs[1]->data.data(), gx->data(), true);
                          }
                          if (auto* gw = input_grad(self, 1)) {
                            detail::gemm(true, false, out_f, in_f, rows, g,
                                         self.inputs[0]->data.data(), gw->data(), true);
                          }
                          if (auto* gb = input_grad(self, 2)) {
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t j = 0; j < out_f; ++j) (*gb)[j] += g[r * out_f + j];
                          }
                        });
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, cin_g, cout_g, kh, kw, sh, sw, ph, pw, ho, wo, groups;
  std::size_t k_len() const { return cin_g * kh * kw; }
  std::size_t l_len() const { return ho * wo; }
};

// cols[(c*kh + i)*kw + j][oy*wo + ox] = x[c][oy*sh + i - ph][ox*sw + j - pw].
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const std::size_t l = g.l_len();
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    const T* xc = x + c * g.h * g.w;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * l;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.sh + i) - static_cast<long>(g.ph);
          T* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.wo, T{0});
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(iy) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.sw + j) - static_cast<long>(g.pw);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T{0} : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* x) {
  const std::size_t l = g.l_len();
  for (std::size_t c = 0; c < g.cin_g; ++c) {
    T* xc = x + c * g.h * g.w;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * l;
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.sh + i) - static_cast<long>(g.ph);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* dst = xc + static_cast<std::size_t>(iy) * g.w;
          const T* src = row + oy * g.wo;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.sw + j) - static_cast<long>(g.pw);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 const Conv2dOptions& options) {
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw ShapeError("conv2d needs input [B,C,H,W] and kernel [Cout,Cin/g,kh,kw], got " +
                     shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  }
  ConvGeometry g{};
  g.batch = input.shape()[0];
  g.cin = input.shape()[1];
  g.h = input.shape()[2];
  g.w = input.shape()[3];
  g.cout = kernel.shape()[0];
  g.kh = kernel.shape()[2];
  g.kw = kernel.shape()[3];
  g.sh = options.stride[0];
  g.sw = options.stride[1];
  g.ph = options.padding[0];
  g.pw = options.padding[1];
  g.groups = options.groups;
  if (g.groups == 0 || g.cin % g.groups != 0 || g.cout % g.groups != 0) {
    throw ShapeError("conv2d groups=" + std::to_string(g.groups) + " must divide Cin=" +
                     std::to_string(g.cin) + " and Cout=" + std::to_string(g.cout));
  }
  if (g.sh == 0 || g.sw == 0) throw ShapeError("conv2d stride must be positive");
  g.cin_g = g.cin / g.groups;
  g.cout_g = g.cout / g.groups;
  if (kernel.shape()[1] != g.cin_g) {
    throw ShapeError("conv2d kernel expects " + std::to_string(kernel.shape()[1]) +
                     " input channels per group, input provides " + std::to_string(g.cin_g));
  }
  if (g.kh > g.h + 2 * g.ph || g.kw > g.w + 2 * g.pw) {
    throw ShapeError("conv2d kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                     shape_str(input.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.shape()[0] != g.cout)) {
    throw ShapeError("conv2d bias must be [Cout]");
  }
  g.ho = (g.h + 2 * g.ph - g.kh) / g.sh + 1;
  g.wo = (g.w + 2 * g.pw - g.kw) / g.sw + 1;

  const std::size_t kl = g.k_len(), ll = g.l_len();
  std::vector<T> out(g.batch * g.cout * ll);
  std::vector<T> cols(kl * ll);
  const T* px = input.values().data();
  const T* pk = kernel.values().data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
      im2col(px + (b * g.cin + grp * g.cin_g) * g.h * g.w, g, cols.data());
      detail::gemm(false, false, g.cout_g, ll, kl, pk + grp * g.cout_g * kl, cols.data(),
                   out.data() + (b * g.cout + grp * g.cout_g) * ll, false);
    }
  }
  if (bias.defined()) {
    const T* pb = bias.values().data();
    for (std::size_t b = 0; b < g.batch; ++b)
      for (std::size_t c = 0; c < g.cout; ++c) {
        T* o = out.data() + (b * g.cout + c) * ll;
        for (std::size_t i = 0; i < ll; ++i) o[i] += pb[c];
      }
  }
  return make_output<T>(Shape{g.batch, g.cout, g.ho, g.wo}, std::move(out), {&input, &kernel, &bias},
                        "conv2d", [g](NodeT<T>& self) {
                          const std::size_t kl = g.k_len(), ll = g.l_len();
                          const T* gout = self.grad.data();
                          const T* px = self.inputs[0]->data.data();
                          const T* pk = self.inputs[1]->data.data();
                          auto* gx = input_grad(self, 0);
                          auto* gk = input_grad(self, 1);
                          auto* gb = input_grad(self, 2);
                          std::vector<T> cols(kl * ll);
                          for (std::size_t b = 0; b < g.batch; ++b) {
                            for (std::size_t grp = 0; grp < g.groups; ++grp) {
                              const T* go = gout + (b * g.cout + grp * g.cout_g) * ll;
                              if (gk) {
                                im2col(px + (b * g.cin + grp * g.cin_g) * g.h * g.w, g, cols.data());
                                detail::gemm(false, true, g.cout_g, kl, ll, go, cols.data(),
                                             gk->data() + grp * g.cout_g * kl, true);
                              }
                              if (gx) {
                                detail::gemm(true, false, kl, ll, g.cout_g, pk + grp * g.cout_g * kl, go,
                                             cols.data(), false);
                                col2im_add(cols.data(), g,
                                           gx->data() + (b * g.cin + grp * g.cin_g) * g.h * g.w);
                              }
                            }
                          }
                          if (gb) {
                            for (std::size_t b = 0; b < g.batch; ++b)
                              for (std::size_t c = 0; c < g.cout; ++c) {
                                const T* go = gout + (b * g.cout + c) * ll;
                                T acc{0};
                                for (std::size_t i = 0; i < ll; ++i) acc += go[i];
                                (*gb)[c] += acc;
                              }
                          }
                        });
}

// ---------------------------------------------------------------------------
// Shape manipulation

namespace {

// Views a tensor as [outer, extent, inner] around `axis`.
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
  AxisView(const Shape& s, std::size_t axis) {
    for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
    extent = s[axis];
    for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  }
};

}  // namespace

template <typename T>
Tensor<T> pad_zero(const Tensor<T>& x, int axis, std::size_t before, std::size_t after) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  if (before == 0 && after == 0) return x;
  const AxisView v(x.shape(), ax);
  const std::size_t ext = v.extent + before + after;
  Shape out_shape = x.shape();
  out_shape[ax] = ext;
  std::vector<T> out(v.outer * ext * v.inner, T{0});
  const T* px = x.values().data();
  for (std::size_t o = 0; o < v.outer; ++o)
    std::copy(px + o * v.extent * v.inner, px + (o + 1) * v.extent * v.inner,
              out.data() + (o * ext + before) * v.inner);
  return make_output<T>(std::move(out_shape), std::move(out), {&x}, "pad_zero",
                        [v, ext, before](NodeT<T>& self) {
                          auto* gx = input_grad(self, 0);
                          if (!gx) return;
                          const T* g = self.grad.data();
                          for (std::size_t o = 0; o < v.outer; ++o) {
                            const T* src = g + (o * ext + before) * v.inner;
                            T* dst = gx->data() + o * v.extent * v.inner;
                            for (std::size_t i = 0; i < v.extent * v.inner; ++i) dst[i] += src[i];
                          }
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<T> out(x.values().begin(), x.values().end());
  return make_output<T>(std::move(shape), std::move(out), {&x}, "reshape", [](NodeT<T>& self) {
    if (auto* gx = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& dims) {
  const std::size_t r = x.rank();
  if (dims.size() != r) throw ShapeError("permute needs one entry per axis");
  std::vector<bool> seen(r, false);
  for (std::size_t d : dims) {
    if (d >= r || seen[d]) throw ShapeError("permute dims must be a permutation of the axes");
    seen[d] = true;
  }
  const auto in_strides = strides_of(x.shape());
  Shape out_shape(r);
  std::vector<std::size_t> src_strides(r);
  for (std::size_t d = 0; d < r; ++d) {
    out_shape[d] = x.shape()[dims[d]];
    src_strides[d] = in_strides[dims[d]];
  }
  const std::size_t n = x.numel();
  // map[i] = source offset of output element i.
  std::vector<std::size_t> map(n);
  {
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < n; ++i) {
      map[i] = off;
      for (std::size_t d = r; d-- > 0;) {
        ++idx[d];
        off += src_strides[d];
        if (idx[d] < out_shape[d]) break;
        off -= src_strides[d] * out_shape[d];
        idx[d] = 0;
      }
    }
  }
  const T* px = x.values().data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = px[map[i]];
  return make_output<T>(std::move(out_shape), std::move(out), {&x}, "permute",
                        [map = std::move(map)](NodeT<T>& self) {
                          auto* gx = input_grad(self, 0);
                          if (!gx) return;
                          for (std::size_t i = 0; i < map.size(); ++i) (*gx)[map[i]] += self.grad[i];
                        });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const std::size_t ax = normalize_axis(axis, parts[0].rank());
  Shape out_shape = parts[0].shape();
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != out_shape.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t d = 0; d < out_shape.size(); ++d) {
      if (d != ax && p.shape()[d] != out_shape[d]) {
        throw ShapeError("concat extents differ off-axis: " + shape_str(p.shape()) + " vs " +
                         shape_str(out_shape));
      }
    }
    extents.push_back(p.shape()[ax]);
    total += p.shape()[ax];
  }
  out_shape[ax] = total;
  const AxisView v(out_shape, ax);
  std::vector<T> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const T* src = parts[k].values().data();
    const std::size_t block = extents[k] * v.inner;
    for (std::size_t o = 0; o < v.outer; ++o)
      std::copy(src + o * block, src + (o + 1) * block, out.data() + (o * total + offset) * v.inner);
    offset += extents[k];
  }
  return make_output_list<T>(std::move(out_shape), std::move(out), parts, "concat",
                             [v, total, extents](NodeT<T>& self) {
                               std::size_t offset = 0;
                               for (std::size_t k = 0; k < extents.size(); ++k) {
                                 const std::size_t block = extents[k] * v.inner;
                                 if (auto* gp = input_grad(self, k)) {
                                   for (std::size_t o = 0; o < v.outer; ++o) {
                                     const T* src = self.grad.data() + (o * total + offset) * v.inner;
                                     T* dst = gp->data() + o * block;
                                     for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                                   }
                                 }
                                 offset += extents[k];
                               }
                             });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisView v(x.shape(), ax);
  if (length == 0 || start + length > v.extent) {
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of range for extent " + std::to_string(v.extent));
  }
  Shape out_shape = x.shape();
  out_shape[ax] = length;
  std::vector<T> out(v.outer * length * v.inner);
  const T* px = x.values().data();
  for (std::size_t o = 0; o < v.outer; ++o)
    std::copy(px + (o * v.extent + start) * v.inner, px + (o * v.extent + start + length) * v.inner,
              out.data() + o * length * v.inner);
  return make_output<T>(std::move(out_shape), std::move(out), {&x}, "slice",
                        [v, start, length](NodeT<T>& self) {
                          auto* gx = input_grad(self, 0);
                          if (!gx) return;
                          for (std::size_t o = 0; o < v.outer; ++o) {
                            const T* src = self.grad.data() + o * length * v.inner;
                            T* dst = gx->data() + (o * v.extent + start) * v.inner;
                            for (std::size_t i = 0; i < length * v.inner; ++i) dst[i] += src[i];
                          }
                        });
}

template <typename T>
Tensor<T> index_select(const Tensor<T>& x, int axis, const std::vector<std::size_t>& indices) {
  const std::size_t ax = normalize_axis(axis, x.rank());
  const AxisView v(x.shape(), ax);
  for (std::size_t i : indices) {
    if (i >= v.extent) throw ShapeError("index_select index " + std::to_string(i) + " out of range");
  }
  if (indices.empty()) throw ShapeError("index_select needs at least one index");
  Shape out_shape = x.shape();
  out_shape[ax] = indices.size();
  const std::size_t m = indices.size();
  std::vector<T> out(v.outer * m * v.inner);
  const T* px = x.values().data();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t j = 0; j < m; ++j)
      std::copy(px + (o * v.extent + indices[j]) * v.inner,
                px + (o * v.extent + indices[j] + 1) * v.inner, out.data() + (o * m + j) * v.inner);
  return make_output<T>(std::move(out_shape), std::move(out), {&x}, "index_select",
                        [v, m, indices](NodeT<T>& self) {
                          auto* gx = input_grad(self, 0);
                          if (!gx) return;
                          for (std::size_t o = 0; o < v.outer; ++o)
                            for (std::size_t j = 0; j < m; ++j) {
                              const T* src = self.grad.data() + (o * m + j) * v.inner;
                              T* dst = gx->data() + (o * v.extent + indices[j]) * v.inner;
                              for (std::size_t i = 0; i < v.inner; ++i) dst[i] += src[i];
                            }
                        });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, RngStream& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout p must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (T& m : mask) m = rng.uniform() < p ? T{0} : scale;
  std::vector<T> out(x.numel());
  const T* px = x.values().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = px[i] * mask[i];
  return make_output<T>(x.shape(), std::move(out), {&x}, "dropout",
                        [mask = std::move(mask)](NodeT<T>& self) {
                          auto* gx = input_grad(self, 0);
                          if (!gx) return;
                          for (std::size_t i = 0; i < mask.size(); ++i) (*gx)[i] += self.grad[i] * mask[i];
                        });
}

#define EEGGAZE_INSTANTIATE_OPS(T)                                                                 \
  template Tensor<T> elementwise(const Tensor<T>&, const Tensor<T>&, BinaryOp);                   \
  template Tensor<T> elementwise(const Tensor<T>&, UnaryOp);                                      \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                             \
  template Tensor<T> mul_scalar(const Tensor<T>&, T);                                             \
  template Tensor<T> reduce(const Tensor<T>&, ReduceOp, std::vector<int>, bool);                  \
  template Tensor<T> sum_all(const Tensor<T>&);                                                   \
  template Tensor<T> mean_all(const Tensor<T>&);                                                  \
  template Tensor<T> softmax(const Tensor<T>&, int);                                              \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&, bool, bool);                         \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                 \
                            const Conv2dOptions&);                                                \
  template Tensor<T> pad_zero(const Tensor<T>&, int, std::size_t, std::size_t);                   \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                            \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                  \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                                  \
  template Tensor<T> slice(const Tensor<T>&, int, std::size_t, std::size_t);                      \
  template Tensor<T> index_select(const Tensor<T>&, int, const std::vector<std::size_t>&);        \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, RngStream&);

EEGGAZE_INSTANTIATE_OPS(float)
EEGGAZE_INSTANTIATE_OPS(double)

}  // namespace eeggaze
