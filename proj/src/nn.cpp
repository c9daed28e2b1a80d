#include "eeggaze/nn.hpp"

#include <cmath>

namespace eeggaze::nn {

template <typename T>
void init_truncated_normal(Tensor<T>& t, RngStream& rng, double std) {
  for (T& v : t.values_mut()) v = static_cast<T>(rng.truncated_normal(std));
}

template <typename T>
void init_fan_in_uniform(Tensor<T>& t, RngStream& rng, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (T& v : t.values_mut()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
Tensor<T> parameter(Shape shape, T value) {
  Tensor<T> t(std::move(shape), value);
  t.set_requires_grad(true);
  return t;
}

// --- Linear ----------------------------------------------------------------

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, RngStream& rng)
    : weight(parameter<T>({out, in})), bias(parameter<T>({out})) {
  init_truncated_normal(weight, rng);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
  return linear(x, weight, bias);
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

// --- BatchNorm2d -------------------------------------------------------------

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels, double momentum_, double eps_)
    : gamma(parameter<T>({channels}, T{1})),
      beta(parameter<T>({channels})),
      running_mean(Shape{channels}, T{0}),
      running_var(Shape{channels}, T{1}),
      momentum(momentum_),
      eps(eps_) {}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, bool training) {
  if (x.rank() != 4 || x.shape()[1] != gamma.numel()) {
    throw ShapeError("batchnorm expects [B," + std::to_string(gamma.numel()) + ",H,W], got " +
                     shape_str(x.shape()));
  }
  const std::size_t c = x.shape()[1];
  const Shape bshape{1, c, 1, 1};
  auto g = reshape(gamma, bshape);
  auto b = reshape(beta, bshape);
  if (!training) {
    Tensor<T> scale(bshape), shift(bshape);
    for (std::size_t i = 0; i < c; ++i) {
      const T inv = T(1) / std::sqrt(running_var.values()[i] + static_cast<T>(eps));
      scale.values_mut()[i] = inv;
      shift.values_mut()[i] = -running_mean.values()[i] * inv;
    }
    return (x * scale + shift) * g + b;
  }
  const std::size_t count = x.shape()[0] * x.shape()[2] * x.shape()[3];
  if (count < 2) {
    throw ShapeError("batchnorm training needs at least two values per channel, got " +
                     std::to_string(count));
  }
  auto mu = mean(x, {0, 2, 3}, true);
  auto centered = x - mu;
  auto var = mean(square(centered), {0, 2, 3}, true);
  auto y = centered / sqrt(add_scalar(var, static_cast<T>(eps)));

  const T m = static_cast<T>(momentum);
  const T unbias = static_cast<T>(count) / static_cast<T>(count - 1);
  auto rm = running_mean.values_mut();
  auto rv = running_var.values_mut();
  for (std::size_t i = 0; i < c; ++i) {
    rm[i] = (T(1) - m) * rm[i] + m * mu.values()[i];
    rv[i] = (T(1) - m) * rv[i] + m * var.values()[i] * unbias;
  }
  return y * g + b;
}

template <typename T>
void BatchNorm2d<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

template <typename T>
void BatchNorm2d<T>::collect_buffers(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".running_mean", running_mean});
  out.push_back({prefix + ".running_var", running_var});
}

// --- LayerNorm ---------------------------------------------------------------

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t dim, double eps_)
    : gamma(parameter<T>({dim}, T{1})), beta(parameter<T>({dim})), eps(eps_) {}

template <typename T>
Tensor<T> LayerNorm<T>::forward(const Tensor<T>& x) const {
  if (x.rank() < 1 || x.shape().back() != gamma.numel()) {
    throw ShapeError("layernorm expects last extent " + std::to_string(gamma.numel()) + ", got " +
                     shape_str(x.shape()));
  }
  auto mu = mean(x, {-1}, true);
  auto centered = x - mu;
  auto var = mean(square(centered), {-1}, true);
  auto y = centered / sqrt(add_scalar(var, static_cast<T>(eps)));
  return y * gamma + beta;
}

template <typename T>
void LayerNorm<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

// --- MultiHeadAttention --------------------------------------------------------

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(std::size_t embed_dim, std::size_t heads_, RngStream& rng)
    : heads(heads_) {
  if (heads_ == 0 || embed_dim % heads_ != 0) {
    throw ConfigError("embed_dim " + std::to_string(embed_dim) + " not divisible by heads " +
                      std::to_string(heads_));
  }
  head_dim = embed_dim / heads_;
  query = Linear<T>(embed_dim, embed_dim, rng);
  key = Linear<T>(embed_dim, embed_dim, rng);
  value = Linear<T>(embed_dim, embed_dim, rng);
  output = Linear<T>(embed_dim, embed_dim, rng);
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::forward(const Tensor<T>& tokens, Tensor<T>* weights) const {
  const std::size_t d = embed_dim();
  if (tokens.rank() != 3 || tokens.shape()[2] != d) {
    throw ShapeError("attention expects [B,T," + std::to_string(d) + "], got " +
                     shape_str(tokens.shape()));
  }
  const std::size_t b = tokens.shape()[0], t = tokens.shape()[1];
  auto split = [&](const Tensor<T>& x) {
    return reshape(permute(reshape(x, Shape{b, t, heads, head_dim}), {0, 2, 1, 3}),
                   Shape{b * heads, t, head_dim});
  };
  auto q = split(query.forward(tokens));
  auto k = split(key.forward(tokens));
  auto v = split(value.forward(tokens));
  auto scores = mul_scalar(bmm(q, k, false, true), static_cast<T>(1.0 / std::sqrt(double(head_dim))));
  auto attn = softmax(scores, 2);
  if (weights) *weights = attn;
  auto context = bmm(attn, v);
  auto merged = reshape(permute(reshape(context, Shape{b, heads, t, head_dim}), {0, 2, 1, 3}),
                        Shape{b, t, d});
  return output.forward(merged);
}

template <typename T>
void MultiHeadAttention<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  query.collect(prefix + ".query", out);
  key.collect(prefix + ".key", out);
  value.collect(prefix + ".value", out);
  output.collect(prefix + ".output", out);
}

// --- TransformerBlock ----------------------------------------------------------

template <typename T>
TransformerBlock<T>::TransformerBlock(std::size_t embed_dim, std::size_t heads, std::size_t mlp_dim,
                                      double dropout_p_, RngStream& rng)
    : norm1(embed_dim),
      attention(embed_dim, heads, rng),
      norm2(embed_dim),
      mlp_in(embed_dim, mlp_dim, rng),
      mlp_out(mlp_dim, embed_dim, rng),
      dropout_p(dropout_p_) {}

template <typename T>
Tensor<T> TransformerBlock<T>::forward(const Tensor<T>& tokens, bool training, RngStream& rng) const {
  auto h = tokens + dropout(attention.forward(norm1.forward(tokens)), dropout_p, training, rng);
  auto mlp = mlp_out.forward(gelu(mlp_in.forward(norm2.forward(h))));
  return h + dropout(mlp, dropout_p, training, rng);
}

template <typename T>
void TransformerBlock<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  norm1.collect(prefix + ".norm1", out);
  attention.collect(prefix + ".attention", out);
  norm2.collect(prefix + ".norm2", out);
  mlp_in.collect(prefix + ".mlp_in", out);
  mlp_out.collect(prefix + ".mlp_out", out);
}

// --- EmbeddingBlock ------------------------------------------------------------

template <typename T>
EmbeddingBlock<T>::EmbeddingBlock(std::size_t tokens, std::size_t embed_dim, RngStream& rng)
    : cls_token(parameter<T>({1, embed_dim})), position_embeddings(parameter<T>({tokens + 1, embed_dim})) {
  init_truncated_normal(cls_token, rng);
  init_truncated_normal(position_embeddings, rng);
}

template <typename T>
Tensor<T> EmbeddingBlock<T>::forward(const Tensor<T>& patches) const {
  const std::size_t d = cls_token.shape()[1];
  const std::size_t positions = position_embeddings.shape()[0];
  if (patches.rank() != 3 || patches.shape()[2] != d) {
    throw ShapeError("embedding expects [B,T," + std::to_string(d) + "], got " +
                     shape_str(patches.shape()));
  }
  if (patches.shape()[1] + 1 != positions) {
    throw ShapeError("embedding has " + std::to_string(positions) + " positions but received " +
                     std::to_string(patches.shape()[1]) + " tokens (+1 CLS)");
  }
  const std::size_t b = patches.shape()[0];
  auto cls = Tensor<T>(Shape{b, 1, d}) + reshape(cls_token, Shape{1, 1, d});
  return concat<T>({cls, patches}, 1) + position_embeddings;
}

template <typename T>
void EmbeddingBlock<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".cls_token", cls_token});
  out.push_back({prefix + ".position_embeddings", position_embeddings});
}

#define EEGGAZE_INSTANTIATE_NN(T)                                                        \
  template void init_truncated_normal(Tensor<T>&, RngStream&, double);                  \
  template void init_fan_in_uniform(Tensor<T>&, RngStream&, std::size_t);               \
  template Tensor<T> parameter(Shape, T);                                               \
  template struct Linear<T>;                                                            \
  template struct BatchNorm2d<T>;                                                       \
  template struct LayerNorm<T>;                                                         \
  template struct MultiHeadAttention<T>;                                                \
  template struct TransformerBlock<T>;                                                  \
  template struct EmbeddingBlock<T>;

EEGGAZE_INSTANTIATE_NN(float)
EEGGAZE_INSTANTIATE_NN(double)

}  // namespace eeggaze::nn
