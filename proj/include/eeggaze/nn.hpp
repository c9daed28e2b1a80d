#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "eeggaze/ops.hpp"
#include "eeggaze/rng.hpp"
#include "eeggaze/tensor.hpp"

namespace eeggaze::nn {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedTensor<T>>;

template <typename T>
void init_truncated_normal(Tensor<T>& t, RngStream& rng, double std = 0.02);
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void init_fan_in_uniform(Tensor<T>& t, RngStream& rng, std::size_t fan_in);

/// Trainable leaf of the given shape filled with `value`.
template <typename T>
Tensor<T> parameter(Shape shape, T value = T{0});

template <typename T>
struct Linear {
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, RngStream& rng);

  std::size_t in_features() const { return weight.shape()[1]; }
  std::size_t out_features() const { return weight.shape()[0]; }
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// Per-channel normalization over (B, H, W). Training mode uses batch
/// statistics (biased variance) and folds them into the running estimates
/// (unbiased variance); eval mode uses the running estimates.
template <typename T>
struct BatchNorm2d {
  Tensor<T> gamma, beta;
  Tensor<T> running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels, double momentum = 0.1, double eps = 1e-5);

  Tensor<T> forward(const Tensor<T>& x, bool training);
  void collect(const std::string& prefix, ParamList<T>& out) const;
  void collect_buffers(const std::string& prefix, ParamList<T>& out) const;
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma, beta;
  double eps = 1e-6;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim, double eps = 1e-6);

  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <typename T>
struct MultiHeadAttention {
  std::size_t heads = 1;
  std::size_t head_dim = 1;
  Linear<T> query, key, value, output;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t embed_dim, std::size_t heads, RngStream& rng);

  std::size_t embed_dim() const { return heads * head_dim; }
  /// tokens [B,T,d] -> [B,T,d]. When `weights` is given it receives the
  /// attention matrix [B*heads, T, T].
  Tensor<T> forward(const Tensor<T>& tokens, Tensor<T>* weights = nullptr) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// Pre-norm encoder block: x + Attn(LN(x)), then + MLP(LN(.)).
template <typename T>
struct TransformerBlock {
  LayerNorm<T> norm1;
  MultiHeadAttention<T> attention;
  LayerNorm<T> norm2;
  Linear<T> mlp_in, mlp_out;
  double dropout_p = 0.0;

  TransformerBlock() = default;
  TransformerBlock(std::size_t embed_dim, std::size_t heads, std::size_t mlp_dim, double dropout_p,
                   RngStream& rng);

  Tensor<T> forward(const Tensor<T>& tokens, bool training, RngStream& rng) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

/// Learned CLS token and position table for `tokens` patches.
template <typename T>
struct EmbeddingBlock {
  Tensor<T> cls_token;            // [1, d]
  Tensor<T> position_embeddings;  // [tokens + 1, d]

  EmbeddingBlock() = default;
  EmbeddingBlock(std::size_t tokens, std::size_t embed_dim, RngStream& rng);

  /// patches [B,T,d] -> [B,T+1,d] with CLS first.
  Tensor<T> forward(const Tensor<T>& patches) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

}  // namespace eeggaze::nn
