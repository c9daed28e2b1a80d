#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "eeggaze/nn.hpp"
#include "eeggaze/permutation.hpp"
#include "eeggaze/rng.hpp"
#include "eeggaze/tensor.hpp"

namespace eeggaze {

/// Architecture hyperparameters. Defaults follow the full-height design with
/// desk-scale transformer depth; see the named factories for other presets.
struct ModelConfig {
  std::size_t channels = 129;
  std::size_t timepoints = 500;
  std::size_t padded_timepoints = 512;
  std::size_t temporal_filters = 256;
  std::size_t temporal_kernel = 16;
  std::size_t temporal_stride = 16;
  std::size_t spatial_kernel_height = 129;
  // Vertical stride of the depth-wise conv; only matters for partial-height kernels.
  std::size_t spatial_stride = 1;
  std::size_t spatial_out = 768;
  std::size_t embed_dim = 768;
  std::size_t vit_depth = 2;
  std::size_t vit_heads = 2;
  std::size_t vit_mlp_dim = 3072;
  std::vector<std::size_t> head_hidden{768, 1000};
  double dropout_p = 0.1;
  double vit_dropout = 0.0;
  std::size_t output_dim = 2;

  /// 12 layers / 12 heads, as in ViT-Base.
  static ModelConfig paper_scale();
  /// Kernel-size comparator: 1x36 temporal kernel and (8,1) spatial patches.
  static ModelConfig eegvit_variant();
  /// Narrow widths (32 filters, 96-wide tokens) for CPU-budget training runs.
  static ModelConfig desk();
  /// "default", "desk", "paper_scale" or "eegvit_variant".
  static ModelConfig preset(const std::string& name);

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  std::size_t temporal_positions() const;
  std::size_t spatial_positions() const;
  std::size_t depthwise_multiplier() const { return spatial_out / temporal_filters; }
  std::size_t pad_before() const { return (padded_timepoints - timepoints) / 2; }
  std::size_t pad_after() const { return padded_timepoints - timepoints - pad_before(); }

  std::string to_json() const;
  /// Keys override the defaults, or the named "preset" when one is given.
  static ModelConfig from_json(const std::string& text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Transformer sequence length before the CLS token is prepended.
std::size_t token_count(const ModelConfig& config);

struct ParamBreakdown {
  std::vector<std::pair<std::string, std::size_t>> layers;
  std::size_t total = 0;

  std::size_t at(const std::string& layer) const;
};

/// Exact trainable-scalar counts (weights and biases) per named layer.
ParamBreakdown param_count(const ModelConfig& config);

/// Shapes observed at each stage of one forward pass.
struct ForwardTrace {
  Shape padded, temporal, spatial, tokens, embedded, cls, output;
};

template <typename T>
class GazeModel {
 public:
  GazeModel(const ModelConfig& config, RngStream rng);

  /// eeg [B,1,channels,timepoints] -> gaze [B,output_dim].
  Tensor<T> forward(const Tensor<T>& eeg, ForwardTrace* trace = nullptr);

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  const ModelConfig& config() const { return config_; }
  /// Trainable tensors in deterministic registry order.
  nn::ParamList<T> parameters() const;
  /// Non-trainable state (batch-norm running statistics).
  nn::ParamList<T> buffers() const;

  RngStream& rng() { return rng_; }
  const RngStream& rng() const { return rng_; }
  void set_rng(const RngStream& rng) { rng_ = rng; }

  /// Independent copy of every parameter and buffer.
  GazeModel clone() const;
  void copy_state_from(const GazeModel& other);

  nn::Linear<T>& head(std::size_t i) { return head_[i]; }
  nn::BatchNorm2d<T>& batchnorm() { return batchnorm_; }
  std::vector<nn::TransformerBlock<T>>& blocks() { return blocks_; }
  nn::EmbeddingBlock<T>& embedding() { return embedding_; }
  Tensor<T>& conv_temporal_weight() { return conv_temporal_w_; }
  Tensor<T>& conv_spatial_weight() { return conv_spatial_w_; }
  Tensor<T>& conv_spatial_bias() { return conv_spatial_b_; }

 private:
  ModelConfig config_;
  RngStream rng_;
  bool training_ = true;
  Tensor<T> conv_temporal_w_, conv_temporal_b_;
  nn::BatchNorm2d<T> batchnorm_;
  Tensor<T> conv_spatial_w_, conv_spatial_b_;
  nn::EmbeddingBlock<T> embedding_;
  std::vector<nn::TransformerBlock<T>> blocks_;
  nn::LayerNorm<T> final_norm_;
  std::vector<nn::Linear<T>> head_;
};

template <typename T>
GazeModel<T> build_model(const ModelConfig& config, RngStream rng) {
  config.validate();
  return GazeModel<T>(config, rng);
}

/// Copy of `model` whose spatial kernel rows are reordered so that feeding it
/// channel-permuted data reproduces the original model on unpermuted data.
/// Refuses partial-height spatial kernels, where no such reordering exists.
template <typename T>
GazeModel<T> apply_channel_permutation_to_weights(const GazeModel<T>& model,
                                                  const ChannelPermutation& perm);

}  // namespace eeggaze
