#include "eeggaze/model.hpp"

#include <algorithm>

#include "json.hpp"

namespace eeggaze {

using json = nlohmann::json;

ModelConfig ModelConfig::paper_scale() {
  ModelConfig c;
  c.vit_depth = 12;
  c.vit_heads = 12;
  return c;
}

ModelConfig ModelConfig::eegvit_variant() {
  ModelConfig c;
  c.temporal_kernel = 36;
  c.temporal_stride = 36;
  c.padded_timepoints = 504;
  c.spatial_kernel_height = 8;
  c.spatial_stride = 8;
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "default") return ModelConfig{};
  if (name == "desk") return desk();
  if (name == "paper_scale") return paper_scale();
  if (name == "eegvit_variant") return eegvit_variant();
  throw ConfigError("unknown model preset '" + name + "' (default, desk, paper_scale, eegvit_variant)");
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.temporal_filters = 32;
  c.spatial_out = 96;
  c.embed_dim = 96;
  c.vit_mlp_dim = 4 * 96;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid model config: " + what); };
  if (channels == 0 || timepoints == 0) fail("channels and timepoints must be positive");
  if (padded_timepoints < timepoints) fail("padded_timepoints must be >= timepoints");
  if (temporal_filters == 0 || temporal_kernel == 0 || temporal_stride == 0)
    fail("temporal filters, kernel and stride must be positive");
  if (temporal_kernel > padded_timepoints) fail("temporal_kernel must not exceed padded_timepoints");
  if (spatial_kernel_height == 0 || spatial_kernel_height > channels)
    fail("spatial_kernel_height must lie in [1, channels]");
  if (spatial_stride == 0) fail("spatial_stride must be positive");
  if (spatial_out == 0 || spatial_out % temporal_filters != 0)
    fail("spatial_out must be divisible by temporal_filters (integral depth-wise multiplier)");
  if (embed_dim != spatial_out) fail("embed_dim must equal spatial_out");
  if (vit_heads == 0 || embed_dim % vit_heads != 0) fail("embed_dim must be divisible by vit_heads");
  if (vit_mlp_dim == 0) fail("vit_mlp_dim must be positive");
  if (head_hidden.empty() || std::find(head_hidden.begin(), head_hidden.end(), 0u) != head_hidden.end())
    fail("head_hidden must list positive widths");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) fail("dropout_p must lie in [0, 1)");
  if (!(vit_dropout >= 0.0 && vit_dropout < 1.0)) fail("vit_dropout must lie in [0, 1)");
  if (output_dim == 0) fail("output_dim must be positive");
}

std::size_t ModelConfig::temporal_positions() const {
  return (padded_timepoints - temporal_kernel) / temporal_stride + 1;
}

std::size_t ModelConfig::spatial_positions() const {
  return (channels - spatial_kernel_height) / spatial_stride + 1;
}

std::size_t token_count(const ModelConfig& config) {
  return config.temporal_positions() * config.spatial_positions();
}

std::string ModelConfig::to_json() const {
  json j = {{"channels", channels},
            {"timepoints", timepoints},
            {"padded_timepoints", padded_timepoints},
            {"temporal_filters", temporal_filters},
            {"temporal_kernel", temporal_kernel},
            {"temporal_stride", temporal_stride},
            {"spatial_kernel_height", spatial_kernel_height},
            {"spatial_stride", spatial_stride},
            {"spatial_out", spatial_out},
            {"embed_dim", embed_dim},
            {"vit_depth", vit_depth},
            {"vit_heads", vit_heads},
            {"vit_mlp_dim", vit_mlp_dim},
            {"head_hidden", head_hidden},
            {"dropout_p", dropout_p},
            {"vit_dropout", vit_dropout},
            {"output_dim", output_dim}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  try {
    if (j.contains("preset")) c = preset(j.at("preset").get<std::string>());
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "preset") continue;
      if (k == "channels") c.channels = v.get<std::size_t>();
      else if (k == "timepoints") c.timepoints = v.get<std::size_t>();
      else if (k == "padded_timepoints") c.padded_timepoints = v.get<std::size_t>();
      else if (k == "temporal_filters") c.temporal_filters = v.get<std::size_t>();
      else if (k == "temporal_kernel") c.temporal_kernel = v.get<std::size_t>();
      else if (k == "temporal_stride") c.temporal_stride = v.get<std::size_t>();
      else if (k == "spatial_kernel_height") c.spatial_kernel_height = v.get<std::size_t>();
      else if (k == "spatial_stride") c.spatial_stride = v.get<std::size_t>();
      else if (k == "spatial_out") c.spatial_out = v.get<std::size_t>();
      else if (k == "embed_dim") c.embed_dim = v.get<std::size_t>();
      else if (k == "vit_depth") c.vit_depth = v.get<std::size_t>();
      else if (k == "vit_heads") c.vit_heads = v.get<std::size_t>();
      else if (k == "vit_mlp_dim") c.vit_mlp_dim = v.get<std::size_t>();
      else if (k == "head_hidden") c.head_hidden = v.get<std::vector<std::size_t>>();
      else if (k == "dropout_p") c.dropout_p = v.get<double>();
      else if (k == "vit_dropout") c.vit_dropout = v.get<double>();
      else if (k == "output_dim") c.output_dim = v.get<std::size_t>();
      else throw ConfigError("unknown model config key '" + k + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config field has wrong type: ") + e.what());
  }
  return c;
}

std::size_t ParamBreakdown::at(const std::string& layer) const {
  for (const auto& [name, n] : layers)
    if (name == layer) return n;
  throw ConfigError("no layer named " + layer);
}

ParamBreakdown param_count(const ModelConfig& c) {
  ParamBreakdown p;
  auto add = [&](std::string name, std::size_t n) {
    p.layers.emplace_back(std::move(name), n);
    p.total += n;
  };
  const std::size_t d = c.embed_dim;
  add("conv_temporal", c.temporal_filters * c.temporal_kernel + c.temporal_filters);
  add("batchnorm", 2 * c.temporal_filters);
  add("conv_spatial", c.spatial_out * c.spatial_kernel_height + c.spatial_out);
  add("embedding", d + (token_count(c) + 1) * d);
  for (std::size_t i = 0; i < c.vit_depth; ++i) {
    const std::size_t block = 2 * d + 4 * (d * d + d) + 2 * d + (d * c.vit_mlp_dim + c.vit_mlp_dim) +
                              (c.vit_mlp_dim * d + d);
    add("block" + std::to_string(i), block);
  }
  add("final_norm", 2 * d);
  std::size_t in = d;
  for (std::size_t i = 0; i < c.head_hidden.size(); ++i) {
    add("head" + std::to_string(i), in * c.head_hidden[i] + c.head_hidden[i]);
    in = c.head_hidden[i];
  }
  add("head" + std::to_string(c.head_hidden.size()), in * c.output_dim + c.output_dim);
  return p;
}

template <typename T>
GazeModel<T>::GazeModel(const ModelConfig& config, RngStream rng) : config_(config), rng_(rng) {
  config_.validate();
  // Initialization draws from a dedicated fork so the dropout stream starts
  // from the caller's seed untouched.
  RngStream init = rng.fork(0x1d1);
  const auto& c = config_;
  conv_temporal_w_ = nn::parameter<T>({c.temporal_filters, 1, 1, c.temporal_kernel});
  nn::init_fan_in_uniform(conv_temporal_w_, init, c.temporal_kernel);
  conv_temporal_b_ = nn::parameter<T>({c.temporal_filters});
  batchnorm_ = nn::BatchNorm2d<T>(c.temporal_filters);
  conv_spatial_w_ = nn::parameter<T>({c.spatial_out, 1, c.spatial_kernel_height, 1});
  nn::init_fan_in_uniform(conv_spatial_w_, init, c.spatial_kernel_height);
  conv_spatial_b_ = nn::parameter<T>({c.spatial_out});
  embedding_ = nn::EmbeddingBlock<T>(token_count(c), c.embed_dim, init);
  for (std::size_t i = 0; i < c.vit_depth; ++i)
    blocks_.emplace_back(c.embed_dim, c.vit_heads, c.vit_mlp_dim, c.vit_dropout, init);
  final_norm_ = nn::LayerNorm<T>(c.embed_dim);
  std::size_t in = c.embed_dim;
  for (std::size_t width : c.head_hidden) {
    head_.emplace_back(in, width, init);
    in = width;
  }
  head_.emplace_back(in, c.output_dim, init);
}

template <typename T>
Tensor<T> GazeModel<T>::forward(const Tensor<T>& eeg, ForwardTrace* trace) {
  const auto& c = config_;
  if (eeg.rank() != 4 || eeg.shape()[1] != 1 || eeg.shape()[2] != c.channels ||
      eeg.shape()[3] != c.timepoints) {
    throw ShapeError("model expects input [B,1," + std::to_string(c.channels) + "," +
                     std::to_string(c.timepoints) + "], got " + shape_str(eeg.shape()));
  }
  const std::size_t b = eeg.shape()[0];
  auto x = pad_zero(eeg, 3, c.pad_before(), c.pad_after());
  if (trace) trace->padded = x.shape();
  x = conv2d(x, conv_temporal_w_, conv_temporal_b_, Conv2dOptions{{1, c.temporal_stride}, {0, 0}, 1});
  if (trace) trace->temporal = x.shape();
  x = batchnorm_.forward(x, training_);
  x = conv2d(x, conv_spatial_w_, conv_spatial_b_,
             Conv2dOptions{{c.spatial_stride, 1}, {0, 0}, c.temporal_filters});
  if (trace) trace->spatial = x.shape();
  // [B, S, Hs, W] -> tokens [B, Hs*W, S]: every conv output column is one token.
  const std::size_t tokens = x.shape()[2] * x.shape()[3];
  x = reshape(permute(x, {0, 2, 3, 1}), Shape{b, tokens, c.embed_dim});
  if (trace) trace->tokens = x.shape();
  x = embedding_.forward(x);
  if (trace) trace->embedded = x.shape();
  for (const auto& block : blocks_) x = block.forward(x, training_, rng_);
  x = final_norm_.forward(x);
  x = reshape(slice(x, 1, 0, 1), Shape{b, c.embed_dim});
  if (trace) trace->cls = x.shape();
  for (std::size_t i = 0; i < head_.size(); ++i) {
    x = head_[i].forward(x);
    if (i + 2 == head_.size()) x = dropout(x, c.dropout_p, training_, rng_);
  }
  if (trace) trace->output = x.shape();
  return x;
}

template <typename T>
nn::ParamList<T> GazeModel<T>::parameters() const {
  nn::ParamList<T> out;
  out.push_back({"conv_temporal.weight", conv_temporal_w_});
  out.push_back({"conv_temporal.bias", conv_temporal_b_});
  batchnorm_.collect("batchnorm", out);
  out.push_back({"conv_spatial.weight", conv_spatial_w_});
  out.push_back({"conv_spatial.bias", conv_spatial_b_});
  embedding_.collect("embedding", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect("block" + std::to_string(i), out);
  final_norm_.collect("final_norm", out);
  for (std::size_t i = 0; i < head_.size(); ++i) head_[i].collect("head" + std::to_string(i), out);
  return out;
}

template <typename T>
nn::ParamList<T> GazeModel<T>::buffers() const {
  nn::ParamList<T> out;
  batchnorm_.collect_buffers("batchnorm", out);
  return out;
}

template <typename T>
void GazeModel<T>::copy_state_from(const GazeModel& other) {
  if (!(other.config_ == config_)) throw ConfigError("copy_state_from: model configs differ");
  auto copy_list = [](const nn::ParamList<T>& src, const nn::ParamList<T>& dst) {
    for (std::size_t i = 0; i < src.size(); ++i) {
      auto to = dst[i].tensor;
      std::copy(src[i].tensor.values().begin(), src[i].tensor.values().end(), to.values_mut().begin());
    }
  };
  copy_list(other.parameters(), parameters());
  copy_list(other.buffers(), buffers());
  rng_ = other.rng_;
  training_ = other.training_;
}

template <typename T>
GazeModel<T> GazeModel<T>::clone() const {
  GazeModel copy(config_, rng_);
  copy.copy_state_from(*this);
  return copy;
}

template <typename T>
GazeModel<T> apply_channel_permutation_to_weights(const GazeModel<T>& model, const ChannelPermutation& perm) {
  const auto& c = model.config();
  if (c.spatial_kernel_height != c.channels) {
    throw ConfigError("channel permutation of weights requires a full-height spatial kernel (" +
                      std::to_string(c.spatial_kernel_height) + " < " + std::to_string(c.channels) + ")");
  }
  perm.validate(c.channels);
  GazeModel<T> out = model.clone();
  auto& w = out.conv_spatial_weight();
  const auto src = model.parameters();
  std::span<const T> old_w;
  for (const auto& p : src)
    if (p.name == "conv_spatial.weight") old_w = p.tensor.values();
  auto dst = w.values_mut();
  const std::size_t h = c.channels;
  for (std::size_t s = 0; s < c.spatial_out; ++s)
    for (std::size_t i = 0; i < h; ++i) dst[s * h + i] = old_w[s * h + perm.mapping[i]];
  return out;
}

template class GazeModel<float>;
template class GazeModel<double>;
template GazeModel<float> apply_channel_permutation_to_weights(const GazeModel<float>&,
                                                               const ChannelPermutation&);
template GazeModel<double> apply_channel_permutation_to_weights(const GazeModel<double>&,
                                                                const ChannelPermutation&);

}  // namespace eeggaze
