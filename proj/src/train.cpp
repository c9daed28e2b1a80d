#include "eeggaze/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "eeggaze/errors.hpp"
#include "eeggaze/eval.hpp"
#include "eeggaze/io.hpp"
#include "json.hpp"

namespace eeggaze {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train batch_size must be >= 1");
  if (!(lr0 > 0.0)) throw ConfigError("train lr0 must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("train decay_factor must lie in (0, 1]");
  if (decay_every < 1) throw ConfigError("train decay_every must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam eps must be positive");
}

std::string TrainConfig::to_json() const {
  json j = {{"epochs", epochs},     {"batch_size", batch_size}, {"lr0", lr0},     {"decay_factor", decay_factor},
            {"decay_every", decay_every}, {"beta1", beta1},     {"beta2", beta2}, {"adam_eps", adam_eps},
            {"seed", seed}};
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig c;
  try {
    const json j = json::parse(text);
    for (const auto& [key, value] : j.items()) {
      if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "lr0") c.lr0 = value.get<double>();
      else if (key == "decay_factor") c.decay_factor = value.get<double>();
      else if (key == "decay_every") c.decay_every = value.get<std::size_t>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "adam_eps") c.adam_eps = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw ConfigError("unknown train config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad train config JSON: ") + e.what());
  }
  return c;
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  if (epoch >= cfg.epochs)
    throw ConfigError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  return cfg.lr0 * std::pow(cfg.decay_factor, static_cast<double>(epoch / cfg.decay_every));
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss shapes differ: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  return mean_all(square(sub(pred, target)));
}

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<double> m, std::span<double> v,
                 std::uint64_t step, double lr, double beta1, double beta2, double eps) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size())
    throw ShapeError("adam_update spans differ in length");
  if (step == 0) throw ConfigError("adam step count is 1-based");
  if (!(lr > 0.0)) throw ConfigError("adam lr must be positive");
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    param[i] = static_cast<T>(static_cast<double>(param[i]) - lr * mhat / (std::sqrt(vhat) + eps));
  }
}

template <typename T>
Adam<T>::Adam(nn::ParamList<T> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    state_.m.emplace_back(p.tensor.numel(), 0.0);
    state_.v.emplace_back(p.tensor.numel(), 0.0);
  }
}

template <typename T>
std::size_t Adam<T>::step(double lr) {
  if (checked_mode()) {
    for (const auto& p : params_) {
      if (!p.tensor.has_grad()) continue;
      for (T g : p.tensor.grad())
        if (!std::isfinite(static_cast<double>(g))) throw NumericError("non-finite gradient in " + p.name);
    }
  }
  ++state_.t;
  std::size_t touched = 0;
  std::vector<T> zeros;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto t = params_[i].tensor;
    std::span<const T> g;
    if (t.has_grad()) {
      g = t.grad();
    } else {
      zeros.assign(t.numel(), T{0});
      g = zeros;
    }
    adam_update<T>(t.values_mut(), g, state_.m[i], state_.v[i], state_.t, lr, beta1_, beta2_, eps_);
    touched += t.numel();
  }
  return touched;
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) {
    auto t = p.tensor;
    t.zero_grad();
  }
}

namespace {
template <typename T>
std::vector<float> flatten(const nn::ParamList<T>& list) {
  std::vector<float> out;
  for (const auto& p : list)
    for (T v : p.tensor.values()) out.push_back(static_cast<float>(v));
  return out;
}

template <typename T>
void unflatten(const std::vector<float>& flat, const nn::ParamList<T>& list, const char* what) {
  std::size_t total = 0;
  for (const auto& p : list) total += p.tensor.numel();
  if (total != flat.size()) {
    throw ShapeMismatchError(std::string("checkpoint holds ") + std::to_string(flat.size()) + " " + what +
                             " but the model has " + std::to_string(total));
  }
  std::size_t k = 0;
  for (const auto& p : list) {
    auto t = p.tensor;
    for (T& v : t.values_mut()) v = static_cast<T>(flat[k++]);
  }
}
}  // namespace

template <typename T>
Checkpoint make_checkpoint(const GazeModel<T>& model, std::uint32_t epoch, double val_rmse) {
  return {model.config(), flatten(model.parameters()), flatten(model.buffers()), epoch, val_rmse, model.rng()};
}

template <typename T>
void restore_checkpoint(GazeModel<T>& model, const Checkpoint& ck) {
  if (!(ck.config == model.config())) throw ConfigError("checkpoint config differs from the model's");
  unflatten(ck.params, model.parameters(), "parameters");
  unflatten(ck.buffers, model.buffers(), "buffer values");
  model.set_rng(ck.rng);
}

template <typename T>
GazeModel<T> model_from_checkpoint(const Checkpoint& ck) {
  auto model = build_model<T>(ck.config, ck.rng);
  restore_checkpoint(model, ck);
  return model;
}

namespace {
constexpr std::string_view kCheckpointMagic = "EGCK";
}

std::string encode_checkpoint(const Checkpoint& ck) {
  io::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  const std::string cfg = ck.config.to_json();
  w.u64(cfg.size());
  w.bytes(cfg);
  w.u64(ck.params.size());
  for (float v : ck.params) w.f32(v);
  w.u64(ck.buffers.size());
  for (float v : ck.buffers) w.f32(v);
  w.u32(ck.epoch);
  w.f64(ck.val_rmse);
  w.u64(ck.rng.seed());
  w.u64(ck.rng.counter());
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& what) {
  io::ByteReader r(bytes, what);
  if (r.remaining() < kCheckpointMagic.size() || r.bytes(kCheckpointMagic.size()) != kCheckpointMagic)
    throw BadMagicError(what + ": bad magic (not an EGCK checkpoint)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionError(what + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  const std::uint64_t cfg_len = r.u64();
  r.need(cfg_len);
  ck.config = ModelConfig::from_json(std::string(r.bytes(cfg_len)));
  auto read_floats = [&](std::vector<float>& out) {
    const std::uint64_t n = r.u64();
    r.need(n * 4);
    out.resize(n);
    for (auto& v : out) v = r.f32();
  };
  read_floats(ck.params);
  read_floats(ck.buffers);
  ck.epoch = r.u32();
  ck.val_rmse = r.f64();
  const std::uint64_t seed = r.u64();
  const std::uint64_t counter = r.u64();
  ck.rng = RngStream(seed, counter);
  if (r.remaining() != 0) throw FormatError(what + ": trailing bytes after checkpoint");
  const std::size_t expected = param_count(ck.config).total;
  if (ck.params.size() != expected) {
    throw ShapeMismatchError(what + ": " + std::to_string(ck.params.size()) + " parameters stored, config needs " +
                             std::to_string(expected));
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,lr,train_mse,val_rmse,seconds\n";
  char line[200];
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.lr, e.train_mse, e.val_rmse,
                  e.seconds);
    out += line;
  }
  return out;
}

TrainHistory TrainHistory::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,lr,train_mse,val_rmse,seconds")
    throw FormatError("history CSV must start with header epoch,lr,train_mse,val_rmse,seconds");
  TrainHistory h;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochRecord e;
    if (std::sscanf(line.c_str(), "%zu,%lg,%lg,%lg,%lg", &e.epoch, &e.lr, &e.train_mse, &e.val_rmse,
                    &e.seconds) != 5)
      throw FormatError("bad history CSV row: " + line);
    h.epochs.push_back(e);
  }
  return h;
}

template <typename T>
TrainResult train(GazeModel<T>& model, const Dataset& train_ds, const Dataset& val_ds, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_ds.size() == 0) throw ShapeError("training set is empty");
  if (val_ds.size() == 0) throw ShapeError("validation set is empty");
  const auto& mc = model.config();
  for (const Dataset* ds : {&train_ds, &val_ds}) {
    if (ds->channels != mc.channels || ds->timepoints != mc.timepoints)
      throw ShapeError("dataset samples are " + std::to_string(ds->channels) + "x" +
                       std::to_string(ds->timepoints) + " but the model expects " + std::to_string(mc.channels) +
                       "x" + std::to_string(mc.timepoints));
  }

  Adam<T> opt(model.parameters(), cfg.beta1, cfg.beta2, cfg.adam_eps);
  const RngStream shuffle_root = RngStream(cfg.seed).fork(0x5f1e);
  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_ds.size());
  PredictionSet val_ps;
  val_ps.truth = gaze_points(val_ds);
  val_ps.pred.resize(val_ds.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(cfg, epoch);
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle = shuffle_root.fork(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    model.set_training(true);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - start);
      std::span<const std::size_t> idx(order.data() + start, b);
      std::vector<T> target(2 * b);
      for (std::size_t k = 0; k < b; ++k) {
        target[2 * k] = static_cast<T>(train_ds.gaze[2 * idx[k]]);
        target[2 * k + 1] = static_cast<T>(train_ds.gaze[2 * idx[k] + 1]);
      }
      opt.zero_grad();
      auto loss = mse_loss(model.forward(make_batch<T>(train_ds, idx)), Tensor<T>(Shape{b, 2}, std::move(target)));
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(b);
      loss.backward();
      opt.step(lr);
    }

    const auto y = predict(model, val_ds, cfg.batch_size);
    for (std::size_t i = 0; i < val_ds.size(); ++i) val_ps.pred[i] = {y[2 * i], y[2 * i + 1]};
    const double val = rmse(val_ps);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EpochRecord rec{epoch, lr, loss_sum / static_cast<double>(order.size()), val, seconds};
    result.history.epochs.push_back(rec);
    if (val < best) {
      best = val;
      result.best = make_checkpoint(model, static_cast<std::uint32_t>(epoch), val);
    }
    if (on_epoch) on_epoch(rec);
  }
  restore_checkpoint(model, result.best);
  model.set_training(false);
  return result;
}

#define EEGGAZE_INSTANTIATE(T)                                                                               \
  template Tensor<T> mse_loss<T>(const Tensor<T>&, const Tensor<T>&);                                        \
  template void adam_update<T>(std::span<T>, std::span<const T>, std::span<double>, std::span<double>,       \
                               std::uint64_t, double, double, double, double);                               \
  template class Adam<T>;                                                                                    \
  template Checkpoint make_checkpoint<T>(const GazeModel<T>&, std::uint32_t, double);                        \
  template void restore_checkpoint<T>(GazeModel<T>&, const Checkpoint&);                                     \
  template GazeModel<T> model_from_checkpoint<T>(const Checkpoint&);                                         \
  template TrainResult train<T>(GazeModel<T>&, const Dataset&, const Dataset&, const TrainConfig&,           \
                                const EpochCallback&);
EEGGAZE_INSTANTIATE(float)
EEGGAZE_INSTANTIATE(double)
#undef EEGGAZE_INSTANTIATE

}  // namespace eeggaze
