#include "eeggaze/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "eeggaze/errors.hpp"
#include "eeggaze/io.hpp"
#include "eeggaze/rng.hpp"
#include "json.hpp"

namespace eeggaze {

namespace {
constexpr std::string_view kDatasetMagic = "EEGZ";
}

void Dataset::validate() const {
  const std::size_t n = participant.size();
  if (channels == 0 || timepoints == 0) throw ShapeError("dataset channels and timepoints must be positive");
  if (eeg.size() != n * channels * timepoints) {
    throw ShapeError("dataset eeg holds " + std::to_string(eeg.size()) + " values, expected " +
                     std::to_string(n * channels * timepoints));
  }
  if (gaze.size() != 2 * n) {
    throw ShapeError("dataset gaze holds " + std::to_string(gaze.size()) + " values, expected " +
                     std::to_string(2 * n));
  }
  for (float g : gaze) {
    if (!std::isfinite(g)) throw ShapeError("dataset gaze contains a non-finite value");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.channels = channels;
  out.timepoints = timepoints;
  const std::size_t stride = channels * timepoints;
  out.eeg.reserve(indices.size() * stride);
  for (std::size_t i : indices) {
    if (i >= size()) throw ShapeError("subset index " + std::to_string(i) + " out of range");
    auto s = sample(i);
    out.eeg.insert(out.eeg.end(), s.begin(), s.end());
    out.gaze.push_back(gaze[2 * i]);
    out.gaze.push_back(gaze[2 * i + 1]);
    out.participant.push_back(participant[i]);
  }
  return out;
}

std::string encode_dataset(const Dataset& ds) {
  ds.validate();
  io::ByteWriter w;
  w.bytes(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u64(ds.size());
  w.u32(static_cast<std::uint32_t>(ds.channels));
  w.u32(static_cast<std::uint32_t>(ds.timepoints));
  for (float v : ds.eeg) w.f32(v);
  for (float v : ds.gaze) w.f32(v);
  for (std::uint32_t p : ds.participant) w.u32(p);
  return w.take();
}

Dataset decode_dataset(std::string_view bytes, std::optional<DatasetExpectation> expect,
                       const std::string& what) {
  io::ByteReader r(bytes, what);
  if (r.remaining() < kDatasetMagic.size() || r.bytes(kDatasetMagic.size()) != kDatasetMagic) {
    throw BadMagicError(what + ": bad magic (not an EEGZ dataset)");
  }
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw VersionError(what + ": unsupported dataset version " + std::to_string(version) + " (expected " +
                       std::to_string(kDatasetVersion) + ")");
  }
  const std::uint64_t n = r.u64();
  Dataset ds;
  ds.channels = r.u32();
  ds.timepoints = r.u32();
  if (expect && (ds.channels != expect->channels || ds.timepoints != expect->timepoints)) {
    throw ShapeMismatchError(what + ": header shape " + std::to_string(ds.channels) + "x" +
                             std::to_string(ds.timepoints) + " differs from expected " +
                             std::to_string(expect->channels) + "x" + std::to_string(expect->timepoints));
  }
  const std::uint64_t eeg_n = n * ds.channels * ds.timepoints;
  const std::uint64_t payload = eeg_n * 4 + n * 2 * 4 + n * 4;
  r.need(payload);
  if (r.remaining() != payload) {
    throw FormatError(what + ": " + std::to_string(r.remaining() - payload) + " trailing bytes after payload");
  }
  ds.eeg.resize(eeg_n);
  for (auto& v : ds.eeg) v = r.f32();
  ds.gaze.resize(2 * n);
  for (auto& v : ds.gaze) v = r.f32();
  ds.participant.resize(n);
  for (auto& p : ds.participant) p = r.u32();
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_dataset(ds));
}

Dataset load_dataset(const std::filesystem::path& path, std::optional<DatasetExpectation> expect) {
  return decode_dataset(io::read_file(path), expect, path.string());
}

Dataset import_array_directory(const std::filesystem::path& dir) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(io::read_file(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("meta.json is not valid JSON: " + std::string(e.what()));
  }
  Dataset ds;
  std::size_t n = 0;
  try {
    n = meta.at("n").get<std::size_t>();
    ds.channels = meta.at("channels").get<std::size_t>();
    ds.timepoints = meta.at("timepoints").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("meta.json needs integer n, channels, timepoints: " + std::string(e.what()));
  }
  auto read_array = [&](const char* name, std::size_t count) {
    const std::string raw = io::read_file(dir / name);
    if (raw.size() != count * 4) {
      if (raw.size() < count * 4) throw TruncatedError(std::string(name) + ": truncated array");
      throw FormatError(std::string(name) + ": array longer than meta.json declares");
    }
    return raw;
  };
  const std::string eeg = read_array("eeg.f32", n * ds.channels * ds.timepoints);
  const std::string gaze = read_array("gaze.f32", n * 2);
  const std::string part = read_array("participant.u32", n);
  io::ByteReader re(eeg, "eeg.f32"), rg(gaze, "gaze.f32"), rp(part, "participant.u32");
  ds.eeg.resize(n * ds.channels * ds.timepoints);
  for (auto& v : ds.eeg) v = re.f32();
  ds.gaze.resize(2 * n);
  for (auto& v : ds.gaze) v = rg.f32();
  ds.participant.resize(n);
  for (auto& p : ds.participant) p = rp.u32();
  ds.validate();
  return ds;
}

void SplitSpec::validate() const {
  if (!(train > 0 && val > 0 && test > 0)) throw ConfigError("split ratios must be positive");
  if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

SplitIndices split_by_participant(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  std::vector<std::uint32_t> ids(ds.participant.begin(), ds.participant.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 3) {
    throw ConfigError("participant split needs at least 3 distinct participants, got " +
                      std::to_string(ids.size()));
  }
  RngStream rng(spec.seed);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);

  std::vector<std::size_t> counts_by_id;
  std::vector<std::uint32_t> sorted_ids(ids);
  std::sort(sorted_ids.begin(), sorted_ids.end());
  counts_by_id.assign(sorted_ids.size(), 0);
  auto slot = [&](std::uint32_t id) {
    return static_cast<std::size_t>(std::lower_bound(sorted_ids.begin(), sorted_ids.end(), id) - sorted_ids.begin());
  };
  for (std::uint32_t p : ds.participant) ++counts_by_id[slot(p)];

  const double n = static_cast<double>(ds.size());
  // 0 = test, 1 = val, 2 = train, indexed by slot().
  std::vector<int> assignment(sorted_ids.size(), 2);
  std::size_t next = 0;
  auto fill = [&](int which, double ratio, std::size_t keep_back) {
    std::size_t taken = 0;
    do {
      assignment[slot(ids[next])] = which;
      taken += counts_by_id[slot(ids[next])];
      ++next;
    } while (static_cast<double>(taken) / n < ratio && ids.size() - next > keep_back);
  };
  fill(0, spec.test, 2);
  fill(1, spec.val, 1);

  SplitIndices out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    switch (assignment[slot(ds.participant[i])]) {
      case 0: out.test.push_back(i); break;
      case 1: out.val.push_back(i); break;
      default: out.train.push_back(i); break;
    }
  }
  return out;
}

Dataset apply_permutation(const Dataset& ds, const ChannelPermutation& perm) {
  perm.validate(ds.channels);
  Dataset out = ds;
  const std::size_t t = ds.timepoints;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const float* src = ds.eeg.data() + i * ds.channels * t;
    float* dst = out.eeg.data() + i * ds.channels * t;
    for (std::size_t c = 0; c < ds.channels; ++c)
      std::copy(src + perm.mapping[c] * t, src + (perm.mapping[c] + 1) * t, dst + c * t);
  }
  return out;
}

ChannelPermutation builtin_permutation(const std::string& kind, std::size_t channels) {
  if (kind == "identity") return ChannelPermutation::identity(channels);
  if (kind == "reverse") return ChannelPermutation::reverse(channels);
  if (kind.rfind("shuffle:", 0) == 0) {
    try {
      return ChannelPermutation::shuffle(channels, std::stoull(kind.substr(8)));
    } catch (const std::logic_error&) {
      throw ConfigError("shuffle permutation needs an integer seed: " + kind);
    }
  }
  if (kind.rfind("file:", 0) == 0) return ChannelPermutation::from_file(kind.substr(5), channels);
  throw ConfigError("unknown permutation kind '" + kind + "'");
}

void SyntheticConfig::validate() const {
  if (n_samples == 0) throw ConfigError("synthetic n_samples must be positive");
  if (n_participants == 0) throw ConfigError("synthetic n_participants must be positive");
  if (channels == 0 || timepoints == 0) throw ConfigError("synthetic channels/timepoints must be positive");
  if (grid_cols == 0 || grid_rows == 0) throw ConfigError("synthetic grid must be non-empty");
  if (!(screen.x_max > screen.x_min && screen.y_max > screen.y_min))
    throw ConfigError("synthetic screen rectangle is empty");
  if (!(snr > 0)) throw ConfigError("synthetic snr must be positive");
  if (!(sample_rate > 0)) throw ConfigError("synthetic sample_rate must be positive");
  const auto sig = resolved_signal_channels();
  if (sig.empty()) throw ConfigError("synthetic signal_channels must be non-empty");
  std::set<std::size_t> seen;
  for (std::size_t c : sig) {
    if (c >= channels) throw ConfigError("signal channel " + std::to_string(c) + " out of range");
    if (!seen.insert(c).second) throw ConfigError("signal channel " + std::to_string(c) + " repeated");
  }
}

std::vector<std::size_t> SyntheticConfig::resolved_signal_channels() const {
  if (!signal_channels.empty()) return signal_channels;
  const std::size_t k = std::min<std::size_t>(16, channels);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(i * channels / k);
  return out;
}

std::vector<std::pair<double, double>> SyntheticConfig::grid() const {
  std::vector<std::pair<double, double>> g;
  auto pos = [](double lo, double hi, std::size_t i, std::size_t n) {
    return n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  for (std::size_t r = 0; r < grid_rows; ++r)
    for (std::size_t c = 0; c < grid_cols; ++c)
      g.emplace_back(pos(screen.x_min, screen.x_max, c, grid_cols), pos(screen.y_min, screen.y_max, r, grid_rows));
  return g;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const auto grid = cfg.grid();
  const auto signal = cfg.resolved_signal_channels();
  const std::size_t k = signal.size();
  const double sigma = std::isinf(cfg.snr) ? 0.0 : cfg.amplitude / cfg.snr;
  const double two_pi = 2.0 * std::numbers::pi;

  // Per signal channel: mixing angle, modulation frequency (1-3 Hz), phase.
  std::vector<double> mix_cos(k), mix_sin(k), freq(k), phase(k);
  std::vector<long> signal_slot(cfg.channels, -1);
  for (std::size_t j = 0; j < k; ++j) {
    const double theta = std::numbers::pi * static_cast<double>(j) / static_cast<double>(k) + std::numbers::pi / 8;
    mix_cos[j] = std::cos(theta);
    mix_sin[j] = std::sin(theta);
    freq[j] = 1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(k);
    phase[j] = two_pi * static_cast<double>(j) / static_cast<double>(k);
    signal_slot[signal[j]] = static_cast<long>(j);
  }

  Dataset ds;
  ds.channels = cfg.channels;
  ds.timepoints = cfg.timepoints;
  const std::size_t stride = cfg.channels * cfg.timepoints;
  ds.eeg.assign(cfg.n_samples * stride, 0.0f);
  ds.gaze.resize(2 * cfg.n_samples);
  ds.participant.resize(cfg.n_samples);
  const RngStream root(cfg.seed);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    RngStream rng = root.fork(i);
    const auto [gx, gy] = grid[rng.below(grid.size())];
    ds.gaze[2 * i] = static_cast<float>(gx);
    ds.gaze[2 * i + 1] = static_cast<float>(gy);
    ds.participant[i] = static_cast<std::uint32_t>(i % cfg.n_participants);
    const double xn = 2.0 * (gx - cfg.screen.x_min) / (cfg.screen.x_max - cfg.screen.x_min) - 1.0;
    const double yn = 2.0 * (gy - cfg.screen.y_min) / (cfg.screen.y_max - cfg.screen.y_min) - 1.0;
    float* out = ds.eeg.data() + i * stride;
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      const long j = signal_slot[c];
      const double coeff = j < 0 ? 0.0 : cfg.amplitude * (mix_cos[j] * xn + mix_sin[j] * yn);
      for (std::size_t t = 0; t < cfg.timepoints; ++t) {
        double v = sigma > 0.0 ? sigma * rng.normal() : 0.0;
        if (j >= 0) {
          const double time = static_cast<double>(t) / cfg.sample_rate;
          v += coeff * (1.0 + 0.5 * std::sin(two_pi * freq[j] * time + phase[j]));
        }
        out[c * cfg.timepoints + t] = static_cast<float>(v);
      }
    }
  }
  return ds;
}

}  // namespace eeggaze
