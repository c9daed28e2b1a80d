// eeggaze command-line tool. Exit codes: 0 ok, 1 invalid input, 2 runtime failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"
#include "eeggaze/bench.hpp"
#include "eeggaze/errors.hpp"
#include "eeggaze/gradsuite.hpp"
#include "eeggaze/io.hpp"

namespace fs = std::filesystem;
using namespace eeggaze;

namespace {

void progress(const std::string& line) { std::cerr << line << '\n'; }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

RunSpec read_spec(const std::string& path) { return RunSpec::from_json(io::read_file(path)); }

// Command-line data and seed flags take precedence over the run config.
void override_source(RunSpec& spec, const std::string& data, const std::string& perm) {
  if (!data.empty()) {
    spec.data.path = data;
    spec.data.synthetic.reset();
  }
  if (!perm.empty()) spec.data.permutation = perm;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Keep large activation buffers in the heap instead of fresh mmaps per batch.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
  CLI::App app{"EEG gaze regression: data, training, evaluation and ablations"};
  app.require_subcommand(1);
  std::function<void()> action;

  // synth
  auto* synth = app.add_subcommand("synth", "Generate planted-signal synthetic data");
  SyntheticConfig sc;
  std::string synth_out, synth_config;
  std::optional<double> synth_snr;
  synth->add_option("--config", synth_config, "Synthetic config JSON (flags override it)");
  synth->add_option("--n", sc.n_samples, "Number of samples");
  synth->add_option("--participants", sc.n_participants, "Number of participants");
  synth->add_option("--channels", sc.channels, "EEG channels");
  synth->add_option("--timepoints", sc.timepoints, "Samples per window");
  synth->add_option("--snr", synth_snr, "Signal-to-noise ratio");
  synth->add_option("--seed", sc.seed, "Generator seed");
  synth->add_option("--out", synth_out, "Output dataset file")->required();
  synth->callback([&] {
    action = [&] {
      SyntheticConfig c = sc;
      if (!synth_config.empty()) {
        c = synthetic_from_json(io::read_file(synth_config));
        for (const auto* o : synth->get_options()) {
          if (o->count() == 0) continue;
          const auto& n = o->get_name();
          if (n == "--n") c.n_samples = sc.n_samples;
          else if (n == "--participants") c.n_participants = sc.n_participants;
          else if (n == "--channels") c.channels = sc.channels;
          else if (n == "--timepoints") c.timepoints = sc.timepoints;
          else if (n == "--seed") c.seed = sc.seed;
        }
      }
      if (synth_snr) c.snr = *synth_snr;
      c.validate();
      const auto ds = generate_synthetic(c);
      save_dataset(ds, synth_out);
      std::cout << "wrote " << ds.size() << " samples (" << ds.channels << "x" << ds.timepoints << ") to "
                << synth_out << '\n';
    };
  });

  // convert
  auto* convert = app.add_subcommand("convert", "Pack a directory of raw arrays into a dataset file");
  std::string conv_in, conv_out;
  convert->add_option("--from-dir", conv_in, "Directory with meta.json, eeg.f32, gaze.f32, participant.u32")
      ->required();
  convert->add_option("--out", conv_out, "Output dataset file")->required();
  convert->callback([&] {
    action = [&] {
      const auto ds = import_array_directory(conv_in);
      save_dataset(ds, conv_out);
      std::cout << "wrote " << ds.size() << " samples to " << conv_out << '\n';
    };
  });

  // split
  auto* split = app.add_subcommand("split", "Participant-wise train/val/test split");
  std::string split_data, split_out;
  SplitSpec ss;
  std::vector<double> ratios;
  split->add_option("--data", split_data, "Dataset file")->required();
  split->add_option("--seed", ss.seed, "Shuffle seed");
  split->add_option("--ratios", ratios, "train,val,test")->delimiter(',')->expected(3);
  split->add_option("--out", split_out, "Output directory")->required();
  split->callback([&] {
    action = [&] {
      SplitSpec s = ss;
      if (!ratios.empty()) s.train = ratios[0], s.val = ratios[1], s.test = ratios[2];
      s.validate();
      const auto ds = load_dataset(split_data);
      const auto idx = split_by_participant(ds, s);
      ensure_dir(split_out);
      const fs::path dir = split_out;
      save_dataset(ds.subset(idx.train), dir / "train.eegz");
      save_dataset(ds.subset(idx.val), dir / "val.eegz");
      save_dataset(ds.subset(idx.test), dir / "test.eegz");
      nlohmann::json j{{"train", idx.train}, {"val", idx.val}, {"test", idx.test}, {"seed", s.seed},
                       {"digest", split_digest(idx)}};
      io::write_file_atomic(dir / "split.json", j.dump(2) + "\n");
      std::cout << "train " << idx.train.size() << ", val " << idx.val.size() << ", test " << idx.test.size()
                << " samples\n";
    };
  });

  // train
  auto* trn = app.add_subcommand("train", "Train one model and keep the best-validation checkpoint");
  std::string tr_data, tr_config, tr_out, tr_perm;
  std::optional<std::uint64_t> tr_seed;
  trn->add_option("--data", tr_data, "Dataset file (overrides the config's data section)");
  trn->add_option("--config", tr_config, "Run config JSON")->required();
  trn->add_option("--seed", tr_seed, "Model and shuffle seed (default: first seed in the config)");
  trn->add_option("--permutation", tr_perm, "Channel permutation");
  trn->add_option("--out", tr_out, "Output directory")->required();
  trn->callback([&] {
    action = [&] {
      RunSpec spec = read_spec(tr_config);
      override_source(spec, tr_data, tr_perm);
      spec.seeds = {tr_seed ? *tr_seed : spec.seeds.empty() ? 1 : spec.seeds.front()};
      spec.validate();
      const auto ds = load_source(spec.data);
      auto res = run_experiment(spec, ds, progress);
      ensure_dir(tr_out);
      const fs::path dir = tr_out;
      const auto& a = res.artifacts.front();
      save_checkpoint(a.checkpoint, dir / "best.egck");
      io::write_file_atomic(dir / "history.csv", a.history.to_csv());
      io::write_file_atomic(dir / "test_predictions.csv", prediction_csv(a.predictions));
      io::write_file_atomic(dir / "report.json", res.report.to_json());
      const auto& r = res.report.runs.front();
      std::cout << "best epoch " << r.best_epoch << " val_rmse " << fmt(r.best_val_rmse) << "; test rmse "
                << fmt(r.test.rmse) << " med " << fmt(r.test.med) << " (naive mean rmse "
                << fmt(res.report.naive_mean.rmse) << ")\n";
    };
  });

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string ev_ck, ev_data, ev_out, ev_perm;
  std::optional<double> ev_scale;
  std::size_t ev_batch = 64;
  ev->add_option("--checkpoint", ev_ck, "Checkpoint file")->required();
  ev->add_option("--data", ev_data, "Dataset file")->required();
  ev->add_option("--permutation", ev_perm, "Channel permutation");
  ev->add_option("--units-per-mm", ev_scale, "Report in millimetres");
  ev->add_option("--batch", ev_batch, "Batch size");
  ev->add_option("--out", ev_out, "Prediction CSV to write");
  ev->callback([&] {
    action = [&] {
      if (ev_scale && !(*ev_scale > 0)) throw ConfigError("--units-per-mm must be positive");
      if (ev_batch == 0) throw ConfigError("--batch must be positive");
      const auto ck = load_checkpoint(ev_ck);
      auto ds = load_dataset(ev_data, DatasetExpectation{ck.config.channels, ck.config.timepoints});
      if (!ev_perm.empty()) ds = apply_permutation(ds, builtin_permutation(ev_perm, ds.channels));
      auto model = model_from_checkpoint<float>(ck);
      const auto res = evaluate(model, ds, ev_scale, ev_batch);
      if (!ev_out.empty()) io::write_file_atomic(ev_out, prediction_csv(res.predictions));
      std::cout << res.report.to_json() << '\n';
    };
  });

  // ablate
  auto* abl = app.add_subcommand("ablate", "Temporal kernel x spatial height ablation");
  std::string ab_config, ab_data, ab_out, ab_perm;
  std::vector<std::size_t> ab_kernels, ab_heights, ab_seeds;
  std::size_t ab_threads = 0;
  abl->add_option("--config", ab_config, "Base run config JSON")->required();
  abl->add_option("--data", ab_data, "Dataset file");
  abl->add_option("--permutation", ab_perm, "Channel permutation");
  abl->add_option("--kernels", ab_kernels, "Temporal kernels")->delimiter(',');
  abl->add_option("--heights", ab_heights, "Spatial kernel heights")->delimiter(',');
  abl->add_option("--seeds", ab_seeds, "Run seeds")->delimiter(',');
  abl->add_option("--threads", ab_threads, "Worker threads (default EEGGAZE_THREADS or 1)");
  abl->add_option("--out", ab_out, "Output directory")->required();
  abl->callback([&] {
    action = [&] {
      AblationSpec a;
      a.base = read_spec(ab_config);
      override_source(a.base, ab_data, ab_perm);
      if (!ab_kernels.empty()) a.temporal_kernels = ab_kernels;
      if (!ab_heights.empty()) a.spatial_heights = ab_heights;
      if (!ab_seeds.empty()) a.base.seeds.assign(ab_seeds.begin(), ab_seeds.end());
      a.base.validate();
      ablation_configs(a);
      const auto ds = load_source(a.base.data);
      const auto table = run_ablation(a, ds, ab_threads, progress);
      ensure_dir(ab_out);
      io::write_file_atomic(fs::path(ab_out) / "ablation.csv", table.to_csv());
      io::write_file_atomic(fs::path(ab_out) / "ablation.json", table.to_json());
      std::cout << table.to_csv();
    };
  });

  // run
  auto* run = app.add_subcommand("run", "Multi-seed experiment with report and figures");
  std::string run_config, run_data, run_out, run_perm;
  std::vector<std::size_t> run_seeds;
  run->add_option("--config", run_config, "Run config JSON")->required();
  run->add_option("--data", run_data, "Dataset file");
  run->add_option("--permutation", run_perm, "Channel permutation");
  run->add_option("--seeds", run_seeds, "Run seeds")->delimiter(',');
  run->add_option("--out", run_out, "Output directory")->required();
  run->callback([&] {
    action = [&] {
      RunSpec spec = read_spec(run_config);
      override_source(spec, run_data, run_perm);
      if (!run_seeds.empty()) spec.seeds.assign(run_seeds.begin(), run_seeds.end());
      spec.validate();
      const auto res = run_experiment(spec, progress);
      emit_report(res, run_out);
      const auto& agg = res.report.aggregate;
      std::cout << "test rmse " << fmt(agg.rmse);
      if (agg.mean_std) std::cout << " +- " << fmt(agg.mean_std->rmse_std);
      std::cout << ", med " << fmt(agg.med);
      if (agg.mean_std) std::cout << " +- " << fmt(agg.mean_std->med_std);
      std::cout << " " << agg.units << "; train+val " << fmt(res.report.seconds_mean) << " s per run\n";
    };
  });

  // audit
  auto* aud = app.add_subcommand("audit", "Which metric does a reported number match?");
  std::string au_pred;
  double au_reported = 0, au_tol = 0.01;
  aud->add_option("--pred", au_pred, "Prediction CSV")->required();
  aud->add_option("--reported", au_reported, "Published value")->required();
  aud->add_option("--tol", au_tol, "Relative tolerance");
  aud->callback([&] {
    action = [&] {
      if (!(au_tol > 0)) throw ConfigError("--tol must be positive");
      const auto ps = parse_prediction_csv(io::read_file(au_pred));
      ps.validate();
      std::cout << to_string(audit_metric(ps, au_reported, au_tol)) << '\n';
      std::cerr << "rmse " << fmt(rmse(ps)) << ", med " << fmt(med(ps)) << ", n " << ps.size() << '\n';
    };
  });

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite in double precision");
  std::size_t gc_seeds = 10;
  double gc_eps = 1e-5, gc_tol = 1e-4;
  gc->add_option("--seeds", gc_seeds, "Random draws per check");
  gc->add_option("--eps", gc_eps, "Central-difference step");
  gc->add_option("--tol", gc_tol, "Maximum relative error");
  gc->callback([&] {
    action = [&] {
      if (!(gc_eps > 0) || !(gc_tol > 0)) throw ConfigError("--eps and --tol must be positive");
      bool ok = true;
      for (const auto& e : run_gradient_suite(gc_seeds, gc_eps)) {
        const bool pass = e.max_relative_error < gc_tol;
        ok = ok && pass;
        std::printf("%-4s %-30s %.3e  (%zu seeds, %zu coordinates)\n", pass ? "ok" : "FAIL", e.name.c_str(),
                    e.max_relative_error, e.seeds, e.coordinates);
      }
      if (!ok) throw NumericError("gradient check tolerance exceeded");
    };
  });

  // report
  auto* rep = app.add_subcommand("report", "Figures and metrics from saved predictions and history");
  std::string rp_pred, rp_hist, rp_out, rp_title = "Gaze predictions";
  rep->add_option("--pred", rp_pred, "Prediction CSV");
  rep->add_option("--history", rp_hist, "Training history CSV");
  rep->add_option("--title", rp_title, "Scatter title");
  rep->add_option("--out", rp_out, "Output directory")->required();
  rep->callback([&] {
    action = [&] {
      if (rp_pred.empty() && rp_hist.empty()) throw ConfigError("report needs --pred and/or --history");
      std::optional<PredictionSet> ps;
      std::optional<TrainHistory> hist;
      if (!rp_pred.empty()) ps = parse_prediction_csv(io::read_file(rp_pred));
      if (!rp_hist.empty()) hist = TrainHistory::from_csv(io::read_file(rp_hist));
      ensure_dir(rp_out);
      const fs::path dir = rp_out;
      if (ps) {
        io::write_file_atomic(dir / "scatter.svg", scatter_svg(*ps, rp_title));
        if (ps->size() > 0) io::write_file_atomic(dir / "metrics.json", report_of(*ps).to_json());
      }
      if (hist) io::write_file_atomic(dir / "loss.svg", loss_curve_svg(*hist));
      std::cout << "wrote report to " << rp_out << '\n';
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    action();
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "invalid file: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
