#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "eeggaze/bench.hpp"
#include "eeggaze/gradsuite.hpp"

namespace py = pybind11;
using namespace eeggaze;

namespace {

using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;
using U32 = py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>;
using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;

template <typename T>
py::array_t<T> to_numpy(const std::vector<T>& v, std::vector<py::ssize_t> shape) {
  py::array_t<T> a(shape);
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

Dataset dataset_from_arrays(F32 eeg, F32 gaze, U32 participant) {
  if (eeg.ndim() != 3) throw ShapeError("eeg must be [n, channels, timepoints]");
  if (gaze.ndim() != 2 || gaze.shape(1) != 2) throw ShapeError("gaze must be [n, 2]");
  if (participant.ndim() != 1) throw ShapeError("participant must be [n]");
  Dataset ds;
  ds.channels = eeg.shape(1);
  ds.timepoints = eeg.shape(2);
  ds.eeg.assign(eeg.data(), eeg.data() + eeg.size());
  ds.gaze.assign(gaze.data(), gaze.data() + gaze.size());
  ds.participant.assign(participant.data(), participant.data() + participant.size());
  ds.validate();
  return ds;
}

PredictionSet prediction_set(F64 truth, F64 pred) {
  if (truth.ndim() != 2 || truth.shape(1) != 2 || pred.ndim() != 2 || pred.shape(1) != 2)
    throw ShapeError("truth and pred must be [n, 2]");
  PredictionSet ps;
  for (py::ssize_t i = 0; i < truth.shape(0); ++i) ps.truth.push_back({truth.at(i, 0), truth.at(i, 1)});
  for (py::ssize_t i = 0; i < pred.shape(0); ++i) ps.pred.push_back({pred.at(i, 0), pred.at(i, 1)});
  return ps;
}

// Float32 model handle; configs travel as JSON text.
class Model {
 public:
  Model(const std::string& config_json, std::uint64_t seed)
      : model_(build_model<float>(ModelConfig::from_json(config_json), RngStream(seed))) {}
  explicit Model(GazeModel<float> m) : model_(std::move(m)) {}

  py::array_t<float> predict(F32 eeg, std::size_t batch) {
    const auto& c = model_.config();
    if (eeg.ndim() != 3 || static_cast<std::size_t>(eeg.shape(1)) != c.channels ||
        static_cast<std::size_t>(eeg.shape(2)) != c.timepoints)
      throw ShapeError("eeg must be [n, " + std::to_string(c.channels) + ", " + std::to_string(c.timepoints) + "]");
    Dataset ds;
    ds.channels = c.channels;
    ds.timepoints = c.timepoints;
    ds.eeg.assign(eeg.data(), eeg.data() + eeg.size());
    ds.gaze.assign(2 * eeg.shape(0), 0.0f);
    ds.participant.assign(eeg.shape(0), 0);
    const auto out = predict_impl(ds, batch);
    return to_numpy(out, {eeg.shape(0), 2});
  }

  std::vector<float> predict_impl(const Dataset& ds, std::size_t batch) {
    py::gil_scoped_release release;
    const auto p = eeggaze::predict(model_, ds, batch);
    return {p.begin(), p.end()};
  }

  std::string config_json() const { return model_.config().to_json(); }
  std::size_t num_parameters() const { return param_count(model_.config()).total; }
  GazeModel<float>& raw() { return model_; }

 private:
  GazeModel<float> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "EEG gaze regression core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  auto fmt = py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<BadMagicError>(m, "BadMagicError", fmt.ptr());
  py::register_exception<VersionError>(m, "VersionError", fmt.ptr());
  py::register_exception<TruncatedError>(m, "TruncatedError", fmt.ptr());
  py::register_exception<ShapeMismatchError>(m, "ShapeMismatchError", fmt.ptr());

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&dataset_from_arrays), py::arg("eeg"), py::arg("gaze"), py::arg("participant"))
      .def_readonly("channels", &Dataset::channels)
      .def_readonly("timepoints", &Dataset::timepoints)
      .def("__len__", &Dataset::size)
      .def_property_readonly("eeg", [](const Dataset& d) {
        return to_numpy(d.eeg, {static_cast<py::ssize_t>(d.size()), static_cast<py::ssize_t>(d.channels),
                                static_cast<py::ssize_t>(d.timepoints)});
      })
      .def_property_readonly("gaze", [](const Dataset& d) { return to_numpy(d.gaze, {static_cast<py::ssize_t>(d.size()), 2}); })
      .def_property_readonly("participant", [](const Dataset& d) {
        return to_numpy(d.participant, {static_cast<py::ssize_t>(d.size())});
      })
      .def("subset", [](const Dataset& d, std::vector<std::size_t> idx) { return d.subset(idx); })
      .def("__eq__", [](const Dataset& a, const Dataset& b) { return a == b; });

  m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"));
  m.def("load_dataset", [](const std::filesystem::path& p) { return load_dataset(p); }, py::arg("path"));
  m.def("generate_synthetic", [](const std::string& cfg) { return generate_synthetic(synthetic_from_json(cfg)); },
        py::arg("config_json"), "Planted-signal dataset from a synthetic config JSON object.");
  m.def(
      "split_by_participant",
      [](const Dataset& ds, double train, double val, double test, std::uint64_t seed) {
        const auto s = split_by_participant(ds, SplitSpec{train, val, test, seed});
        return py::make_tuple(s.train, s.val, s.test);
      },
      py::arg("dataset"), py::arg("train") = 0.7, py::arg("val") = 0.15, py::arg("test") = 0.15, py::arg("seed") = 0);
  m.def(
      "permute_channels",
      [](const Dataset& ds, const std::string& kind) { return apply_permutation(ds, builtin_permutation(kind, ds.channels)); },
      py::arg("dataset"), py::arg("kind"));

  m.def("rmse", [](F64 t, F64 p) { return rmse(prediction_set(t, p)); }, py::arg("truth"), py::arg("pred"));
  m.def("med", [](F64 t, F64 p) { return med(prediction_set(t, p)); }, py::arg("truth"), py::arg("pred"));
  m.def(
      "audit_metric",
      [](F64 t, F64 p, double reported, double tol) { return to_string(audit_metric(prediction_set(t, p), reported, tol)); },
      py::arg("truth"), py::arg("pred"), py::arg("reported"), py::arg("rel_tol") = 0.01);

  m.def("default_model_config", [] { return ModelConfig{}.to_json(); });
  m.def("model_preset", [](const std::string& name) { return ModelConfig::preset(name).to_json(); });
  m.def("param_count", [](const std::string& cfg) {
    const auto pc = param_count(ModelConfig::from_json(cfg));
    py::dict d;
    for (const auto& [name, n] : pc.layers) d[py::str(name)] = n;
    d["total"] = pc.total;
    return d;
  });
  m.def("token_count", [](const std::string& cfg) { return token_count(ModelConfig::from_json(cfg)); });
  m.def(
      "lr_at_epoch",
      [](const std::string& cfg, std::size_t epoch) { return lr_at_epoch(TrainConfig::from_json(cfg), epoch); },
      py::arg("train_config_json"), py::arg("epoch"));

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&, std::uint64_t>(), py::arg("config_json"), py::arg("seed") = 0)
      .def("predict", &Model::predict, py::arg("eeg"), py::arg("batch_size") = 64)
      .def_property_readonly("config_json", &Model::config_json)
      .def_property_readonly("num_parameters", &Model::num_parameters)
      .def(
          "train",
          [](Model& self, const Dataset& tr, const Dataset& val, const std::string& cfg) {
            TrainResult r;
            {
              py::gil_scoped_release release;
              r = train(self.raw(), tr, val, TrainConfig::from_json(cfg));
            }
            return py::make_tuple(r.best.epoch, r.best.val_rmse, r.history.to_csv());
          },
          py::arg("train"), py::arg("val"), py::arg("train_config_json"),
          "Returns (best_epoch, best_val_rmse, history_csv); the model keeps the best weights.")
      .def("save", [](Model& self, const std::filesystem::path& p) { save_checkpoint(make_checkpoint(self.raw(), 0, 0.0), p); })
      .def_static("load", [](const std::filesystem::path& p) { return Model(model_from_checkpoint<float>(load_checkpoint(p))); });

  m.def(
      "run_experiment",
      [](const std::string& spec_json, const std::optional<std::filesystem::path>& report_dir) {
        const auto spec = RunSpec::from_json(spec_json);
        ExperimentResult res;
        {
          py::gil_scoped_release release;
          res = run_experiment(spec);
        }
        if (report_dir) emit_report(res, *report_dir);
        return res.report.to_json();
      },
      py::arg("spec_json"), py::arg("report_dir") = std::nullopt, "Runs every seed and returns the report JSON.");

  m.def(
      "gradient_suite",
      [](std::size_t seeds, double eps) {
        std::vector<std::pair<std::string, double>> out;
        for (const auto& e : run_gradient_suite(seeds, eps)) out.emplace_back(e.name, e.max_relative_error);
        return out;
      },
      py::arg("seeds") = 10, py::arg("eps") = 1e-5);
}
