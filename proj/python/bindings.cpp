// Python bindings for the SVIP core.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <numeric>
#include <sstream>

#include "svip/checkpoint.hpp"
#include "svip/dataset.hpp"
#include "svip/errors.hpp"
#include "svip/gradsuite.hpp"
#include "svip/imageio.hpp"
#include "svip/inspect.hpp"
#include "svip/metrics.hpp"
#include "svip/ssps.hpp"
#include "svip/trainer.hpp"

namespace py = pybind11;
using namespace svip;

namespace {

// `key = value` text from a dict of scalars.
std::string settings_text(const py::dict& d) {
  std::ostringstream out;
  for (auto item : d) {
    out << py::str(item.first).cast<std::string>() << " = ";
    auto v = item.second;
    if (py::isinstance<py::bool_>(v)) {
      out << (v.cast<bool>() ? "true" : "false");
    } else {
      out << py::str(v).cast<std::string>();
    }
    out << '\n';
  }
  return out.str();
}

Settings settings_from(const py::object& source) {
  if (py::isinstance<py::dict>(source)) {
    return Settings::parse_text(settings_text(source.cast<py::dict>()), "<dict>");
  }
  return Settings::parse_file(py::str(source).cast<std::string>());
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["T1"] = r.t1;
  d["U"] = r.u;
  d["S"] = r.s;
  d["H"] = r.h;
  d["selection_auc"] = r.selection_auc ? py::cast(*r.selection_auc) : py::none();
  d["selection_hit_rate"] =
      r.selection_hit_rate ? py::cast(*r.selection_hit_rate) : py::none();
  return d;
}

py::dict loss_dict(const LossComponents& l) {
  py::dict d;
  d["cls"] = l.cls;
  d["jsd"] = l.jsd ? py::cast(*l.jsd) : py::none();
  d["patch"] = l.patch ? py::cast(*l.patch) : py::none();
  d["total"] = l.total;
  return d;
}

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols) throw ShapeError("ragged matrix rows");
    std::copy(rows[r].begin(), rows[r].end(), m.values.begin() + r * m.cols);
  }
  return m;
}

std::vector<std::vector<double>> from_matrix(const Matrix& m) {
  std::vector<std::vector<double>> out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) out[r].assign(m.row(r).begin(), m.row(r).end());
  return out;
}

DivergenceMode divergence_mode(const std::string& name) {
  if (name == "as-written") return DivergenceMode::kAsWritten;
  if (name == "true-jsd") return DivergenceMode::kTrueJsd;
  throw UsageError("divergence mode must be as-written or true-jsd, got " + name);
}

std::uint64_t generate(const py::object& spec_source, const std::string& out_dir) {
  auto s = settings_from(spec_source);
  SyntheticSpec spec;
  apply(s, spec);
  s.finish();
  auto data = generate_synthetic(spec);
  save_dataset(data, out_dir);
  return dataset_hash(data);
}

py::dict train_model(const py::object& config, const std::string& data_dir,
                     const std::string& ckpt, const std::string& log_path) {
  auto s = settings_from(config);
  ViTConfig vit;
  TrainConfig cfg;
  apply(s, vit);
  apply(s, cfg);
  s.finish();
  auto data = load_dataset(data_dir);
  vit = vit_for_dataset(vit, data);
  cfg.validate(vit.num_patches());
  auto model = SvipModel::create(vit, resolve_word_embeddings(data, cfg), cfg.seed);
  TrainResult result;
  {
    py::gil_scoped_release release;
    if (log_path.empty()) {
      result = train(model, data, cfg);
    } else {
      std::ofstream log(log_path);
      if (!log) throw DataError("cannot write training log " + log_path);
      result = train(model, data, cfg, &log);
    }
  }
  save_checkpoint(ckpt, model, cfg);
  py::dict d;
  d["steps"] = result.steps;
  d["epoch_loss"] = result.epoch_loss;
  d["last"] = loss_dict(result.last);
  return d;
}

py::dict evaluate_checkpoint(const std::string& ckpt, const std::string& data_dir) {
  auto ck = load_checkpoint(ckpt);
  auto data = load_dataset(data_dir);
  if (data.attributes.num_attributes() != ck.vit.num_attributes ||
      data.image_size != ck.vit.image_size || data.channels != ck.vit.channels) {
    throw DataError("dataset does not match the checkpoint configuration");
  }
  EvalReport r;
  {
    py::gil_scoped_release release;
    r = evaluate(ck.model, data, ck.train);
  }
  return report_dict(r);
}

py::dict inspect(const std::string& ckpt, const std::string& image_path,
                 const std::string& out_dir, const std::string& data_dir) {
  auto ck = load_checkpoint(ckpt);
  auto img = read_pnm(image_path);
  if (img.width != ck.vit.image_size || img.height != ck.vit.image_size ||
      img.channels != ck.vit.channels) {
    throw DataError(image_path + ": image size does not match the checkpoint");
  }
  std::vector<double> px(img.pixels.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = img.pixels[i] / 255.0;
  auto image = Tensor::from({img.height, img.width, img.channels}, std::move(px));
  std::optional<Dataset> data;
  if (!data_dir.empty()) data = load_dataset(data_dir);
  auto ins = inspect_image(ck.model, ck.train, image, data ? &data->attributes : nullptr);
  if (!out_dir.empty()) {
    write_inspection(ins, out_dir, data ? data->words.names : std::vector<std::string>{});
  }
  py::dict d;
  d["grid"] = ins.grid;
  d["pseudo"] = ins.pseudo;
  d["predicted"] = ins.predicted;
  d["selected"] = ins.mask.indices;
  d["pooled"] = ins.pooled;
  d["zsl_class"] = ins.zsl_class ? py::cast(*ins.zsl_class) : py::none();
  d["gzsl_class"] = ins.gzsl_class ? py::cast(*ins.gzsl_class) : py::none();
  return d;
}

py::dict gradcheck(double tolerance) {
  GradSuiteResult r;
  {
    py::gil_scoped_release release;
    r = run_gradient_suite(minimal_vit(), minimal_train());
  }
  py::dict d;
  d["max_rel_error"] = r.max_rel_error();
  d["groups"] = r.group_max;
  d["passed"] = r.passed(tolerance);
  return d;
}

}  // namespace

PYBIND11_MODULE(_svip, m) {
  m.doc() = "SVIP zero-shot learning core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("generate", &generate, py::arg("spec"), py::arg("out_dir"),
        "Generate a synthetic glyph dataset from a spec file or dict; returns "
        "the dataset hash.");
  m.def("train", &train_model, py::arg("config"), py::arg("data_dir"),
        py::arg("checkpoint"), py::arg("log_path") = "",
        "Train from a config file or dict and write a checkpoint.");
  m.def("evaluate", &evaluate_checkpoint, py::arg("checkpoint"), py::arg("data_dir"),
        "ZSL and GZSL metrics of a checkpoint on a dataset directory.");
  m.def("inspect", &inspect, py::arg("checkpoint"), py::arg("image"),
        py::arg("out_dir") = "", py::arg("data_dir") = "",
        "Score grids, selection and pooled attributes for one PGM/PPM image.");
  m.def("gradcheck", &gradcheck, py::arg("tolerance") = 1e-4,
        "Finite-difference check of every parameter group on a minimal model.");

  m.def("harmonic_mean", &harmonic_mean, py::arg("unseen"), py::arg("seen"));
  m.def(
      "aggregate_attention",
      [](const std::vector<std::vector<std::vector<double>>>& layers) {
        AttentionTrace trace;
        for (const auto& l : layers) {
          auto t = to_matrix(l);
          trace.layers.push_back({{t}, t});
        }
        return from_matrix(aggregate_attention(trace));
      },
      py::arg("layers"), "Aggregate head-averaged attention matrices across layers.");
  m.def(
      "pseudo_scores",
      [](const std::vector<std::vector<double>>& w) { return pseudo_scores(to_matrix(w)); },
      py::arg("aggregated"));
  m.def(
      "select_top_m",
      [](const std::vector<double>& scores, std::size_t m) {
        return select_top_m(scores, m).indices;
      },
      py::arg("scores"), py::arg("m"), "0-based indices of the M highest scores.");
  m.def(
      "jsd",
      [](const std::vector<double>& p, const std::vector<double>& q,
         const std::string& mode) { return jsd_value(p, q, divergence_mode(mode)); },
      py::arg("p"), py::arg("q"), py::arg("mode") = "as-written");
  m.def(
      "patch_loss",
      [](const std::vector<double>& predicted, const std::vector<double>& targets) {
        const std::size_t n = predicted.size();
        return patch_loss(Tensor::from({n, 1}, predicted), targets).item();
      },
      py::arg("predicted"), py::arg("targets"));
  m.def(
      "classify",
      [](const std::vector<double>& pooled,
         const std::vector<std::vector<double>>& class_attributes, double sigma) {
        auto values = to_matrix(class_attributes);
        std::vector<int> ids(values.rows);
        std::iota(ids.begin(), ids.end(), 0);
        AttributeMatrix classes(ids, std::vector<Split>(values.rows, Split::kSeen), values);
        const std::size_t k = pooled.size();
        auto p = classify(Tensor::from({1, k}, pooled), classes, classes.all_rows(), sigma);
        return std::vector<double>(p.data().begin(), p.data().end());
      },
      py::arg("pooled"), py::arg("class_attributes"), py::arg("sigma") = 5.0,
      "Softmax over sigma * cosine similarity to each class row.");
}
