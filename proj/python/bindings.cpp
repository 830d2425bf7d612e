// Python bindings over the core library. Arrays cross the boundary as float32 /
// uint8 numpy copies; configs travel as JSON text and are parsed by the same
// code the CLI uses, so both front ends reject the same inputs.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "wastegan/checkpoint.hpp"
#include "wastegan/config.hpp"
#include "wastegan/errors.hpp"
#include "wastegan/evalkit.hpp"
#include "wastegan/grasp.hpp"
#include "wastegan/hash.hpp"
#include "wastegan/ops.hpp"
#include "wastegan/scenegen.hpp"
#include "wastegan/training.hpp"

namespace py = pybind11;
using namespace wastegan;

namespace {

using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;
using U8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

RunConfig parse_config(const std::string& json_text) {
  return run_config_from_json(json_text.empty() ? nlohmann::json::object() : nlohmann::json::parse(json_text));
}

std::vector<py::ssize_t> dims(const Shape& s) { return {s.begin(), s.end()}; }

F32 to_numpy(const Shape& shape, std::span<const float> values) {
  F32 out(dims(shape));
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}
F32 to_numpy(const Tensor& t) { return to_numpy(t.shape(), t.data()); }

U8 mask_to_numpy(const std::vector<std::uint8_t>& mask, std::size_t res) {
  U8 out({static_cast<py::ssize_t>(res), static_cast<py::ssize_t>(res)});
  std::copy(mask.begin(), mask.end(), out.mutable_data());
  return out;
}

Tensor from_numpy(const F32& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor::from(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

std::vector<std::uint8_t> mask_from_numpy(const U8& a) { return {a.data(), a.data() + a.size()}; }

py::tuple scene_tuple(const SceneSample& s) {
  return py::make_tuple(to_numpy(s.image), mask_to_numpy(s.mask, s.resolution));
}

py::dict corpus_dict(const Corpus& c) {
  py::list train, test;
  for (const auto& s : c.train) train.append(scene_tuple(s));
  for (const auto& s : c.test) test.append(scene_tuple(s));
  py::dict d;
  d["resolution"] = c.resolution;
  d["train"] = train;
  d["test"] = test;
  return d;
}

py::dict checkpoint_dict(const std::vector<NamedTensor>& tensors) {
  py::dict d;
  for (const auto& t : tensors) d[py::str(t.name)] = to_numpy(t.shape, t.values);
  return d;
}

std::vector<NamedTensor> checkpoint_from_dict(const py::dict& d) {
  std::vector<NamedTensor> out;
  for (const auto& [k, v] : d) {
    const auto a = v.cast<F32>();
    out.push_back({k.cast<std::string>(), Shape(a.shape(), a.shape() + a.ndim()),
                   std::vector<float>(a.data(), a.data() + a.size())});
  }
  return out;
}

py::tuple sample(const GanModel<float>& model, std::size_t n, std::uint64_t seed) {
  std::vector<GeneratedSample> samples;
  {
    py::gil_scoped_release unlock;
    samples = model.sample_batch(n, seed);
  }
  const auto& cfg = model.config();
  const auto r = static_cast<py::ssize_t>(cfg.resolution), c = static_cast<py::ssize_t>(cfg.classes);
  const auto count = static_cast<py::ssize_t>(n);
  F32 images({count, py::ssize_t{3}, r, r}), soft({count, c, r, r});
  U8 labels({count, r, r});
  const auto hard = generated_masks(samples);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(samples[i].image.data().begin(), samples[i].image.data().end(),
              images.mutable_data() + i * 3 * r * r);
    std::copy(samples[i].soft_mask.data().begin(), samples[i].soft_mask.data().end(),
              soft.mutable_data() + i * c * r * r);
    std::copy(hard[i].begin(), hard[i].end(), labels.mutable_data() + i * r * r);
  }
  return py::make_tuple(images, soft, labels);
}

py::dict train(GanModel<float>& model, const std::string& corpus_dir, const std::string& out_dir,
               const std::string& config_json) {
  const auto cfg = parse_config(config_json);
  GanTrainResult res;
  {
    py::gil_scoped_release unlock;
    const Corpus corpus = read_corpus(corpus_dir);
    GanTrainIo io;
    if (!out_dir.empty()) io.out_dir = out_dir;
    res = train_gan(model, corpus.train, cfg.train, io);
  }
  py::list hist, losses;
  for (const auto& p : res.hist_distance) hist.append(py::make_tuple(p.step, p.distance));
  for (const auto& m : res.metrics) {
    py::dict row;
    row["step"] = m.step;
    row["loss_drgb"] = m.loss_drgb;
    row["loss_dseg"] = m.loss_dseg;
    row["loss_g"] = m.loss_g;
    row["loss_imc"] = m.loss_imc;
    losses.append(row);
  }
  py::dict d;
  d["final_step"] = res.final_step;
  d["hist_distance"] = hist;
  d["metrics"] = losses;
  return d;
}

py::dict sweep(const std::string& checkpoint, const std::string& corpus_dir, const std::string& config_json) {
  const auto cfg = parse_config(config_json);
  SweepReport report;
  {
    py::gil_scoped_release unlock;
    report = augmentation_sweep(checkpoint, read_corpus(corpus_dir), cfg.sweep);
  }
  py::list rows;
  for (const auto& r : report.rows) {
    py::dict row;
    row["ratio"] = r.ratio;
    row["seed"] = r.seed;
    row["miou"] = r.miou;
    row["iou"] = r.iou;
    rows.append(row);
  }
  py::dict d;
  d["rows"] = rows;
  d["median_miou"] = median_miou_by_ratio(report);
  d["csv"] = sweep_csv(report);
  d["summary_json"] = sweep_summary_json(report, cfg.sweep);
  return d;
}

py::object grasp(const F32& logits, int class_id, std::size_t radius_px, std::size_t top_k, bool use_softmax) {
  if (class_id < 0 || class_id > 255) throw ContractError("select_grasp: class id out of range");
  SuctionConfig cfg;
  cfg.radius_px = radius_px;
  cfg.top_k = top_k;
  cfg.use_softmax = use_softmax;
  const auto res = select_grasp(from_numpy(logits), static_cast<std::uint8_t>(class_id), cfg);
  if (std::holds_alternative<NoGraspPoint>(res)) return py::none();
  py::list out;
  for (const auto& c : std::get<std::vector<GraspCandidate>>(res)) {
    out.append(py::make_tuple(c.pixel.row, c.pixel.col, c.score));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Compiled core of the wastegan package";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<TrainingDiverged>(m, "TrainingDiverged", base.ptr());
  py::register_exception<InvariantError>(m, "InvariantError", base.ptr());

  m.attr("NUM_CLASSES") = kSceneClasses;

  m.def("normalize_config", [](const std::string& j) { return run_config_to_json(parse_config(j)).dump(); },
        py::arg("config_json") = "");
  m.def("config_hash", [](const std::string& j) { return run_config_hash(parse_config(j)); },
        py::arg("config_json") = "");

  m.def(
      "generate_scene",
      [](std::size_t index, const std::string& j) { return scene_tuple(generate_scene(parse_config(j).corpus, index)); },
      py::arg("index"), py::arg("config_json") = "");
  m.def(
      "write_corpus",
      [](const std::string& dir, const std::string& j) {
        const auto cfg = parse_config(j);
        py::gil_scoped_release unlock;
        write_corpus(dir, cfg.corpus);
      },
      py::arg("dir"), py::arg("config_json") = "");
  m.def("read_corpus", [](const std::string& dir) { return corpus_dict(read_corpus(dir)); }, py::arg("dir"));
  m.def("corpus_checksum", [](const std::string& dir) { return corpus_checksum(dir); }, py::arg("dir"));
  m.def("file_checksum", [](const std::string& p) { return file_checksum(p); }, py::arg("path"));

  m.def("read_checkpoint", [](const std::string& p) { return checkpoint_dict(read_checkpoint(p)); }, py::arg("path"));
  m.def(
      "write_checkpoint",
      [](const std::string& p, const py::dict& d) { write_checkpoint(p, checkpoint_from_dict(d)); }, py::arg("path"),
      py::arg("tensors"));

  py::class_<GanModel<float>>(m, "GanModel")
      .def(py::init([](const std::string& j) { return std::make_unique<GanModel<float>>(parse_config(j).gan); }),
           py::arg("config_json") = "")
      .def_static("load", [](const std::string& p) { return load_gan_checkpoint(p); }, py::arg("path"))
      .def("sample", &sample, py::arg("n"), py::arg("seed"))
      .def("state", [](const GanModel<float>& g) { return checkpoint_dict(g.state()); })
      .def_property_readonly("resolution", [](const GanModel<float>& g) { return g.config().resolution; })
      .def_property_readonly("generated_samples", &GanModel<float>::generated_samples)
      .def_property_readonly("generator_calls", &GanModel<float>::generator_calls);

  m.def("train_gan", &train, py::arg("model"), py::arg("corpus_dir"), py::arg("out_dir") = "",
        py::arg("config_json") = "");
  m.def("augmentation_sweep", &sweep, py::arg("checkpoint"), py::arg("corpus_dir"), py::arg("config_json") = "");

  m.def("select_grasp", &grasp, py::arg("logits"), py::arg("class_id"), py::arg("radius_px") = 2,
        py::arg("top_k") = 1, py::arg("use_softmax") = false);
  m.def(
      "oracle_logits",
      [](const U8& mask) {
        if (mask.ndim() != 2 || mask.shape(0) != mask.shape(1)) throw DimensionError("oracle_logits: square mask");
        return to_numpy(oracle_logits(mask_from_numpy(mask), mask.shape(0), kSceneClasses));
      },
      py::arg("mask"));
  m.def(
      "miou",
      [](const std::vector<U8>& pred, const std::vector<U8>& gt) {
        std::vector<Mask> p, g;
        for (const auto& a : pred) p.push_back(mask_from_numpy(a));
        for (const auto& a : gt) g.push_back(mask_from_numpy(a));
        const auto r = miou(p, g, kSceneClasses);
        return py::make_tuple(r.miou, r.iou);
      },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "slog",
      [](const F32& x, double a) { return to_numpy(ops::slog(from_numpy(x), static_cast<float>(a))); }, py::arg("x"),
      py::arg("a") = 1.0);
}
