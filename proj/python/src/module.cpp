#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "d2a2/ablation.hpp"
#include "d2a2/data.hpp"
#include "d2a2/gradcheck.hpp"
#include "d2a2/image_io.hpp"
#include "d2a2/model.hpp"
#include "d2a2/resample.hpp"
#include "d2a2/train.hpp"

namespace py = pybind11;
using namespace d2a2;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Accepts (H,W), (C,H,W) or (N,C,H,W).
Tensor<double> to_tensor(const Array& a) {
  Shape s;
  switch (a.ndim()) {
    case 2: s = {1, 1, static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))}; break;
    case 3:
      s = {1, static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
           static_cast<std::size_t>(a.shape(2))};
      break;
    case 4:
      s = {static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
           static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(3))};
      break;
    default: throw py::value_error("expected a 2-, 3- or 4-dimensional array");
  }
  return Tensor<double>(s, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor<double>& t) {
  const Shape& s = t.shape();
  Array out({s.n, s.c, s.h, s.w});
  std::copy(t.vec().begin(), t.vec().end(), out.mutable_data());
  return out;
}

ModelConfig config_from(const py::dict& kwargs) {
  ModelConfig c;
  for (const auto& [k, v] : kwargs) {
    const auto key = py::str(k).cast<std::string>();
    std::string value = py::isinstance<py::bool_>(v) ? (v.cast<bool>() ? "true" : "false") : py::str(v).cast<std::string>();
    if (!c.set(key, value)) throw py::key_error("unknown model option '" + key + "'");
  }
  c.validate();
  return c;
}

py::dict pair_dict(const SamplePair& p) {
  py::dict d;
  d["depth_hr"] = to_array(p.depth_hr);
  d["rgb_hr"] = to_array(p.rgb_hr);
  d["depth_lr"] = to_array(p.depth_lr);
  d["scale"] = p.scale;
  return d;
}

class PyModel {
 public:
  explicit PyModel(D2A2Model<float> m) : model_(std::move(m)) {}

  Array predict(const Array& rgb, const Array& depth_lr, int scale) const {
    const auto out = model_.predict(to_tensor(rgb).cast<float>(), to_tensor(depth_lr).cast<float>(), scale);
    return to_array(out.cast<double>());
  }

  // Native-unit depth in, native-unit depth out.
  Array super_resolve(const Array& rgb, const Array& depth_lr, int scale) const {
    const Tensor<double> lr = to_tensor(depth_lr);
    const auto rec = NormalizationRecord::from_depth(lr);
    const auto out = model_.predict(to_tensor(rgb).cast<float>(), rec.normalize(lr).cast<float>(), scale);
    return to_array(rec.denormalize(out.cast<double>()));
  }

  std::vector<double> fit_synthetic(int count, int scale, int steps, int batch_size, int crop, double lr,
                                    std::uint64_t seed, bool augment, int size) {
    TrainConfig t;
    t.steps = steps;
    t.batch_size = batch_size;
    t.crop_size = crop;
    t.lr = lr;
    t.seed = seed;
    t.augment = augment;
    t.synthetic_size = size;
    t.validate(scale);
    const auto result = train(model_, synthetic_set(static_cast<std::size_t>(count), static_cast<std::size_t>(size), scale), t);
    if (result.halted) throw std::runtime_error(result.halt_reason);
    return result.losses;
  }

  double dataset_l1(int count, int scale, int size) const {
    return d2a2::dataset_l1(model_, synthetic_set(static_cast<std::size_t>(count), static_cast<std::size_t>(size), scale));
  }

  std::size_t num_parameters() const { return model_.parameters().numel(); }
  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < model_.parameters().size(); ++i) names.push_back(model_.parameters()[i].name);
    return names;
  }
  std::string config_text() const { return model_.config().to_text(); }
  void zero_head() { model_.zero_head(); }
  void save(const std::string& path) const { save_checkpoint(model_, path); }

 private:
  D2A2Model<float> model_;
};

}  // namespace

PYBIND11_MODULE(d2a2, m) {
  m.doc() = "Guided depth super-resolution: resampling, synthetic data, model inference and training";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);

  m.def("bicubic_resize", [](const Array& a, int factor) { return to_array(bicubic_resize(to_tensor(a), Ratio::up(factor))); },
        py::arg("image"), py::arg("factor"), "Bicubic upsampling by an integer factor; returns (N,C,H,W).");
  m.def("degrade", [](const Array& a, int scale) { return to_array(degrade(to_tensor(a), scale)); }, py::arg("depth_hr"),
        py::arg("scale"), "Bicubic downsampling used to produce LR depth.");
  m.def("synth_scene", [](std::uint64_t seed, std::size_t size, int scale) { return pair_dict(synth_scene(seed, size, scale)); },
        py::arg("seed"), py::arg("size") = 64, py::arg("scale") = 4);
  m.def("rmse", [](const Array& p, const Array& t) { return rmse_native(to_tensor(p), to_tensor(t)); }, py::arg("pred"),
        py::arg("target"));
  m.def("read_image", [](const std::string& path) { return to_array(read_image(path)); }, py::arg("path"));
  m.def("write_image", [](const Array& a, const std::string& path, unsigned maxval) { write_image(to_tensor(a), path, maxval); },
        py::arg("image"), py::arg("path"), py::arg("maxval") = 65535u);
  m.def(
      "gradcheck",
      [](const std::string& scope) {
        py::list out;
        for (const auto& r : run_gradcheck(scope)) {
          py::dict d;
          d["op"] = r.op;
          d["module"] = r.module;
          d["max_rel_error"] = r.max_rel_error;
          d["passed"] = r.passed;
          out.append(d);
        }
        return out;
      },
      py::arg("scope") = "all");
  m.def("ablation_labels", [](int table) {
    std::vector<std::string> labels;
    for (const auto& row : ablation_rows(table, ModelConfig{})) labels.push_back(row.label);
    return labels;
  });

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const py::kwargs& kwargs) { return PyModel(D2A2Model<float>(config_from(kwargs))); }),
           "Builds a model; keyword arguments are config keys (num_scales, base_channels, use_dda, ...).")
      .def_static("load", [](const std::string& path) { return PyModel(load_checkpoint<float>(path)); }, py::arg("path"))
      .def("save", &PyModel::save, py::arg("path"))
      .def("predict", &PyModel::predict, py::arg("rgb"), py::arg("depth_lr"), py::arg("scale"),
           "Raw forward pass on normalized depth.")
      .def("super_resolve", &PyModel::super_resolve, py::arg("rgb"), py::arg("depth_lr"), py::arg("scale"))
      .def("fit_synthetic", &PyModel::fit_synthetic, py::arg("count"), py::arg("scale") = 4, py::arg("steps") = 100,
           py::arg("batch_size") = 4, py::arg("crop") = 32, py::arg("lr") = 1e-3, py::arg("seed") = 0,
           py::arg("augment") = true, py::arg("size") = 64, "Trains on generated scenes; returns per-step losses.")
      .def("dataset_l1", &PyModel::dataset_l1, py::arg("count"), py::arg("scale") = 4, py::arg("size") = 64)
      .def("zero_head", &PyModel::zero_head)
      .def_property_readonly("num_parameters", &PyModel::num_parameters)
      .def_property_readonly("parameter_names", &PyModel::parameter_names)
      .def_property_readonly("config", &PyModel::config_text);
}
