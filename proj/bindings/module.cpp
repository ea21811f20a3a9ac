#include <pybind11/iostream.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "drnet/config.hpp"
#include "drnet/data.hpp"
#include "drnet/gradcheck.hpp"
#include "drnet/loss.hpp"
#include "drnet/optim.hpp"

namespace py = pybind11;
using namespace drnet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 4) {
    throw py::value_error("expected a 4-D (n, c, h, w) array, got ndim=" +
                          std::to_string(a.ndim()));
  }
  const Shape s{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                static_cast<int>(a.shape(2)), static_cast<int>(a.shape(3))};
  std::vector<real_t> data(static_cast<std::size_t>(s.numel()));
  const double* src = a.data();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<real_t>(src[i]);
  return Tensor::from_data(s, std::move(data));
}

Array to_array(const Tensor& t) {
  const Shape& s = t.shape();
  Array out({static_cast<py::ssize_t>(s.n), static_cast<py::ssize_t>(s.c),
             static_cast<py::ssize_t>(s.h), static_cast<py::ssize_t>(s.w)});
  double* dst = out.mutable_data();
  for (std::int64_t i = 0; i < t.numel(); ++i) dst[i] = static_cast<double>(t.data()[i]);
  return out;
}

RunConfig parse_config_str(const std::string& config_json) {
  return parse_run_config(nlohmann::json::parse(config_json));
}

// Inference-facing wrapper over the model plus the config it was built from.
class PyModel {
 public:
  PyModel(const std::string& config_json, std::uint64_t seed)
      : cfg_(parse_config_str(config_json)),
        model_(std::make_unique<DRNetModel>(cfg_.model_config(), seed)) {}

  explicit PyModel(Checkpoint&& ckpt)
      : cfg_(*ckpt.config), model_(std::move(ckpt.model)) {}

  std::vector<Array> forward(const Array& img) {
    NoGradGuard ng;
    DepthPyramid p = model_->forward(to_tensor(img), false);
    std::vector<Array> out;
    for (int level = 5; level >= 0; --level) {
      if (p.upII[level].defined()) out.push_back(to_array(p.upII[level]));
    }
    return out;
  }

  Array predict(const Array& img) {
    NoGradGuard ng;
    return to_array(clamp_depth(model_->forward(to_tensor(img), false).finest()));
  }

  void save(const std::string& path) { checkpoint_save(*model_, nullptr, cfg_, path); }

  std::int64_t parameter_count() const { return model_->store().parameter_count(); }

  std::string config_json() const { return effective_config_json(cfg_).dump(); }

 private:
  RunConfig cfg_;
  std::unique_ptr<DRNetModel> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Iterative double-refinement depth estimation core";
  m.attr("__version__") = "0.1.0";
  m.attr("precision_bits") = precision_bits();

  py::register_exception<Error>(m, "DrnetError");

  m.def(
      "pixel_shuffle",
      [](const Array& x, int r) { return to_array(pixel_shuffle(to_tensor(x), r)); },
      py::arg("x"), py::arg("r"),
      "Channel-to-space permutation (n, c, h, w) -> (n, c/r^2, h*r, w*r).");
  m.def(
      "bilinear_upsample",
      [](const Array& x, int factor) {
        return to_array(bilinear_upsample(to_tensor(x), factor));
      },
      py::arg("x"), py::arg("factor"),
      "Half-pixel-centers bilinear upsampling by a factor of 1, 2 or 4.");
  m.def(
      "conv2d",
      [](const Array& x, const Array& w, py::object bias, int stride, int pad) {
        Tensor b;
        if (!bias.is_none()) {
          auto arr = bias.cast<py::array_t<double, py::array::c_style |
                                                       py::array::forcecast>>();
          std::vector<real_t> values(arr.size());
          for (py::ssize_t i = 0; i < arr.size(); ++i) {
            values[static_cast<std::size_t>(i)] = static_cast<real_t>(arr.data()[i]);
          }
          b = Tensor::from_data({1, static_cast<int>(arr.size()), 1, 1},
                                std::move(values));
        }
        return to_array(conv2d(to_tensor(x), to_tensor(w), b, stride, pad));
      },
      py::arg("x"), py::arg("weight"), py::arg("bias") = py::none(),
      py::arg("stride") = 1, py::arg("pad") = 0,
      "Cross-correlation with an odd square kernel.");
  m.def(
      "relu", [](const Array& x) { return to_array(relu(to_tensor(x))); },
      py::arg("x"));
  m.def(
      "maxpool2d",
      [](const Array& x, int k, int stride, int pad) {
        return to_array(maxpool2d(to_tensor(x), k, stride, pad));
      },
      py::arg("x"), py::arg("k"), py::arg("stride"), py::arg("pad") = 0);
  m.def(
      "concat_channels",
      [](const std::vector<Array>& xs) {
        std::vector<Tensor> ts;
        ts.reserve(xs.size());
        for (const auto& a : xs) ts.push_back(to_tensor(a));
        return to_array(concat_channels(ts));
      },
      py::arg("tensors"));
  m.def(
      "sobel_gradients",
      [](const Array& x) {
        auto [gx, gy] = sobel_gradients(to_tensor(x));
        return py::make_tuple(to_array(gx), to_array(gy));
      },
      py::arg("x"), "Replicate-padded Sobel/8 responses (gx, gy).");

  m.def(
      "depth_loss",
      [](const Array& d, const Array& g, double alpha) {
        return depth_loss(to_tensor(d), to_tensor(g), static_cast<real_t>(alpha))
            .item();
      },
      py::arg("d"), py::arg("g"), py::arg("alpha") = 0.5);
  m.def(
      "grad_loss",
      [](const Array& d, const Array& g, double alpha) {
        return grad_loss(to_tensor(d), to_tensor(g), static_cast<real_t>(alpha))
            .item();
      },
      py::arg("d"), py::arg("g"), py::arg("alpha") = 0.5);
  m.def(
      "normal_loss",
      [](const Array& d, const Array& g) {
        return normal_loss(to_tensor(d), to_tensor(g)).item();
      },
      py::arg("d"), py::arg("g"));
  m.def(
      "evaluate_metrics",
      [](const Array& d, const Array& g) {
        const Metrics m = evaluate_metrics(to_tensor(d), to_tensor(g));
        py::dict out;
        out["rmse"] = m.rmse;
        out["log10"] = m.log10;
        out["delta1"] = m.delta1;
        out["delta2"] = m.delta2;
        out["delta3"] = m.delta3;
        return out;
      },
      py::arg("d"), py::arg("g"));

  m.def(
      "synth_scene",
      [](std::uint64_t seed, int h, int w) {
        const Scene s = synth_scene(seed, h, w);
        return py::make_tuple(to_array(s.rgb), to_array(s.depth));
      },
      py::arg("seed"), py::arg("h") = 64, py::arg("w") = 64,
      "Deterministic synthetic RGB-D scene: (rgb, depth) arrays.");

  m.def("run_gradcheck", [] {
    py::scoped_ostream_redirect redirect;
    return run_gradcheck_suite(std::cout);
  });

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&, std::uint64_t>(),
           py::arg("config_json") = "{}", py::arg("seed") = 0)
      .def("forward", &PyModel::forward, py::arg("img"),
           "Depth pyramid, coarsest to finest, as a list of arrays.")
      .def("predict", &PyModel::predict, py::arg("img"),
           "Full-resolution depth clamped to the metric range.")
      .def("save", &PyModel::save, py::arg("path"))
      .def_property_readonly("parameter_count", &PyModel::parameter_count)
      .def_property_readonly("config_json", &PyModel::config_json);

  m.def(
      "load_model",
      [](const std::string& path) { return PyModel(checkpoint_load(path)); },
      py::arg("path"), "Load a model from a DRT1 checkpoint.");
}
