#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "repose/checkpoint.hpp"
#include "repose/config.hpp"
#include "repose/data.hpp"
#include "repose/heatmap.hpp"
#include "repose/kinematics.hpp"
#include "repose/lossmetrics.hpp"
#include "repose/model.hpp"

namespace py = pybind11;
using namespace repose;

namespace {

Tensor<float> tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
  std::vector<int> dims;
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) dims.push_back(static_cast<int>(arr.shape(i)));
  Tensor<float> t(dims);
  std::copy(arr.data(), arr.data() + t.size(), t.data());
  return t;
}

py::array_t<float> array_from_tensor(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape;
  for (int d : t.dims()) shape.push_back(d);
  py::array_t<float> arr(shape);
  std::copy(t.data(), t.data() + t.size(), arr.mutable_data());
  return arr;
}

class PyModel {
 public:
  PyModel(const std::string& config_json, std::uint64_t seed) {
    ReposeConfig config;
    if (config_json.empty() || config_json == "desk") {
      config = desk_profile().model;
    } else if (config_json == "paper") {
      config = paper_profile().model;
    } else {
      RunConfig rc = parse_run_config(config_json);
      config = rc.model;
    }
    model_ = std::make_unique<ReposeModel<float>>(
        ReposeModel<float>::build(config, default_skeleton(config.keypoints), seed));
  }

  std::vector<std::pair<std::string, py::array_t<float>>> forward(
      const py::array_t<float, py::array::c_style | py::array::forcecast>& images) {
    Tensor<float> input = tensor_from_array(images);
    Tape<float> tape;
    PosePrediction pred = model_->forward(tape, input, kInferenceMode);
    std::vector<std::pair<std::string, py::array_t<float>>> out;
    for (std::size_t i = 0; i < pred.stacks.size(); ++i)
      out.emplace_back(pred.labels[i], array_from_tensor(tape.value(pred.stacks[i])));
    return out;
  }

  std::int64_t param_count() const { return model_->trainable_param_count(); }
  double flops() const { return model_->flops_estimate(); }
  std::string describe() const { return model_->describe(); }
  void save(const std::string& path) const { save_checkpoint(path, model_->params()); }
  void load(const std::string& path) { load_checkpoint(path, model_->params()); }

 private:
  std::unique_ptr<ReposeModel<float>> model_;
};

}  // namespace

PYBIND11_MODULE(_repose, m) {
  m.doc() = "Kinematically structured pose estimation core";

  py::class_<SkeletonGraph>(m, "SkeletonGraph")
      .def_readonly("keypoint_count", &SkeletonGraph::keypoint_count)
      .def_readonly("names", &SkeletonGraph::names)
      .def_readonly("edges", &SkeletonGraph::edges)
      .def_readonly("ordering", &SkeletonGraph::ordering)
      .def_readonly("flip_pairs", &SkeletonGraph::flip_pairs)
      .def("neighbors", &SkeletonGraph::neighbors)
      .def("index_of", &SkeletonGraph::index_of);

  m.def("default_skeleton", &default_skeleton, py::arg("keypoints"));
  m.def("collision_probability", &collision_probability, py::arg("grid_side"), py::arg("keypoints"));
  m.def("build_schedule", [](const SkeletonGraph& g) {
    std::vector<std::tuple<int, std::string, int>> steps;
    for (const auto& s : build_schedule(g).steps)
      steps.emplace_back(s.keypoint, s.pass == UpdatePass::forward ? "forward" : "reverse", s.slot);
    return steps;
  });

  m.def(
      "synth_heatmap",
      [](double x, double y, int side, double sigma) {
        return array_from_tensor(synth_heatmap<float>({x, y, true}, side, sigma));
      },
      py::arg("x"), py::arg("y"), py::arg("side"), py::arg("sigma"));

  m.def("decode_peak", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& grid) {
    PeakDecode p = decode_peak(tensor_from_array(grid));
    return py::make_tuple(p.x, p.y, p.confidence, p.detected);
  });

  m.def("partial_mse", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& pred,
                          const py::array_t<float, py::array::c_style | py::array::forcecast>& gt,
                          const std::vector<std::vector<int>>& masks) {
    std::vector<AnnotationMask> ms;
    for (const auto& row : masks) {
      AnnotationMask am;
      for (int v : row) am.bits.push_back(v ? 1 : 0);
      ms.push_back(std::move(am));
    }
    return partial_mse(tensor_from_array(pred), tensor_from_array(gt), ms);
  });

  m.def(
      "synth_dataset",
      [](int count, int keypoints, int canvas, std::uint64_t seed, double unannotated_fraction) {
        Rng rng(seed);
        SynthConfig cfg;
        cfg.count = count;
        cfg.keypoints = keypoints;
        cfg.canvas = canvas;
        cfg.unannotated_fraction = unannotated_fraction;
        auto examples = synth_dataset(rng, cfg);
        py::array_t<std::uint8_t> images({count, canvas, canvas, 3});
        py::array_t<double> points({count, keypoints, 2});
        py::array_t<bool> annotated({count, keypoints});
        for (int i = 0; i < count; ++i) {
          const auto& ex = examples[static_cast<std::size_t>(i)];
          std::copy(ex.image.rgb.begin(), ex.image.rgb.end(),
                    images.mutable_data() + static_cast<std::size_t>(i) * canvas * canvas * 3);
          for (int k = 0; k < keypoints; ++k) {
            points.mutable_at(i, k, 0) = ex.keypoints[static_cast<std::size_t>(k)].x;
            points.mutable_at(i, k, 1) = ex.keypoints[static_cast<std::size_t>(k)].y;
            annotated.mutable_at(i, k) = ex.keypoints[static_cast<std::size_t>(k)].annotated;
          }
        }
        return py::make_tuple(images, points, annotated);
      },
      py::arg("count"), py::arg("keypoints") = 14, py::arg("canvas") = 80, py::arg("seed") = 7,
      py::arg("unannotated_fraction") = 0.0);

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&, std::uint64_t>(), py::arg("config") = "desk", py::arg("seed") = 1)
      .def("forward", &PyModel::forward, py::arg("images"))
      .def("param_count", &PyModel::param_count)
      .def("flops", &PyModel::flops)
      .def("describe", &PyModel::describe)
      .def("save", &PyModel::save)
      .def("load", &PyModel::load);

  m.def("desk_config_json", [] { return serialize_run_config(desk_profile()); });
  m.def("paper_config_json", [] { return serialize_run_config(paper_profile()); });
}
