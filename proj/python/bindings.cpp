#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mtface/checkpoint.hpp"
#include "mtface/error.hpp"
#include "mtface/pipeline.hpp"
#include "mtface/synth.hpp"

namespace py = pybind11;
using namespace mtface;

namespace {

Image image_from_array(const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw Error(ErrorKind::InvalidInput, "image must be an HxWx3 uint8 array");
  Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.rgb.begin());
  return img;
}

py::dict to_dict(const FrameResult& r) {
  py::dict d;
  d["face_id"] = r.face_id;
  d["box"] = py::make_tuple(r.box.x, r.box.y, r.box.w, r.box.h, r.box.confidence);
  d["success"] = r.success;
  if (!r.success) {
    d["error"] = r.error;
    return d;
  }
  py::array_t<double> lm({static_cast<py::ssize_t>(r.landmarks.size()), py::ssize_t{2}});
  auto v = lm.mutable_unchecked<2>();
  for (size_t i = 0; i < r.landmarks.size(); ++i) {
    v(static_cast<py::ssize_t>(i), 0) = r.landmarks.coords[i][0];
    v(static_cast<py::ssize_t>(i), 1) = r.landmarks.coords[i][1];
  }
  d["landmarks"] = lm;
  d["au_probs"] = r.au_probs;
  d["gaze"] = r.gaze.as_array();
  d["emotion_probs"] = r.emotion_probs;
  d["emotion_label"] = r.emotion_label;
  return d;
}

std::unique_ptr<Model> load_model(const std::string& path) {
  const Checkpoint ck = load_checkpoint(path);
  auto model = std::make_unique<Model>(config_from_checkpoint(ck));
  load_parameters(*model, ck);
  return model;
}

py::list infer(Model& model, const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& image,
               const std::optional<std::vector<std::array<double, 4>>>& boxes) {
  const Image img = image_from_array(image);
  std::vector<FaceBox> faces;
  if (boxes)
    for (const auto& b : *boxes) faces.push_back({b[0], b[1], b[2], b[3], 1.0});
  else
    faces.push_back(full_frame_box(img));
  std::vector<FrameResult> rows(faces.size());
  std::vector<AlignedFace> crops;
  std::vector<size_t> slots;
  for (size_t i = 0; i < faces.size(); ++i) {
    rows[i].face_id = static_cast<int>(i);
    rows[i].box = faces[i];
    try {
      crops.push_back(align_crop(img, faces[i], model.config().landmark.input_size));
      slots.push_back(i);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateInput) throw;
      rows[i].error = e.what();
    }
  }
  {
    py::gil_scoped_release release;
    const auto out = run_inference(model, crops);
    for (size_t k = 0; k < slots.size(); ++k) {
      FrameResult& r = rows[slots[k]];
      const FaceBox box = r.box;
      const int id = r.face_id;
      r = out[k];
      r.box = box;
      r.face_id = id;
    }
  }
  py::list result;
  for (const auto& r : rows) result.append(to_dict(r));
  return result;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-task face analysis: landmarks, action units, gaze and emotion";

  // the type object lives as long as the interpreter; the handle is leaked on purpose
  static PyObject* error_type = py::exception<Error>(m, "Error", PyExc_RuntimeError).release().ptr();
  // message is prefixed with the error kind, e.g. "configuration: ..."
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error_type, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  py::class_<Model, std::unique_ptr<Model>>(m, "Model")
      .def_static("load", &load_model, py::arg("path"), "Load weights written by `mtface train`.")
      .def("infer", &infer, py::arg("image"), py::arg("boxes") = py::none(),
           "Run every head on an HxWx3 uint8 image. `boxes` holds (x, y, w, h) tuples; "
           "the whole image is one face when omitted.")
      .def_property_readonly("num_landmarks", [](const Model& md) { return md.config().landmark.num_landmarks; })
      .def_property_readonly("input_size", [](const Model& md) { return md.config().landmark.input_size; })
      .def_property_readonly("au_ids", [](const Model& md) { return md.config().au.ids; })
      .def_property_readonly("emotion_classes", [](const Model& md) { return md.config().emotion.class_names; })
      .def("parameter_count", [](const Model& md) { return Model::parameter_count(md.config()); });

  m.def(
      "inspect",
      [](const std::string& path) {
        const ParameterCount c = count_parameters(load_checkpoint(path));
        return py::make_tuple(c.per_module, c.total);
      },
      py::arg("path"), "Per-module and total parameter counts of a checkpoint.");

  m.def(
      "synth",
      [](const std::string& out_dir, int n, uint64_t seed, const std::set<std::string>& tasks, int size) {
        SynthSpec spec;
        spec.n = n;
        spec.seed = seed;
        spec.image_size = size;
        if (!tasks.empty()) spec.tasks = tasks;
        const SynthManifests mf = generate_synthetic_dataset(spec, out_dir);
        py::dict d;
        for (const auto& [k, v] : {std::pair{"landmark", mf.landmark}, std::pair{"au", mf.au},
                                   std::pair{"gaze", mf.gaze}, std::pair{"emotion", mf.emotion}})
          if (!v.empty()) d[k] = v;
        return d;
      },
      py::arg("out_dir"), py::arg("n") = 32, py::arg("seed") = 7, py::arg("tasks") = std::set<std::string>{},
      py::arg("size") = 64, "Write a seeded synthetic corpus; returns the manifest paths.");

  m.def(
      "combined_loss",
      [](std::array<double, 3> losses, std::array<double, 3> s) { return combined_loss(losses, {s}).value; },
      py::arg("losses"), py::arg("log_vars") = std::array<double, 3>{});

  m.def("orientation_bin", [](double deg) { return std::string(to_string(orientation_bin(deg))); }, py::arg("deg"));
  m.def("angles_to_vector", &angles_to_vector, py::arg("yaw"), py::arg("pitch"));
  m.def(
      "angular_error_deg",
      [](std::array<double, 4> pred, std::array<double, 4> gt) {
        return angular_error_deg(GazeAngles::from_array(pred), GazeAngles::from_array(gt)).mean_deg;
      },
      py::arg("pred"), py::arg("gt"));
}
