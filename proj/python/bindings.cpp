#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "evsplat/commands.hpp"
#include "evsplat/error.hpp"
#include "evsplat/io.hpp"
#include "evsplat/loss.hpp"
#include "evsplat/metrics.hpp"
#include "evsplat/rasterizer.hpp"
#include "evsplat/simulator.hpp"
#include "evsplat/trainer.hpp"

namespace py = pybind11;
using namespace evsplat;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image(const Array& a) {
  if (a.ndim() != 2) throw ValidationError("expected a 2-D array");
  Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.pixels().begin());
  return img;
}

Array to_array(const Image& img) {
  Array a({img.height(), img.width()});
  std::copy(img.pixels().begin(), img.pixels().end(), a.mutable_data());
  return a;
}

std::vector<Image> to_images(const std::vector<Array>& arrays) {
  std::vector<Image> out;
  for (const Array& a : arrays) out.push_back(to_image(a));
  return out;
}

Array scene_params(const GaussianScene& s) {
  Array a({static_cast<py::ssize_t>(s.size()), static_cast<py::ssize_t>(kParamsPerGaussian)});
  double* d = a.mutable_data();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const ParamVector p = pack(s.gaussians[i]);
    std::copy(p.begin(), p.end(), d + i * kParamsPerGaussian);
  }
  return a;
}

GaussianScene scene_from_params(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != kParamsPerGaussian) throw ValidationError("expected an (N, 12) array");
  GaussianScene s;
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    ParamVector p;
    std::copy(a.data() + i * kParamsPerGaussian, a.data() + (i + 1) * kParamsPerGaussian, p.begin());
    s.gaussians.push_back(unpack(p));
  }
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Event-supervised Gaussian splatting core";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<RuntimeFailure>(m, "RuntimeFailure", PyExc_RuntimeError);

  py::class_<Intrinsics>(m, "Intrinsics")
      .def(py::init<>())
      .def_static("desk", &Intrinsics::desk, py::arg("size") = 64, py::arg("focal") = 70.0)
      .def_readwrite("fx", &Intrinsics::fx)
      .def_readwrite("fy", &Intrinsics::fy)
      .def_readwrite("cx", &Intrinsics::cx)
      .def_readwrite("cy", &Intrinsics::cy)
      .def_readwrite("width", &Intrinsics::width)
      .def_readwrite("height", &Intrinsics::height);

  py::class_<CameraView>(m, "CameraView")
      .def_readonly("timestamp", &CameraView::timestamp)
      .def_readonly("intrinsics", &CameraView::intrinsics)
      .def_property_readonly("rotation", [](const CameraView& v) { return Eigen::Matrix3d(v.world_to_cam.rotation); })
      .def_property_readonly("translation",
                             [](const CameraView& v) { return Eigen::Vector3d(v.world_to_cam.translation); })
      .def_property_readonly("center", [](const CameraView& v) { return v.world_to_cam.camera_center(); });

  py::class_<SweepTrajectory>(m, "SweepTrajectory")
      .def(py::init<>())
      .def_readwrite("duration_us", &SweepTrajectory::duration_us)
      .def_readwrite("frame_count", &SweepTrajectory::frame_count)
      .def_readwrite("intrinsics", &SweepTrajectory::intrinsics)
      .def_readwrite("arc_degrees", &SweepTrajectory::arc_degrees)
      .def_readwrite("radius", &SweepTrajectory::radius)
      .def_readwrite("elevation_degrees", &SweepTrajectory::elevation_degrees);
  m.def("pose_at", &pose_at, py::arg("trajectory"), py::arg("t_us"));
  m.def("sample_view_times", &sample_view_times, py::arg("trajectory"));

  py::class_<GaussianScene>(m, "GaussianScene")
      .def(py::init([](const Array& params) { return scene_from_params(params); }), py::arg("params"))
      .def("__len__", &GaussianScene::size)
      .def_property_readonly("params", &scene_params, "(N, 12) unconstrained parameters");
  m.def("make_reference_scene", &make_reference_scene, py::arg("count") = 50, py::arg("seed") = 7);
  m.def("random_init", [](std::size_t count, std::uint64_t seed) { return random_init(count, Box{}, seed); },
        py::arg("count"), py::arg("seed") = 0);
  m.def("read_scene", &read_scene, py::arg("path"));
  m.def("write_scene", &write_scene, py::arg("path"), py::arg("scene"));

  m.def(
      "render",
      [](const GaussianScene& s, const CameraView& v) {
        Image img;
        {
          py::gil_scoped_release release;
          img = render(s, v).image;
        }
        return to_array(img);
      },
      py::arg("scene"), py::arg("view"));

  py::class_<EventStream>(m, "EventStream")
      .def("__len__", &EventStream::size)
      .def_property_readonly("width", [](const EventStream& s) { return s.resolution().width; })
      .def_property_readonly("height", [](const EventStream& s) { return s.resolution().height; })
      .def_property_readonly("contrast_threshold", &EventStream::contrast_threshold)
      .def("to_dict", [](const EventStream& s) {
        const std::size_t n = s.size();
        py::array_t<std::uint64_t> t(n);
        py::array_t<std::uint16_t> x(n), y(n);
        py::array_t<std::int8_t> p(n);
        for (std::size_t i = 0; i < n; ++i) {
          const Event& e = s.events()[i];
          t.mutable_at(i) = e.t;
          x.mutable_at(i) = e.x;
          y.mutable_at(i) = e.y;
          p.mutable_at(i) = e.p;
        }
        py::dict d;
        d["t_us"] = t;
        d["x"] = x;
        d["y"] = y;
        d["p"] = p;
        return d;
      });
  m.def("read_events", &read_events, py::arg("path"));
  m.def("write_events", &write_events, py::arg("path"), py::arg("stream"));
  m.def(
      "accumulate", [](const EventStream& s, Timestamp a, Timestamp b) { return to_array(accumulate(s, a, b)); },
      py::arg("stream"), py::arg("t_start"), py::arg("t_end"));
  m.def(
      "noise_filter",
      [](const EventStream& s, Timestamp tau, int radius) { return y_noise_filter(s, tau, radius); },
      py::arg("stream"), py::arg("tau_us") = 10'000, py::arg("radius") = 1);

  m.def(
      "simulate_events",
      [](const std::vector<Array>& frames, const std::vector<Timestamp>& times, double contrast, Timestamp refractory,
         double noise_rate, std::uint64_t seed) {
        SimConfig c;
        c.contrast_threshold = contrast;
        c.refractory_us = refractory;
        c.noise_rate = noise_rate;
        return frames_to_events(to_images(frames), times, c, seed);
      },
      py::arg("frames"), py::arg("times"), py::arg("contrast_threshold") = 0.25, py::arg("refractory_us") = 0,
      py::arg("noise_rate") = 0.0, py::arg("seed") = 0);
  m.def(
      "roundtrip_check",
      [](const std::vector<Array>& frames, const std::vector<Timestamp>& times, double contrast) {
        SimConfig c;
        c.contrast_threshold = contrast;
        return roundtrip_check(to_images(frames), times, c);
      },
      py::arg("frames"), py::arg("times"), py::arg("contrast_threshold") = 0.25);

  m.def("linlog", py::overload_cast<double, double>(&linlog), py::arg("u"), py::arg("threshold") = 20.0);
  m.def(
      "predicted_difference",
      [](const Array& i0, const Array& ik) { return to_array(predicted_difference(to_image(i0), to_image(ik), LossConfig{})); },
      py::arg("image_0"), py::arg("image_k"));
  m.def(
      "total_loss",
      [](const Array& pred, const Array& target, double lambda) {
        LossConfig c;
        c.lambda = lambda;
        const LossValue v = total_loss(to_image(pred), to_image(target), c);
        py::dict d;
        d["total"] = v.total;
        d["event_term"] = v.event_term;
        d["ssim"] = v.dssim_term;
        d["grad"] = to_array(v.d_epred);
        return d;
      },
      py::arg("e_pred"), py::arg("e_gt"), py::arg("lam") = 0.1);
  m.def("psnr", [](const Array& a, const Array& b) { return psnr(to_image(a), to_image(b)); });
  m.def("ssim", [](const Array& a, const Array& b) { return ssim_metric(to_image(a), to_image(b)); });

  m.def("set_worker_threads", &set_worker_threads, py::arg("count"));
  m.def("worker_threads", &worker_threads);

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"evsplat"};
        for (const std::string& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
