#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "agbseq/eval.hpp"
#include "agbseq/ols.hpp"
#include "agbseq/patches.hpp"
#include "agbseq/pipeline.hpp"
#include "agbseq/plots.hpp"
#include "agbseq/raster.hpp"
#include "agbseq/speckle.hpp"
#include "agbseq/synth.hpp"

namespace py = pybind11;
using namespace agbseq;

namespace {

py::array_t<double> raster_to_numpy(const Raster& r) {
  py::array_t<double> a({r.height, r.width, r.channels});
  std::copy(r.data.begin(), r.data.end(), a.mutable_data());
  return a;
}

Raster raster_from_numpy(py::array_t<double, py::array::c_style | py::array::forcecast> a,
                         double pixel_size, double origin_x, double origin_y) {
  if (a.ndim() != 2 && a.ndim() != 3)
    throw std::invalid_argument("expected a (H, W) or (H, W, C) array");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  Raster r(w, h, c, pixel_size, origin_x, origin_y);
  std::copy(a.data(), a.data() + r.data.size(), r.data.begin());
  return r;
}

DesignMatrix design_from_dict(const py::dict& columns, const std::vector<double>& response) {
  DesignMatrix X;
  for (auto item : columns) {
    X.names.push_back(py::cast<std::string>(item.first));
    X.columns.push_back(py::cast<std::vector<double>>(item.second));
  }
  X.response = response;
  return X;
}

py::dict model_to_dict(const SqrtRegressionModel& m) {
  py::dict d;
  d["intercept"] = m.intercept;
  d["coefficients"] = m.coefficients;
  d["mse"] = m.mse;
  d["selected"] = m.selected;
  return d;
}

SqrtRegressionModel model_from_dict(const py::dict& d) {
  SqrtRegressionModel m;
  m.intercept = py::cast<double>(d["intercept"]);
  m.coefficients = py::cast<std::map<std::string, double>>(d["coefficients"]);
  m.mse = py::cast<double>(d["mse"]);
  m.selected = py::cast<std::vector<std::string>>(d["selected"]);
  return m;
}

}  // namespace

PYBIND11_MODULE(_agbseq, m) {
  m.doc() = "SAR-to-AGB regression pipelines";

  py::class_<Raster>(m, "Raster")
      .def(py::init([](py::array_t<double> a, double ps, double ox, double oy) {
             return raster_from_numpy(a, ps, ox, oy);
           }),
           py::arg("array"), py::arg("pixel_size") = 1.0, py::arg("origin_x") = 0.0,
           py::arg("origin_y") = 0.0)
      .def_readonly("width", &Raster::width)
      .def_readonly("height", &Raster::height)
      .def_readonly("channels", &Raster::channels)
      .def_readonly("pixel_size", &Raster::pixel_size)
      .def_readonly("origin_x", &Raster::origin_x)
      .def_readonly("origin_y", &Raster::origin_y)
      .def_readwrite("nodata", &Raster::nodata)
      .def("to_numpy", &raster_to_numpy);

  m.def("load_raster", &load_raster, py::arg("path"));
  m.def("save_raster", &save_raster, py::arg("raster"), py::arg("path"));
  m.def("to_db", &to_db);
  m.def("from_db", &from_db);
  m.def("resample_cubic", &resample_cubic, py::arg("raster"), py::arg("target_pixel_size"),
        py::arg("a") = -0.5);
  m.def("make_false_colour", &make_false_colour, py::arg("vv"), py::arg("vh"));
  m.def(
      "refined_lee",
      [](const Raster& r, int window, double noise_cv) {
        return refined_lee(r, SpeckleConfig{window, noise_cv});
      },
      py::arg("raster"), py::arg("window") = 7, py::arg("noise_cv") = 0.5);

  py::class_<PlotRecord>(m, "PlotRecord")
      .def(py::init<>())
      .def_readwrite("id", &PlotRecord::id)
      .def_readwrite("centre_x", &PlotRecord::centre_x)
      .def_readwrite("centre_y", &PlotRecord::centre_y)
      .def_readwrite("radius", &PlotRecord::radius)
      .def_readwrite("agb", &PlotRecord::agb);
  m.def("load_plots", &load_plots, py::arg("path"), py::arg("agb_ceiling") = 500.0);
  m.def("save_plots", &save_plots, py::arg("plots"), py::arg("path"));
  m.def("area_weighted_mean", &area_weighted_mean, py::arg("raster"), py::arg("plot"),
        py::arg("subsamples") = 32, py::arg("channel") = 0);

  m.def(
      "fit_sqrt_model",
      [](const py::dict& columns, const std::vector<double>& response, double alpha) {
        return model_to_dict(fit_sqrt_model(design_from_dict(columns, response), alpha));
      },
      py::arg("columns"), py::arg("response"), py::arg("alpha") = 0.05);
  m.def(
      "predict_agb",
      [](const py::dict& model, const std::map<std::string, double>& regressors) {
        return predict_agb(model_from_dict(model), regressors);
      },
      py::arg("model"), py::arg("regressors"));
  m.def(
      "loocv_rmse",
      [](const py::dict& columns, const std::vector<double>& response,
         const std::vector<std::string>& cols) {
        return loocv_rmse(design_from_dict(columns, response), cols);
      },
      py::arg("columns"), py::arg("response"), py::arg("selected"));
  m.def("f_test_p_value", &f_test_p_value, py::arg("f"), py::arg("df"));

  m.def("pearson_r", &pearson_r);
  m.def("quartile_rmse", &quartile_rmse, py::arg("reference"), py::arg("predicted"));
  m.def(
      "fit_calibration",
      [](const std::vector<double>& pred, const std::vector<double>& z, const std::string& method) {
        auto c = fit_calibration(pred, z, calibration_method_from_string(method));
        py::dict d;
        d["method"] = to_string(c.method);
        d["param1"] = c.param1;
        d["param2"] = c.param2;
        d["offset"] = c.offset;
        d["sse"] = c.sse;
        d["converged"] = c.converged;
        return d;
      },
      py::arg("pred"), py::arg("reference"), py::arg("method") = "linear");

  py::class_<SceneConfig>(m, "SceneConfig")
      .def(py::init<>())
      .def_readwrite("width", &SceneConfig::width)
      .def_readwrite("height", &SceneConfig::height)
      .def_readwrite("pixel_size_m", &SceneConfig::pixel_size_m)
      .def_readwrite("n_plots", &SceneConfig::n_plots)
      .def_readwrite("surrogate_sigma", &SceneConfig::surrogate_sigma);
  py::class_<SceneBundle>(m, "SceneBundle")
      .def_readonly("agb_truth", &SceneBundle::agb_truth)
      .def_readonly("vv", &SceneBundle::vv)
      .def_readonly("vh", &SceneBundle::vh)
      .def_readonly("als_surrogate", &SceneBundle::als_surrogate)
      .def_readonly("plots", &SceneBundle::plots)
      .def_readonly("warnings", &SceneBundle::warnings);
  m.def("gen_scene", &gen_scene, py::arg("seed"), py::arg("config") = SceneConfig{});

  m.def(
      "run_nonsequential",
      [](const std::string& config_path, const std::string& out_dir) {
        auto cfg = pipeline::config_from_json(config_path);
        cfg.out_dir = out_dir;
        auto res = pipeline::run_nonsequential(cfg);
        py::dict d;
        d["model"] = model_to_dict(res.model);
        d["r"] = res.vs_plots.r;
        d["rmse"] = res.vs_plots.rmse;
        d["loocv_rmse"] = res.loocv_rmse;
        return d;
      },
      py::arg("config_path"), py::arg("out_dir"));
}
