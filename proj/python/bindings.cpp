#include <cmath>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cnnide/pipeline.hpp"
#include "cnnide/sim.hpp"

namespace py = pybind11;
using namespace cnnide;

namespace {

using Array3 = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (T, n, n) array <-> frames
std::vector<Field> to_frames(const Array3& a) {
  if (a.ndim() != 3 || a.shape(1) != a.shape(2)) throw py::value_error("expected an array of shape (T, n, n)");
  const GridSpec g(static_cast<int>(a.shape(1)));
  std::vector<Field> out;
  const double* p = a.data();
  for (py::ssize_t t = 0; t < a.shape(0); ++t, p += g.size())
    out.emplace_back(g, Eigen::Map<const Eigen::VectorXd>(p, g.size()));
  return out;
}

py::array_t<double> from_frames(const std::vector<Field>& frames) {
  const int n = frames.empty() ? 0 : frames.front().grid.n();
  py::array_t<double> a({static_cast<py::ssize_t>(frames.size()), static_cast<py::ssize_t>(n),
                         static_cast<py::ssize_t>(n)});
  double* p = a.mutable_data();
  for (const auto& f : frames) {
    std::copy(f.values.data(), f.values.data() + f.values.size(), p);
    p += f.values.size();
  }
  return a;
}

py::array_t<double> from_vectors(const std::vector<Eigen::VectorXd>& v, int n) {
  std::vector<Field> f;
  for (const auto& x : v) f.emplace_back(GridSpec(n), x);
  return from_frames(f);
}

RunConfig config_from(const std::string& text) { return parse_run_config(text, "<python>"); }

}  // namespace

PYBIND11_MODULE(_cnnide, m) {
  m.doc() = "CNN-IDE spatio-temporal forecasting";

  static py::exception<Error> error(m, "CnnideError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error;
      py::object inst = exc(e.what());
      inst.attr("code") = std::string(errc_name(e.code()));
      PyErr_SetObject(error.ptr(), inst.ptr());
    }
  });

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init([](const std::string& text) { return config_from(text); }), py::arg("text") = "")
      .def_static("load", &load_run_config, py::arg("path"))
      .def("dump", &RunConfig::dump)
      .def_readwrite("grid_n", &RunConfig::grid_n)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("sim_T", &RunConfig::sim_T)
      .def_readwrite("sim_direction_deg", &RunConfig::sim_direction_deg)
      .def_readwrite("enkf_n_members", &RunConfig::enkf_n_members)
      .def("__repr__", [](const RunConfig& c) { return "RunConfig(grid_n=" + std::to_string(c.grid_n) + ")"; });

  m.def(
      "simulate",
      [](int n, int T, const std::string& regime, double amplitude, double direction_deg, double diffusion,
         double forcing_sigma2, double forcing_rho, int n_blobs, bool periodic, std::uint64_t seed) {
        SimConfig c;
        c.n = n;
        c.T = T;
        c.regime = parse_regime(regime);
        c.amplitude = amplitude;
        c.direction = std::isnan(direction_deg) ? direction_deg : direction_deg * M_PI / 180.0;
        c.diffusion = diffusion;
        c.forcing = {forcing_sigma2, forcing_rho};
        c.n_blobs = n_blobs;
        c.periodic = periodic;
        c.seed = seed;
        const SimResult s = simulate(c);
        py::dict out;
        out["frames"] = from_frames(s.frames);
        out["flow_x"] = from_vectors(s.flow_x, n);
        out["flow_y"] = from_vectors(s.flow_y, n);
        out["direction_deg"] = s.direction * 180.0 / M_PI;
        return out;
      },
      py::arg("n") = 16, py::arg("T") = 50, py::arg("regime") = "translating-blobs", py::arg("amplitude") = 1.0,
      py::arg("direction_deg") = std::nan(""), py::arg("diffusion") = 0.0, py::arg("forcing_sigma2") = 0.0,
      py::arg("forcing_rho") = 0.1, py::arg("n_blobs") = 1, py::arg("periodic") = false, py::arg("seed") = 1,
      "Synthetic frames (T, n, n) with per-step truth flow in unit-square lengths.");

  m.def(
      "transition_matrix",
      [](const Eigen::VectorXd& theta1, const Eigen::VectorXd& theta2, const Eigen::VectorXd& theta3) {
        const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(theta1.size()))));
        ThetaFields th = constant_theta(GridSpec(n), 1.0, 0.0, 0.0);
        if (theta1.size() != n * n) throw py::value_error("theta fields need n*n entries");
        th.theta1 = theta1;
        th.theta2 = theta2;
        th.theta3 = theta3;
        return transition_matrix(th).K;
      },
      py::arg("theta1"), py::arg("theta2"), py::arg("theta3"), "Dense lattice transition matrix (row-major pixels).");

  m.def("gaspari_cohn", &gaspari_cohn, py::arg("d"), py::arg("c"));
  m.def("crps_ensemble", &crps_ensemble, py::arg("members"), py::arg("y"));
  m.def("quantile", &quantile, py::arg("values"), py::arg("q"));
  m.def(
      "interval_score_90",
      [](const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const Eigen::VectorXd& y) {
        return interval_score_90(lo, hi, y, std::vector<bool>(y.size(), true));
      },
      py::arg("lower"), py::arg("upper"), py::arg("truth"));
  m.def(
      "coverage_90",
      [](const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const Eigen::VectorXd& y) {
        return coverage_90(lo, hi, y, std::vector<bool>(y.size(), true));
      },
      py::arg("lower"), py::arg("upper"), py::arg("truth"));

  m.def(
      "read_sequence",
      [](const std::string& path) {
        const SequenceData d = read_sequence(path);
        std::vector<std::pair<double, double>> rec;
        for (const auto& r : d.records) rec.emplace_back(r.mean, r.sd);
        return py::make_tuple(from_frames(d.frames), rec);
      },
      py::arg("path"), "Frames (T, n, n) and per-frame (mean, sd) standardisation records.");
  m.def(
      "write_sequence",
      [](const std::string& path, const Array3& frames, int bits) {
        write_sequence(path, plain_sequence(to_frames(frames), bits));
      },
      py::arg("path"), py::arg("frames"), py::arg("bits") = 64);

  // pipeline commands; `config` is the text of a run configuration
  auto p = m.def_submodule("pipeline", "file-to-file commands shared with the command-line tool");
  p.def(
      "simulate", [](const RunConfig& c, const std::string& out) { pipeline::cmd_simulate(c, out); },
      py::arg("config"), py::arg("out"));
  p.def(
      "train",
      [](const RunConfig& c, const std::vector<std::string>& data, const std::string& out, const std::string& log) {
        const auto r = pipeline::cmd_train(c, data, out, log, false);
        py::list epochs;
        for (const auto& e : r.result.log) epochs.append(py::make_tuple(e.epoch, e.train_loglik, e.valid_loglik));
        return epochs;
      },
      py::arg("config"), py::arg("data"), py::arg("out"), py::arg("log") = "",
      "Returns (epoch, train, valid) mean log-likelihoods.");
  p.def(
      "fit_residuals",
      [](const RunConfig& c, const std::string& ck, const std::vector<std::string>& data, const std::string& out) {
        const ResidualFit f = pipeline::cmd_fit_residuals(c, ck, data, out);
        return py::make_tuple(f.params.sigma2, f.params.rho);
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("data"), py::arg("out"));
  p.def(
      "filter",
      [](const RunConfig& c, const std::string& ck, const std::string& obs, const std::string& out, int steps,
         const std::string& init) { pipeline::cmd_filter(c, ck, obs, out, steps, init); },
      py::arg("config"), py::arg("checkpoint"), py::arg("obs"), py::arg("out"), py::arg("steps") = 0,
      py::arg("init") = "");
  p.def(
      "forecast",
      [](const RunConfig& c, const std::string& ck, const std::string& state, int h, const std::string& out) {
        pipeline::cmd_forecast(c, ck, state, h, out);
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("state"), py::arg("steps"), py::arg("out"));
  p.def(
      "baseline",
      [](const RunConfig& c, const std::string& obs, const std::string& out, int first, int steps) {
        pipeline::cmd_baseline(c, obs, out, first, steps);
      },
      py::arg("config"), py::arg("obs"), py::arg("out"), py::arg("first") = 0, py::arg("steps") = 0);
  p.def(
      "evaluate",
      [](const RunConfig& c, const std::string& truth, const std::vector<std::string>& preds, const std::string& out,
         const std::string& reference) {
        const auto ev = pipeline::cmd_evaluate(c, truth, preds, out, reference);
        py::dict res;
        for (const auto& r : ev.pooled) {
          py::dict row;
          row["rmspe"] = r.rmspe;
          row["crps"] = r.crps;
          row["is90"] = r.is90;
          row["cov90"] = r.cov90;
          res[py::str(r.method)] = row;
        }
        return res;
      },
      py::arg("config"), py::arg("truth"), py::arg("preds"), py::arg("out"), py::arg("reference") = "",
      "Pooled scores per method.");
  p.def(
      "extract_flow",
      [](const RunConfig& c, const std::string& ck, const std::string& window, const std::string& out) {
        return pipeline::cmd_extract_flow(c, ck, window, out);
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("window"), py::arg("out") = "", "Flow CSV text.");
}
