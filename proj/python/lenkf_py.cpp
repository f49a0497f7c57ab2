// Copyright 2026 The lenkf Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "lenkf/baselines.hpp"
#include "lenkf/experiment.hpp"
#include "lenkf/lenkf_assim.hpp"
#include "lenkf/lenkf_inverse.hpp"
#include "lenkf/metrics.hpp"
#include "lenkf/models.hpp"

namespace py = pybind11;
using namespace lenkf;

namespace {

CovSpec as_cov(const DenseMatrix& m) { return CovSpec::dense(m); }

ExperimentConfig resolve_config(const std::string& config) {
  const std::filesystem::path p(config);
  if (std::filesystem::exists(p)) return load_config(p);
  const auto preset = default_preset_dir() / (config + ".json");
  if (std::filesystem::exists(preset)) return load_config(preset);
  return parse_config(config);
}

}  // namespace

PYBIND11_MODULE(_lenkf, m) {
  m.doc() = "Langevinized ensemble Kalman filter core";

  py::register_exception<Error>(m, "LenkfError", PyExc_RuntimeError);

  m.def("version", &library_version);

  m.def("kalman_gain",
        [](const DenseMatrix& q, const DenseMatrix& h, const DenseMatrix& r) {
          return kalman_gain(as_cov(q), h, as_cov(r));
        },
        py::arg("q"), py::arg("h"), py::arg("r"), "K = Q H^T (H Q H^T + R)^{-1}.");
  m.def("lenkf_forecast", &lenkf_forecast_with_noise, py::arg("x"), py::arg("grad"), py::arg("eps"),
        py::arg("n_over_N"), py::arg("w"));
  m.def("lenkf_analysis", &lenkf_analysis_with_noise, py::arg("x_forecast"), py::arg("gain"),
        py::arg("y"), py::arg("h"), py::arg("v"));
  m.def("assim_forecast",
        [](const Vector& x, const Vector& prev, const DenseMatrix& u, double eps, double ratio,
           const Vector& w) { return assim_forecast_with_noise(x, prev, as_cov(u), eps, ratio, w); },
        py::arg("x"), py::arg("propagated_prev"), py::arg("u"), py::arg("eps"), py::arg("n_over_N"),
        py::arg("w"));
  m.def("resample_probabilities",
        [](const DenseMatrix& pool, const Vector& x, const DenseMatrix& u) {
          const PropagatedPool pp{pool, pool};
          const Vector lw = resample_log_weights(pp, x, as_cov(u));
          const double lse = log_sum_exp(as_span(lw));
          return Vector((lw.array() - lse).exp());
        },
        py::arg("propagated_pool"), py::arg("x"), py::arg("u"),
        "Importance-resampling probabilities of each (propagated) pool column.");

  m.def("sgld_step", &sgld_step_with_noise, py::arg("x"), py::arg("grad"), py::arg("eps"), py::arg("z"));
  m.def("psgld_step",
        [](const Vector& x, const Vector& g, double eps, const Vector& v, double lambda, double beta,
           const Vector& z) {
          PsgldState st{v};
          const Vector out = psgld_step_with_noise(x, g, eps, st, {lambda, beta}, z);
          return std::make_tuple(out, st.v);
        },
        py::arg("x"), py::arg("grad"), py::arg("eps"), py::arg("v"), py::arg("lam") = 1e-5,
        py::arg("beta") = 0.99, py::arg("z"), "Returns (x', v').");
  m.def("sgnht_step",
        [](const Vector& x, const Vector& u, double xi, const Vector& g, double eps, double a,
           const Vector& z) {
          SgnhtState st{u, xi};
          const Vector out = sgnht_step_with_noise(x, st, g, eps, a, z);
          return std::make_tuple(out, st.momentum, st.thermostat);
        },
        py::arg("x"), py::arg("momentum"), py::arg("thermostat"), py::arg("grad"), py::arg("eps"),
        py::arg("diffusion"), py::arg("z"), "Returns (x', u', xi').");

  m.def("lorenz96_rhs", &lorenz96_rhs, py::arg("x"), py::arg("forcing") = 8.0);
  m.def("lorenz96_step",
        [](const Vector& x, double forcing, double dt) {
          return rk4_step([forcing](const Vector& s) { return lorenz96_rhs(s, forcing); }, x, dt);
        },
        py::arg("x"), py::arg("forcing") = 8.0, py::arg("dt") = 0.01);
  m.def("mixture_log_prior_grad",
        [](const Vector& beta, double p0, double t1, double t2) {
          return mixture_log_prior_grad(beta, {p0, t1, t2});
        },
        py::arg("beta"), py::arg("p0") = 0.0005, py::arg("tau1_sq") = 0.01, py::arg("tau2_sq") = 1.0);

  m.def("rmse", &rmse, py::arg("estimate"), py::arg("truth"));
  m.def("coverage_probability",
        [](const DenseMatrix& s, const Vector& truth, double level, const std::string& mode) {
          return coverage_probability(s, truth, level,
                                      mode == "gaussian" ? IntervalMode::Gaussian : IntervalMode::Percentile);
        },
        py::arg("samples"), py::arg("truth"), py::arg("level") = 0.95, py::arg("mode") = "percentile");
  m.def("inclusion_probability",
        [](double beta, double p0, double t1, double t2) {
          return inclusion_probability(beta, {p0, t1, t2});
        },
        py::arg("beta"), py::arg("p0") = 0.0005, py::arg("tau1_sq") = 0.01, py::arg("tau2_sq") = 1.0);
  m.def("ess", [](const std::vector<double>& lw) { return ess(lw); }, py::arg("log_weights"));

  m.def("presets", [] { return list_presets(default_preset_dir()); });
  m.def("validate_config", [](const std::string& c) { return config_to_json(resolve_config(c)); },
        py::arg("config"), "Resolved config JSON for a path, preset name or JSON text.");
  m.def("run_experiment",
        [](const std::string& c, const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
          ExperimentConfig cfg = resolve_config(c);
          if (seed) cfg.seed = *seed;
          RunRecord rec;
          {
            py::gil_scoped_release release;
            rec = execute_experiment(cfg, out);
          }
          std::vector<std::tuple<Index, std::string, std::string, double>> rows;
          rows.reserve(rec.metrics.size());
          for (const auto& r : rec.metrics) rows.emplace_back(r.stage, r.metric, r.aux, r.value);
          return rows;
        },
        py::arg("config"), py::arg("out_dir"), py::arg("seed") = std::nullopt,
        "Runs an experiment and returns its metric rows (t, metric, aux, value).");
}
