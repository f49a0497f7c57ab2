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

#include "lenkf/enkf.hpp"

#include <string>

namespace lenkf {

DenseMatrix measurement_matrix(const StateSpaceModel& model, const Observation& obs) {
  if (model.measurement_rows) return model.measurement_rows(obs.indices);
  return obs.selection_matrix(model.dim_state);
}

Ensemble enkf_forecast(const Ensemble& ens, const StateSpaceModel& model, const Streams& streams) {
  require(ens.dim() == model.dim_state, ErrorCode::DimensionMismatch,
          "enkf_forecast: ensemble dimension differs from the model");
  Ensemble out;
  out.stage = ens.stage + 1;
  out.members.resize(ens.dim(), ens.size());
  const Vector zero = Vector::Zero(ens.dim());
  for (Index i = 0; i < ens.size(); ++i) {
    auto rng = streams.at(out.stage, 0, i, Purpose::Handoff);
    out.members.col(i) =
        model.apply_propagator(ens.members.col(i)) + sample_gaussian(zero, model.process_cov, rng);
  }
  return out;
}

DenseMatrix enkf_gain(const DenseMatrix& forecast, const DenseMatrix& h, const CovSpec& gamma) {
  require(forecast.cols() >= 2, ErrorCode::EnsembleTooSmall, "EnKF needs m >= 2");
  require(h.cols() == forecast.rows(), ErrorCode::DimensionMismatch,
          "enkf_gain: H has " + std::to_string(h.cols()) + " columns, state has dimension " +
              std::to_string(forecast.rows()));
  require(gamma.dim() == h.rows(), ErrorCode::DimensionMismatch,
          "enkf_gain: Gamma dimension differs from H rows");
  // C H^T from the anomalies, never forming C itself.
  const DenseMatrix anomalies = forecast.colwise() - forecast.rowwise().mean();
  const DenseMatrix ha = h * anomalies;
  const double denom = static_cast<double>(forecast.cols() - 1);
  const DenseMatrix cht = anomalies * ha.transpose() / denom;
  DenseMatrix inner = ha * ha.transpose() / denom;
  gamma.add_to(inner);
  inner = 0.5 * (inner + inner.transpose());
  return solve_spd(inner, cht.transpose()).transpose();
}

Ensemble enkf_analysis(const Ensemble& forecast, const Vector& y, const DenseMatrix& h,
                       const CovSpec& gamma, const Streams& streams, Index iteration) {
  require(y.size() == h.rows(), ErrorCode::DimensionMismatch,
          "enkf_analysis: observation length differs from H rows");
  const DenseMatrix gain = enkf_gain(forecast.members, h, gamma);
  const Vector zero = Vector::Zero(y.size());
  Ensemble out = forecast;
  for (Index i = 0; i < forecast.size(); ++i) {
    auto rng = streams.at(forecast.stage, iteration, i, Purpose::Analysis);
    const Vector eta = sample_gaussian(zero, gamma, rng);
    out.members.col(i) += gain * (y - h * forecast.members.col(i) - eta);
  }
  return out;
}

Ensemble enkf_step(const Ensemble& ens, const StateSpaceModel& model, const Vector& y,
                   const DenseMatrix& h, const CovSpec& gamma, const Streams& streams) {
  return enkf_analysis(enkf_forecast(ens, model, streams), y, h, gamma, streams);
}

FilterResult run_enkf_assimilation(const StateSpaceModel& model,
                                   std::span<const Observation> observations,
                                   const GaussianPrior& initial, const EnkfAssimConfig& cfg,
                                   const Streams& streams, const EnsembleObserver& observer) {
  require(cfg.ensemble_size >= 2, ErrorCode::EnsembleTooSmall, "EnKF needs m >= 2");
  require(cfg.iterations >= 1 && cfg.burn_in >= 0 && cfg.burn_in < cfg.iterations,
          ErrorCode::InvalidArgument, "EnKF: need 0 <= burn_in < iterations");
  require(model.obs_block_cov.is_scaled_identity(), ErrorCode::InvalidArgument,
          "EnKF assimilation expects a scaled-identity observation covariance");
  const double obs_var = model.obs_block_cov.identity_scale();

  FilterResult result;
  DenseMatrix anchors;
  // Stage 1 forecast ensemble is a draw from the stage-1 prior.
  Ensemble ens = draw_ensemble(initial, cfg.ensemble_size, streams, 1);
  const Index keep = cfg.iterations - cfg.burn_in;
  for (std::size_t s = 0; s < observations.size(); ++s) {
    const Index t = static_cast<Index>(s) + 1;
    if (t > 1) {
      if (cfg.sweep == EnkfSweep::Langevin) {
        anchors.resize(ens.dim(), ens.size());
        for (Index i = 0; i < ens.size(); ++i)
          anchors.col(i) = model.apply_propagator(ens.members.col(i));
      }
      ens = enkf_forecast(ens, model, streams);
    }
    const Observation& obs = observations[s];
    const DenseMatrix h = measurement_matrix(model, obs);
    const CovSpec gamma = CovSpec::scaled_identity(obs_var, h.rows());
    StageSamples st;
    st.samples.resize(model.dim_state, keep * cfg.ensemble_size);
    const Ensemble forecast = ens;
    for (Index k = 1; k <= cfg.iterations; ++k) {
      if (cfg.sweep == EnkfSweep::Langevin) {
        const double eps = cfg.schedule.at(static_cast<double>(t), static_cast<double>(k));
        const CovSpec q = CovSpec::scaled_identity(eps, ens.dim());
        const Vector zero = Vector::Zero(ens.dim());
        for (Index i = 0; i < ens.size(); ++i) {
          const Vector x = ens.members.col(i);
          const Vector drift = t > 1 ? Vector(-model.process_cov.solve(Vector(x - anchors.col(i))))
                                     : initial.log_grad(x);
          auto rng = streams.at(t, k, i, Purpose::Forecast);
          ens.members.col(i) = x + (0.5 * eps) * drift + sample_gaussian(zero, q, rng);
        }
      }
      ens = enkf_analysis(cfg.sweep == EnkfSweep::Restart ? forecast : ens, obs.values, h, gamma,
                          streams, k);
      if (k > cfg.burn_in)
        st.samples.middleCols((k - cfg.burn_in - 1) * cfg.ensemble_size, cfg.ensemble_size) =
            ens.members;
      if (observer) observer(t, k, ens);
    }
    st.estimate = st.samples.rowwise().mean();
    result.stages.push_back(std::move(st));
  }
  return result;
}

}  // namespace lenkf
