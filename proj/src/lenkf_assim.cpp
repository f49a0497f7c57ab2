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

#include "lenkf/lenkf_assim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "lenkf/metrics.hpp"

namespace lenkf {

PropagatedPool propagate_pool(const StagePool& pool, const VectorField& g) {
  PropagatedPool out;
  out.samples = pool.samples;
  out.propagated.resize(pool.samples.rows(), pool.samples.cols());
  for (Index j = 0; j < pool.size(); ++j)
    out.propagated.col(j) = g ? g(pool.samples.col(j)) : Vector(pool.samples.col(j));
  return out;
}

Vector resample_log_weights(const PropagatedPool& pool, const Vector& x_current,
                            const CovSpec& u) {
  require(pool.size() > 0, ErrorCode::EmptyPool, "importance resampling from an empty pool");
  require(pool.propagated.rows() == x_current.size() && u.dim() == x_current.size(),
          ErrorCode::DimensionMismatch, "importance_resample: dimension mismatch");
  const DenseMatrix diff = pool.propagated.colwise() - x_current;
  const DenseMatrix whitened = u.solve(diff);
  return -0.5 * diff.cwiseProduct(whitened).colwise().sum().transpose();
}

ImportanceSampler::ImportanceSampler(const PropagatedPool& pool, const Vector& x_current,
                                     const CovSpec& u)
    : pool_(&pool) {
  Vector logw = resample_log_weights(pool, x_current, u);
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (Index j = 0; j < logw.size(); ++j)
    if (std::isnan(logw[j])) logw[j] = kNegInf;
  const double mx = logw.maxCoeff();
  const double lse = std::isfinite(mx) ? log_sum_exp(as_span(logw)) : kNegInf;
  if (!std::isfinite(lse)) {
    degenerate_ = true;
    ess_ = static_cast<double>(pool.size());
    return;
  }
  cumulative_.resize(static_cast<std::size_t>(pool.size()));
  double acc = 0.0;
  for (Index j = 0; j < pool.size(); ++j) {
    acc += std::exp(logw[j] - lse);
    cumulative_[static_cast<std::size_t>(j)] = acc;
  }
  ess_ = lenkf::ess(as_span(logw));
}

ResampleResult ImportanceSampler::draw(RngStream& rng) const {
  const double u = rng.uniform();
  const Index size = pool_->size();
  ResampleResult res;
  res.ess = ess_;
  res.degenerate = degenerate_;
  if (degenerate_) {
    res.index = std::min<Index>(static_cast<Index>(u * static_cast<double>(size)), size - 1);
  } else {
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    res.index = std::min<Index>(static_cast<Index>(it - cumulative_.begin()), size - 1);
  }
  res.sample = pool_->samples.col(res.index);
  res.propagated = pool_->propagated.col(res.index);
  return res;
}

ResampleResult importance_resample(const PropagatedPool& pool, const Vector& x_current,
                                   const CovSpec& u, RngStream& rng) {
  return ImportanceSampler(pool, x_current, u).draw(rng);
}

ResampleResult importance_resample(const StagePool& pool, const Vector& x_current,
                                   const VectorField& g, const CovSpec& u, RngStream& rng) {
  require(pool.size() > 0, ErrorCode::EmptyPool, "importance resampling from an empty pool");
  return importance_resample(propagate_pool(pool, g), x_current, u, rng);
}

Vector assim_forecast_with_noise(const Vector& x, const Vector& propagated_prev, const CovSpec& u,
                                 double eps, double n_over_N, const Vector& w) {
  const Vector drift = -u.solve(Vector(x - propagated_prev));
  return lenkf_forecast_with_noise(x, drift, eps, n_over_N, w);
}

Vector assim_forecast(const Vector& x, const Vector& propagated_prev, const CovSpec& u, double eps,
                      double n_over_N, RngStream& rng) {
  require(eps > 0.0, ErrorCode::InvalidArgument, "assim_forecast: eps must be > 0");
  Vector w(x.size());
  rng.fill_normal({w.data(), static_cast<std::size_t>(w.size())});
  w *= std::sqrt(n_over_N * eps);
  return assim_forecast_with_noise(x, propagated_prev, u, eps, n_over_N, w);
}

Ensemble stage_handoff(const Ensemble& ens, const StateSpaceModel& model, const Streams& streams,
                       Index stage) {
  Ensemble out = ens;
  out.stage = stage;
  const Vector zero = Vector::Zero(ens.dim());
  for (Index i = 0; i < ens.size(); ++i) {
    auto rng = streams.at(stage, 0, i, Purpose::Handoff);
    out.members.col(i) =
        model.apply_propagator(ens.members.col(i)) + sample_gaussian(zero, model.process_cov, rng);
  }
  return out;
}

void AssimConfig::validate() const {
  require(ensemble_size >= 1, ErrorCode::EnsembleTooSmall, "ensemble size must be >= 1");
  require(iterations >= 2 && burn_in >= 1 && burn_in < iterations, ErrorCode::InvalidArgument,
          "assimilation needs 1 <= burn_in < iterations");
  require(batch_size >= 0 && stages >= 0, ErrorCode::InvalidArgument,
          "batch_size and stages must be >= 0");
}

namespace {

Index stage_count(const AssimConfig& cfg, std::size_t supplied) {
  const auto avail = static_cast<Index>(supplied);
  if (cfg.stages == 0) return avail;
  require(cfg.stages <= avail, ErrorCode::StreamExhausted,
          "requested " + std::to_string(cfg.stages) + " stages, only " + std::to_string(avail) +
              " supplied");
  return cfg.stages;
}

// Within-stage subsample of n_t of the N_t observation rows.
std::vector<Index> batch_rows(Index n_total, Index n_batch, const Streams& streams, Index t,
                              Index k) {
  std::vector<Index> rows(static_cast<std::size_t>(n_total));
  std::iota(rows.begin(), rows.end(), Index{0});
  if (n_batch == 0 || n_batch >= n_total) return rows;
  auto rng = streams.at(t, k, 0, Purpose::Batch);
  for (Index i = 0; i < n_batch; ++i) {
    const auto j = i + static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(n_total - i)));
    std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(j)]);
  }
  rows.resize(static_cast<std::size_t>(n_batch));
  std::sort(rows.begin(), rows.end());
  return rows;
}

double scalar_obs_variance(const StateSpaceModel& model) {
  require(model.obs_block_cov.is_scaled_identity(), ErrorCode::InvalidArgument,
          "assimilation expects a scaled-identity observation covariance");
  return model.obs_block_cov.identity_scale();
}

void record_resample(FilterResult& result, const ResampleResult& rr, Index pool_size, Index t,
                     Index k, Index i, double& ess_acc) {
  ess_acc += rr.ess;
  ++result.resamplings;
  if (rr.ess < 0.05 * static_cast<double>(pool_size)) ++result.ess_below_floor;
  if (rr.degenerate)
    result.events.push_back({t, k, i, "degenerate_weights",
                             "all importance log-weights were -inf; resampled uniformly"});
}

}  // namespace

FilterResult run_assimilation(const StateSpaceModel& model,
                              std::span<const Observation> observations,
                              const GaussianPrior& initial, const AssimConfig& cfg,
                              const Streams& streams, const EnsembleObserver& observer) {
  cfg.validate();
  const Index p = model.dim_state;
  require(initial.mean.size() == p, ErrorCode::DimensionMismatch,
          "initial distribution dimension differs from the model");
  const Index stages = stage_count(cfg, observations.size());
  const double obs_var = scalar_obs_variance(model);
  const CovSpec& u = model.process_cov;
  const Index m = cfg.ensemble_size;
  const Index keep = cfg.iterations - cfg.burn_in;

  FilterResult result;
  Ensemble ens = draw_ensemble(initial, m, streams, 1);
  PropagatedPool pool;
  for (Index t = 1; t <= stages; ++t) {
    const Observation& obs = observations[static_cast<std::size_t>(t - 1)];
    if (t > 1) {
      pool = propagate_pool(StagePool{result.stages.back().samples}, model.propagate);
      ens = stage_handoff(ens, model, streams, t);
    }
    ens.stage = t;
    const DenseMatrix h_full = measurement_matrix(model, obs);
    const Index n_total = h_full.rows();
    const Index n_batch = cfg.batch_size == 0 ? n_total : std::min(cfg.batch_size, n_total);
    const double n_over_N = static_cast<double>(n_batch) / static_cast<double>(n_total);

    StageSamples st;
    st.samples.resize(p, keep * m);
    std::vector<double> ess_row;
    for (Index k = 1; k <= cfg.iterations; ++k) {
      const auto rows = batch_rows(n_total, n_batch, streams, t, k);
      DenseMatrix h(n_batch, p);
      Vector y(n_batch);
      for (Index r = 0; r < n_batch; ++r) {
        h.row(r) = h_full.row(rows[static_cast<std::size_t>(r)]);
        y[r] = obs.values[rows[static_cast<std::size_t>(r)]];
      }
      const double eps = cfg.schedule.at(static_cast<double>(t), static_cast<double>(k));
      const CovSpec q = CovSpec::scaled_identity(eps, p);
      const CovSpec r = CovSpec::scaled_identity(2.0 * obs_var, n_batch);
      const DenseMatrix gain = kalman_gain(q, h, r);
      double ess_acc = 0.0;
      for (Index i = 0; i < m; ++i) {
        const Vector x = ens.members.col(i);
        auto wf = streams.at(t, k, i, Purpose::Forecast);
        Vector xf;
        if (t == 1) {
          xf = lenkf_forecast(x, initial.log_grad(x), eps, n_over_N, q, wf);
        } else {
          auto rs = streams.at(t, k, i, Purpose::Resample);
          const auto rr = importance_resample(pool, x, u, rs);
          record_resample(result, rr, pool.size(), t, k, i, ess_acc);
          xf = assim_forecast(x, rr.propagated, u, eps, n_over_N, wf);
        }
        auto va = streams.at(t, k, i, Purpose::Analysis);
        ens.members.col(i) = lenkf_analysis(xf, gain, y, h, r, n_over_N, va);
      }
      if (t > 1) ess_row.push_back(ess_acc / static_cast<double>(m));
      if (k > cfg.burn_in) st.samples.middleCols((k - cfg.burn_in - 1) * m, m) = ens.members;
      if (observer) observer(t, k, ens);
    }
    st.estimate = st.samples.rowwise().mean();
    result.stages.push_back(std::move(st));
    result.ess.push_back(std::move(ess_row));
  }
  return result;
}

// -- Augmented ------------------------------------------------------------------

CovSpec AugmentedMeasurementModel::measurement_noise(Index n) const {
  return CovSpec::scaled_identity((1.0 - alpha) * scalar_obs_variance(base), n);
}

CovSpec AugmentedMeasurementModel::latent_noise(Index n) const {
  return CovSpec::scaled_identity(alpha * scalar_obs_variance(base), n);
}

AugmentedMeasurementModel augment_nonlinear_measurement(const StateSpaceModel& model,
                                                        MeasurementFn h,
                                                        MeasurementJacobianT h_jacobian_t,
                                                        double alpha) {
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::InvalidArgument,
          "variance-splitting proportion must be in (0,1)");
  require(static_cast<bool>(h) && static_cast<bool>(h_jacobian_t), ErrorCode::InvalidArgument,
          "nonlinear measurement needs h and its Jacobian-transpose action");
  scalar_obs_variance(model);
  AugmentedMeasurementModel out;
  out.base = model;
  out.forward.response = std::move(h);
  out.forward.jacobian_transpose_apply = std::move(h_jacobian_t);
  out.alpha = alpha;
  return out;
}

Vector augmented_assim_grad(const AugmentedMeasurementModel& model, const Vector& z,
                            const Vector& gamma, std::span<const Index> observed,
                            const Vector& z_prior_grad) {
  const AugmentedState st{z, gamma, model.alpha};
  const CovSpec gam = CovSpec::scaled_identity(scalar_obs_variance(model.base), gamma.size());
  return augmented_grad(st, observed, model.forward, z_prior_grad, gam, 1.0);
}

FilterResult run_augmented_assimilation(const AugmentedMeasurementModel& model,
                                        std::span<const Observation> observations,
                                        const GaussianPrior& initial_z, const AssimConfig& cfg,
                                        const Streams& streams, const EnsembleObserver& observer) {
  cfg.validate();
  require(cfg.batch_size == 0, ErrorCode::InvalidArgument,
          "augmented assimilation runs on the full stage data (batch_size 0)");
  const Index pz = model.dim_z();
  require(initial_z.mean.size() == pz, ErrorCode::DimensionMismatch,
          "initial distribution dimension differs from the model");
  const Index stages = stage_count(cfg, observations.size());
  require(stages >= 1, ErrorCode::StreamExhausted, "no observations supplied");
  const Index n = observations.front().values.size();
  for (Index t = 0; t < stages; ++t)
    require(observations[static_cast<std::size_t>(t)].values.size() == n,
            ErrorCode::DimensionMismatch, "augmented state needs a constant observation count");
  const CovSpec& u = model.base.process_cov;
  const CovSpec gam = CovSpec::scaled_identity(scalar_obs_variance(model.base), n);
  const CovSpec r = model.measurement_noise(n).scaled(2.0);
  const Index m = cfg.ensemble_size;
  const Index keep = cfg.iterations - cfg.burn_in;
  const Vector zero_z = Vector::Zero(pz);

  FilterResult result;
  Ensemble full;
  full.members.resize(pz + n, m);
  full.members.topRows(pz) = draw_ensemble(initial_z, m, streams, 1).members;
  PropagatedPool pool;
  for (Index t = 1; t <= stages; ++t) {
    const Observation& obs = observations[static_cast<std::size_t>(t - 1)];
    if (t > 1) {
      pool = propagate_pool(StagePool{result.stages.back().samples}, model.base.propagate);
      for (Index i = 0; i < m; ++i) {
        auto rng = streams.at(t, 0, i, Purpose::Handoff);
        full.members.col(i).head(pz) = model.base.apply_propagator(full.members.col(i).head(pz)) +
                                       sample_gaussian(zero_z, u, rng);
      }
    }
    full.members.bottomRows(n) = obs.values.replicate(1, m);
    full.stage = t;

    StageSamples st;
    st.samples.resize(pz, keep * m);
    std::vector<double> ess_row;
    for (Index k = 1; k <= cfg.iterations; ++k) {
      const double eps = cfg.schedule.at(static_cast<double>(t), static_cast<double>(k));
      const DenseMatrix gain = gamma_gain(eps, r);
      double ess_acc = 0.0;
      for (Index i = 0; i < m; ++i) {
        const Vector z = full.members.col(i).head(pz);
        const Vector gamma = full.members.col(i).tail(n);
        Vector prior_term;
        if (t == 1) {
          prior_term = initial_z.log_grad(z);
        } else {
          auto rs = streams.at(t, k, i, Purpose::Resample);
          const auto rr = importance_resample(pool, z, u, rs);
          record_resample(result, rr, pool.size(), t, k, i, ess_acc);
          prior_term = -u.solve(Vector(z - rr.propagated));
        }
        const Vector grad = augmented_assim_grad(model, z, gamma, obs.indices, prior_term);
        auto wz = streams.at(t, k, i, Purpose::Forecast);
        Vector noise(pz);
        wz.fill_normal({noise.data(), static_cast<std::size_t>(pz)});
        full.members.col(i).head(pz) = z + (0.5 * eps) * grad.head(pz) + std::sqrt(eps) * noise;
        auto wg = streams.at(t, k, i, Purpose::Analysis);
        const Vector response = model.forward.response(z, obs.indices);
        full.members.col(i).tail(n) =
            gamma_update(gamma, response, obs.values, model.alpha, eps, 1.0, gam, gain, wg);
      }
      if (t > 1) ess_row.push_back(ess_acc / static_cast<double>(m));
      if (k > cfg.burn_in)
        st.samples.middleCols((k - cfg.burn_in - 1) * m, m) = full.members.topRows(pz);
      if (observer) observer(t, k, full);
    }
    st.estimate = st.samples.rowwise().mean();
    result.stages.push_back(std::move(st));
    result.ess.push_back(std::move(ess_row));
  }
  return result;
}

}  // namespace lenkf
