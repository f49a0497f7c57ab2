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

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "lenkf/enkf.hpp"
#include "lenkf/ensemble.hpp"
#include "lenkf/lenkf_inverse.hpp"
#include "lenkf/models.hpp"
#include "lenkf/schedule.hpp"

namespace lenkf {

/// Post-burn-in samples of one stage (columns), the resampling pool for the
/// next stage.
struct StagePool {
  DenseMatrix samples;  // p x |X_t|
  Index size() const noexcept { return samples.cols(); }
};

/// A pool with g applied to every member, computed once per stage.
struct PropagatedPool {
  DenseMatrix samples;
  DenseMatrix propagated;
  Index size() const noexcept { return samples.cols(); }
};

PropagatedPool propagate_pool(const StagePool& pool, const VectorField& g);

struct ResampleResult {
  Index index = 0;
  Vector sample;      // x_tilde
  Vector propagated;  // g(x_tilde)
  double ess = 0.0;   // effective sample size of the weights
  bool degenerate = false;
};

/// Draws s with P(s) proportional to N(x_current; g(pool_s), U).  The
/// weights involve no observation data.  When every log-weight is -inf or
/// NaN the draw falls back to uniform and `degenerate` is set.
/// Normalized importance weights of a pool against one state; repeated
/// draws reuse them.
class ImportanceSampler {
 public:
  ImportanceSampler(const PropagatedPool& pool, const Vector& x_current, const CovSpec& u);

  /// Consumes one uniform from `rng`.
  ResampleResult draw(RngStream& rng) const;
  double ess() const noexcept { return ess_; }
  bool degenerate() const noexcept { return degenerate_; }

 private:
  const PropagatedPool* pool_;
  std::vector<double> cumulative_;
  double ess_ = 0.0;
  bool degenerate_ = false;
};

ResampleResult importance_resample(const PropagatedPool& pool, const Vector& x_current,
                                   const CovSpec& u, RngStream& rng);
ResampleResult importance_resample(const StagePool& pool, const Vector& x_current,
                                   const VectorField& g, const CovSpec& u, RngStream& rng);

/// Log-weights log N(x; g(pool_j), U) up to a common constant.
Vector resample_log_weights(const PropagatedPool& pool, const Vector& x_current, const CovSpec& u);

/// x^f = x - eps (n/2N) U^{-1}(x - g(x_tilde)) + w, explicit w.
Vector assim_forecast_with_noise(const Vector& x, const Vector& propagated_prev, const CovSpec& u,
                                 double eps, double n_over_N, const Vector& w);
/// As above with w ~ N(0, (n/N) eps I).
Vector assim_forecast(const Vector& x, const Vector& propagated_prev, const CovSpec& u, double eps,
                      double n_over_N, RngStream& rng);

/// x_{t,0} = g(x_{t-1,K}) + u_t, u_t ~ N(0, U) on the Handoff streams of `stage`.
Ensemble stage_handoff(const Ensemble& ens, const StateSpaceModel& model, const Streams& streams,
                       Index stage);

struct AssimConfig {
  Index ensemble_size = 50;
  Index iterations = 20;  // K
  Index burn_in = 10;     // k0, 1 <= k0 < K
  LearningRateSchedule schedule =
      LearningRateSchedule::poly_decay(0.5, 1.0, 0.9, LearningRateSchedule::Driver::Iteration);
  /// n_t; 0 uses all N_t observations of the stage.
  Index batch_size = 0;
  /// T; 0 runs every supplied stage.  More than supplied is StreamExhausted.
  Index stages = 0;

  void validate() const;
};

/// Langevinized EnKF for x_t = g(x_{t-1}) + u_t, y_t = H_t x_t + v_t.  V_t
/// is model.obs_block_cov (scaled identity, per observation); H_t comes from
/// measurement_matrix().  `initial` is the law of x_1.
FilterResult run_assimilation(const StateSpaceModel& model,
                              std::span<const Observation> observations,
                              const GaussianPrior& initial, const AssimConfig& cfg,
                              const Streams& streams, const EnsembleObserver& observer = {});

// -- Nonlinear measurement through variance splitting --------------------------

using MeasurementFn = std::function<Vector(const Vector& z, std::span<const Index> observed)>;
using MeasurementJacobianT =
    std::function<Vector(const Vector& z, std::span<const Index> observed, const Vector& r)>;

/// State (z, gamma) with gamma = h(z) + xi, xi ~ N(0, alpha Gamma), and
/// y = gamma + N(0, (1 - alpha) Gamma); H = (0, I).
struct AugmentedMeasurementModel {
  StateSpaceModel base;  // dynamics of z; obs_block_cov is Gamma
  NonlinearForward forward;
  double alpha = 0.9;

  Index dim_z() const { return base.dim_state; }
  /// Measurement noise covariance (1 - alpha) Gamma for n observations.
  CovSpec measurement_noise(Index n) const;
  /// Latent split covariance alpha Gamma for n observations.
  CovSpec latent_noise(Index n) const;
};

AugmentedMeasurementModel augment_nonlinear_measurement(const StateSpaceModel& model,
                                                        MeasurementFn h,
                                                        MeasurementJacobianT h_jacobian_t,
                                                        double alpha);

/// Drift direction for the augmented state at stage t given the propagated
/// resampled z (or the prior gradient at t = 1) as `z_prior_grad`.
Vector augmented_assim_grad(const AugmentedMeasurementModel& model, const Vector& z,
                            const Vector& gamma, std::span<const Index> observed,
                            const Vector& z_prior_grad);

/// Algorithm over (z, gamma); stage samples hold the z-marginal.  The
/// observer sees the full augmented ensemble.
FilterResult run_augmented_assimilation(const AugmentedMeasurementModel& model,
                                        std::span<const Observation> observations,
                                        const GaussianPrior& initial_z, const AssimConfig& cfg,
                                        const Streams& streams,
                                        const EnsembleObserver& observer = {});

}  // namespace lenkf
