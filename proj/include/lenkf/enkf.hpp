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

#include <span>
#include <vector>

#include "lenkf/ensemble.hpp"
#include "lenkf/models.hpp"
#include "lenkf/schedule.hpp"

namespace lenkf {

/// x^{f,i} = g(x^{a,i}) + u^i, u^i ~ N(0, U).  Noise comes from the
/// Handoff streams of (ens.stage + 1).
Ensemble enkf_forecast(const Ensemble& ens, const StateSpaceModel& model, const Streams& streams);

/// K_hat = C H^T (H C H^T + Gamma)^{-1} with C the unbiased sample
/// covariance of `forecast`.  Throws NotSPD when the inner matrix is not.
DenseMatrix enkf_gain(const DenseMatrix& forecast, const DenseMatrix& h, const CovSpec& gamma);

/// x^{a,i} = x^{f,i} + K_hat (y - H x^{f,i} - eta^i), eta^i ~ N(0, Gamma),
/// drawn from the Analysis streams of (stage, iteration).
Ensemble enkf_analysis(const Ensemble& forecast, const Vector& y, const DenseMatrix& h,
                       const CovSpec& gamma, const Streams& streams, Index iteration = 0);

/// One forecast/analysis cycle of the stochastic EnKF.  The result carries
/// stage ens.stage + 1.
Ensemble enkf_step(const Ensemble& ens, const StateSpaceModel& model, const Vector& y,
                   const DenseMatrix& h, const CovSpec& gamma, const Streams& streams);

/// Per-stage summary of a filtering run.
struct StageSamples {
  Vector estimate;       // mean of the retained samples
  DenseMatrix samples;   // p x (retained count)
};

struct FilterResult {
  std::vector<StageSamples> stages;
  std::vector<RunEvent> events;
  /// Mean resampling ESS per (stage, iteration); empty for EnKF.
  std::vector<std::vector<double>> ess;
  /// Importance resamplings performed, and how many had ESS < 0.05 |pool|.
  Index resamplings = 0;
  Index ess_below_floor = 0;
};

/// EnKF run alongside the Langevinized filter for twin experiments: same
/// data, gain from the ensemble covariance, perturbations N(0, V), no
/// resampling.  Each stage performs `iterations` analysis sweeps against
/// the stage's data and keeps the ensembles of sweeps k > burn_in.
enum class EnkfSweep {
  /// Sweep k analyses the output of sweep k-1.
  Sequential,
  /// Every sweep analyses the stage's forecast ensemble afresh.
  Restart,
  /// Each sweep first takes the Langevin forecast move of the assimilation
  /// sampler, anchored at the member's own propagated state g(x_{t-1})
  /// instead of a resampled one, then analyses with the ensemble gain.
  Langevin,
};

struct EnkfAssimConfig {
  Index ensemble_size = 50;
  Index iterations = 1;
  Index burn_in = 0;
  EnkfSweep sweep = EnkfSweep::Sequential;
  /// Step sizes for the Langevin sweep.
  LearningRateSchedule schedule =
      LearningRateSchedule::poly_decay(0.5, 1.0, 0.9, LearningRateSchedule::Driver::Iteration);
};

FilterResult run_enkf_assimilation(const StateSpaceModel& model,
                                   std::span<const Observation> observations,
                                   const GaussianPrior& initial, const EnkfAssimConfig& cfg,
                                   const Streams& streams, const EnsembleObserver& observer = {});

/// H_t for an observation: model.measurement_rows when set, else selection.
DenseMatrix measurement_matrix(const StateSpaceModel& model, const Observation& obs);

}  // namespace lenkf
