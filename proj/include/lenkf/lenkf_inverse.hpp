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

#include "lenkf/ensemble.hpp"
#include "lenkf/models.hpp"
#include "lenkf/schedule.hpp"

namespace lenkf {

/// K = Q H^T (H Q H^T + R)^{-1}.  Only the n x n inner matrix is factorized.
DenseMatrix kalman_gain(const CovSpec& q, const DenseMatrix& h, const CovSpec& r);

/// x^f = x + eps (n/2N) grad + w with an explicit noise draw w.
Vector lenkf_forecast_with_noise(const Vector& x, const Vector& grad_log_prior, double eps,
                                 double n_over_N, const Vector& w);
/// As above with w ~ N(0, (n/N) Q).
Vector lenkf_forecast(const Vector& x, const Vector& grad_log_prior, double eps, double n_over_N,
                      const CovSpec& q, RngStream& rng);

/// x^a = x^f + K (y - H x^f - v) with an explicit perturbation v.
Vector lenkf_analysis_with_noise(const Vector& x_f, const DenseMatrix& gain, const Vector& y,
                                 const DenseMatrix& h, const Vector& v);
/// As above with v ~ N(0, (n/N) R).
Vector lenkf_analysis(const Vector& x_f, const DenseMatrix& gain, const Vector& y,
                      const DenseMatrix& h, const CovSpec& r, double n_over_N, RngStream& rng);

enum class BatchPolicy {
  /// Every stage draws a uniformly random block; blocks may repeat across stages.
  UniformBlock,
  /// Blocks are visited once per epoch in a seeded random order.
  EpochCycle,
};

/// Picks the block index used at `stage` (1-based).
Index select_block(BatchPolicy policy, Index num_blocks, Index stage, const Streams& streams,
                   Index chain = 0);

struct LinearInverseConfig {
  Index ensemble_size = 100;
  Index stages = 1000;
  LearningRateSchedule schedule = LearningRateSchedule::constant(1e-3);
  BatchPolicy batch_policy = BatchPolicy::UniformBlock;
  /// One mini-batch per chain instead of one shared batch per stage.
  bool per_chain_batches = false;
  /// Initial ensemble; defaults to N(0, I) when the mean is empty.
  GaussianPrior initial;
};

/// Langevinized EnKF for y = H x + eta with block covariance V =
/// model.obs_block_cov.  Q_t = eps_t I, R_t = 2V.  `observer` receives every
/// analysis ensemble (iteration index 1).
Ensemble run_linear_inverse(const StateSpaceModel& model, const RegressionDataset& data,
                            const LinearInverseConfig& cfg, const Streams& streams,
                            const EnsembleObserver& observer = {});

// -- Nonlinear inverse problems (variance-splitting augmentation) -------------

/// Mean response G_t(z) for a block and the action of its Jacobian
/// transpose on a residual.
struct NonlinearForward {
  std::function<Vector(const Vector& z, std::span<const Index> block)> response;
  std::function<Vector(const Vector& z, std::span<const Index> block, const Vector& residual)>
      jacobian_transpose_apply;
};

/// x = (z, gamma) with gamma | z ~ N(G(z), alpha V).
struct AugmentedState {
  Vector z;
  Vector gamma;
  double alpha = 0.9;

  Index dim() const { return z.size() + gamma.size(); }
  Vector stacked() const;
};

/// Gradient of log pi(z, gamma) on a block:
///   top    = grad log pi(z) + (1/alpha)(N/n) J^T V^{-1} (gamma - G(z))
///   bottom = -(1/alpha) V^{-1} (gamma - G(z)).
Vector augmented_grad(const AugmentedState& state, std::span<const Index> block,
                      const NonlinearForward& fwd, const Vector& prior_grad_z, const CovSpec& v,
                      double N_over_n);

/// Gain block eps (eps I + R)^{-1} for H = (0, I), R = 2 (1 - alpha) V.
DenseMatrix gamma_gain(double eps, const CovSpec& r);

/// One forecast + analysis of the gamma block with z held fixed at a point
/// whose response is `response`.  Noise draws come from `rng`.
Vector gamma_update(const Vector& gamma, const Vector& response, const Vector& y, double alpha,
                    double eps, double n_over_N, const CovSpec& v, const DenseMatrix& gain,
                    RngStream& rng);

struct NonlinearDataset {
  Vector y;                               // N observations
  std::vector<std::vector<Index>> blocks; // B blocks of size n
  Index block_size() const { return blocks.empty() ? 0 : static_cast<Index>(blocks.front().size()); }
  Index num_obs() const { return y.size(); }
};

struct NonlinearInverseConfig {
  Index ensemble_size = 20;
  Index stages = 1000;
  Index iterations = 5;
  double alpha = 0.9;
  LearningRateSchedule schedule = LearningRateSchedule::constant(1e-3);
  BatchPolicy batch_policy = BatchPolicy::UniformBlock;
  GaussianPrior initial;  // for z
};

/// Returns the final z-ensemble; `observer` sees the full augmented
/// ensemble (z rows first, then gamma) after every (stage, iteration).
Ensemble run_nonlinear_inverse(const NonlinearForward& fwd, const NonlinearDataset& data,
                               const VectorField& prior_grad_z, const CovSpec& v,
                               const NonlinearInverseConfig& cfg, const Streams& streams,
                               const EnsembleObserver& observer = {});

}  // namespace lenkf
