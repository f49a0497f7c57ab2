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

#include <string>

#include "lenkf/ensemble.hpp"
#include "lenkf/lenkf_inverse.hpp"
#include "lenkf/models.hpp"
#include "lenkf/schedule.hpp"

namespace lenkf {

enum class BaselineAlgorithm { SGLD, PSGLD, SGNHT };

BaselineAlgorithm parse_baseline(const std::string& name);
std::string to_string(BaselineAlgorithm a);

// SGLD: x' = x + (eps/2) g + N(0, eps I).
Vector sgld_step_with_noise(const Vector& x, const Vector& stoch_grad, double eps,
                            const Vector& z);
Vector sgld_step(const Vector& x, const Vector& stoch_grad, double eps, RngStream& rng);

// pSGLD with the RMSProp preconditioner; the Gamma (curvature drift) term is
// omitted.
struct PsgldParams {
  double lambda = 1e-5;  // curvature floor
  double beta = 0.99;    // EWMA weight of the history
};
struct PsgldState {
  Vector v;  // EWMA of squared gradients, >= 0
};

/// Updates `state` to v' and returns x'.  `z` is a standard normal draw.
Vector psgld_step_with_noise(const Vector& x, const Vector& stoch_grad, double eps,
                             PsgldState& state, const PsgldParams& params, const Vector& z);
Vector psgld_step(const Vector& x, const Vector& stoch_grad, double eps, PsgldState& state,
                  const PsgldParams& params, RngStream& rng);

// SGNHT:
//   u'  = u + eps g - xi eps u + sqrt(2 A eps) N(0, I)
//   x'  = x + eps u'
//   xi' = xi + eps (u'^T u' / p - 1)
struct SgnhtState {
  Vector momentum;
  double thermostat = 0.0;
};

/// Updates `state` and returns x'.
Vector sgnht_step_with_noise(const Vector& x, SgnhtState& state, const Vector& stoch_grad,
                             double eps, double diffusion, const Vector& z);
Vector sgnht_step(const Vector& x, SgnhtState& state, const Vector& stoch_grad, double eps,
                  double diffusion, RngStream& rng);

/// (N/n) H_b^T V^{-1} (y_b - H_b beta) + prior_grad(beta) for regression block b.
Vector regression_stoch_grad(const Vector& beta, const RegressionDataset& data,
                             std::span<const Index> block, double noise_var,
                             const VectorField& prior_grad);

struct BaselineConfig {
  BaselineAlgorithm algorithm = BaselineAlgorithm::SGLD;
  LearningRateSchedule schedule = LearningRateSchedule::constant(1e-5);
  Index chains = 100;
  Index stages = 1000;
  BatchPolicy batch_policy = BatchPolicy::UniformBlock;
  PsgldParams psgld;
  double sgnht_diffusion = 10.0;
  GaussianPrior initial;  // defaults to N(0, I)
};

/// Parallel independent chains on the regression posterior.  Mini-batches
/// follow select_block() on chain 0's stream, i.e. the same sequence a
/// Langevinized EnKF run with the same seed sees.
Ensemble run_baseline(const RegressionDataset& data, double noise_var,
                      const VectorField& prior_grad, const BaselineConfig& cfg,
                      const Streams& streams, const EnsembleObserver& observer = {});

}  // namespace lenkf
