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
#include <string>
#include <vector>

#include "lenkf/models.hpp"
#include "lenkf/numkit.hpp"

namespace lenkf {

/// One row of metrics.csv.
struct MetricRow {
  Index stage = 0;
  std::string metric;
  std::string aux;
  double value = 0.0;
};

/// ||estimate - truth||_2 / sqrt(p).
double rmse(const Vector& estimate, const Vector& truth);

enum class IntervalMode { Percentile, Gaussian };

/// Central interval for one component's samples at `level`.
struct Interval {
  double lower;
  double upper;
};
Interval credible_interval(std::span<const double> samples, double level, IntervalMode mode);

/// Fraction of components whose interval contains the truth.  `samples`
/// holds component i's draws in row i.
double coverage_probability(const DenseMatrix& samples, const Vector& truth, double level = 0.95,
                            IntervalMode mode = IntervalMode::Percentile);

/// P(xi = 1 | beta) = a / (a + b), a = (p0/tau2) exp(-beta^2 / 2 tau2^2),
/// b = ((1-p0)/tau1) exp(-beta^2 / 2 tau1^2), evaluated in log space.
double inclusion_probability(double beta, const MixtureGaussianPrior& prior);

/// Monte-Carlo average of inclusion_probability over the draws of row i;
/// one entry per variable.
Vector marginal_inclusion(const DenseMatrix& draws, const MixtureGaussianPrior& prior);

/// (1/((T - t0) m)) sum_{t>t0} sum_i rho(x_t^i); per_stage[t-1] holds the
/// m values of rho at stage t.
double posterior_mean_estimate(std::span<const Vector> per_stage, Index burn_in);

/// (sum w)^2 / sum w^2 with w normalized from log space.
double ess(std::span<const double> log_weights);

/// Mean of values[first-1 .. last-1] (1-based inclusive stage range).
double stage_average(std::span<const double> values, Index first, Index last);

}  // namespace lenkf
