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

#include "lenkf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace lenkf {

double rmse(const Vector& estimate, const Vector& truth) {
  require(estimate.size() == truth.size(), ErrorCode::DimensionMismatch,
          "rmse: estimate and truth differ in length");
  require(truth.size() > 0, ErrorCode::EmptyInput, "rmse of an empty vector");
  return (estimate - truth).norm() / std::sqrt(static_cast<double>(truth.size()));
}

namespace {

// Linear interpolation between order statistics (Hyndman-Fan type 7).
double quantile_sorted(const std::vector<double>& s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return s[lo] + frac * (s[hi] - s[lo]);
}

}  // namespace

Interval credible_interval(std::span<const double> samples, double level, IntervalMode mode) {
  require(samples.size() >= 2, ErrorCode::TooFewSamples, "interval needs at least 2 samples");
  require(level > 0.0 && level < 1.0, ErrorCode::InvalidArgument, "level must be in (0,1)");
  if (mode == IntervalMode::Percentile) {
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    const double tail = 0.5 * (1.0 - level);
    return {quantile_sorted(s, tail), quantile_sorted(s, 1.0 - tail)};
  }
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(samples.size());
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(samples.size() - 1));
  // Normal quantile by bisection on erfc keeps level arbitrary.
  const double tail = 0.5 * (1.0 - level);
  double lo = 0.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(mid / std::sqrt(2.0)) > tail ? lo : hi) = mid;
  }
  const double z = 0.5 * (lo + hi);
  return {mean - z * sd, mean + z * sd};
}

double coverage_probability(const DenseMatrix& samples, const Vector& truth, double level,
                            IntervalMode mode) {
  require(samples.rows() == truth.size(), ErrorCode::DimensionMismatch,
          "coverage: one sample row per component required");
  require(samples.cols() >= 2, ErrorCode::TooFewSamples, "coverage needs >= 2 samples");
  require(truth.size() > 0, ErrorCode::EmptyInput, "coverage over zero components");
  Index covered = 0;
  std::vector<double> row(static_cast<std::size_t>(samples.cols()));
  for (Index i = 0; i < samples.rows(); ++i) {
    for (Index j = 0; j < samples.cols(); ++j) row[static_cast<std::size_t>(j)] = samples(i, j);
    const auto iv = credible_interval(row, level, mode);
    if (truth[i] >= iv.lower && truth[i] <= iv.upper) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(truth.size());
}

double inclusion_probability(double beta, const MixtureGaussianPrior& prior) {
  require(prior.p0 > 0.0 && prior.p0 < 1.0 && prior.tau1_sq > 0.0 && prior.tau2_sq > 0.0,
          ErrorCode::InvalidArgument, "inclusion_probability: p0 in (0,1), variances > 0");
  const double tau1 = std::sqrt(prior.tau1_sq);
  const double tau2 = std::sqrt(prior.tau2_sq);
  const double la = std::log(prior.p0) - std::log(tau2) - beta * beta / (2.0 * prior.tau2_sq);
  const double lb = std::log1p(-prior.p0) - std::log(tau1) - beta * beta / (2.0 * prior.tau1_sq);
  // a / (a + b) = 1 / (1 + exp(lb - la))
  const double d = lb - la;
  if (d > 0.0) {
    const double e = std::exp(-d);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(d));
}

Vector marginal_inclusion(const DenseMatrix& draws, const MixtureGaussianPrior& prior) {
  require(draws.cols() >= 1, ErrorCode::EmptyInput, "marginal_inclusion needs draws");
  Vector out(draws.rows());
  for (Index i = 0; i < draws.rows(); ++i) {
    double acc = 0.0;
    for (Index j = 0; j < draws.cols(); ++j) acc += inclusion_probability(draws(i, j), prior);
    out[i] = acc / static_cast<double>(draws.cols());
  }
  return out;
}

double posterior_mean_estimate(std::span<const Vector> per_stage, Index burn_in) {
  const auto stages = static_cast<Index>(per_stage.size());
  require(burn_in >= 0 && burn_in < stages, ErrorCode::BurnInTooLarge,
          "burn-in " + std::to_string(burn_in) + " leaves no stages out of " +
              std::to_string(stages));
  double acc = 0.0;
  Index count = 0;
  for (Index t = burn_in; t < stages; ++t) {
    const Vector& v = per_stage[static_cast<std::size_t>(t)];
    acc += v.sum();
    count += v.size();
  }
  require(count > 0, ErrorCode::EmptyInput, "posterior_mean_estimate: no samples");
  return acc / static_cast<double>(count);
}

double ess(std::span<const double> log_weights) {
  require(!log_weights.empty(), ErrorCode::EmptyInput, "ess of an empty weight vector");
  const double lse = log_sum_exp(log_weights);
  require(std::isfinite(lse), ErrorCode::InvalidArgument, "ess: all weights are zero");
  double sum_sq = 0.0;
  for (double lw : log_weights) {
    const double w = std::exp(lw - lse);
    sum_sq += w * w;
  }
  return 1.0 / sum_sq;
}

double stage_average(std::span<const double> values, Index first, Index last) {
  require(first >= 1 && last >= first && last <= static_cast<Index>(values.size()),
          ErrorCode::InvalidArgument, "stage_average: range out of bounds");
  double acc = 0.0;
  for (Index t = first; t <= last; ++t) acc += values[static_cast<std::size_t>(t - 1)];
  return acc / static_cast<double>(last - first + 1);
}

}  // namespace lenkf
