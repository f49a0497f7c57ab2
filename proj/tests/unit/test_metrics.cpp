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

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "lenkf/metrics.hpp"
#include "test_util.hpp"

using namespace lenkf;
using testing::test_rng;

TEST_CASE("rmse examples") {
  Vector t(3);
  t << 1.0, 2.0, 3.0;
  CHECK(rmse(t, t) == 0.0);
  CHECK(rmse(Vector(t.array() + 1.0), t) == doctest::Approx(1.0).epsilon(1e-15));
  Vector e(2);
  e << 3.0, 4.0;
  CHECK(rmse(e, Vector::Zero(2)) == doctest::Approx(3.53553).epsilon(1e-5));
  CHECK_THROWS_AS(rmse(e, t), Error);
}

TEST_CASE("coverage_probability examples") {
  auto rng = test_rng(90);
  Vector truth(3);
  truth << 0.5, -1.0, 2.0;
  const DenseMatrix same = truth.replicate(1, 10);
  CHECK(coverage_probability(same, truth) == 1.0);
  CHECK(coverage_probability(same, truth, 0.95, IntervalMode::Gaussian) == 1.0);
  const DenseMatrix noisy = same + testing::normal_matrix(3, 10, rng);
  CHECK(coverage_probability(noisy, Vector(truth.array() + 1e6)) == 0.0);

  const Index comps = 10000, draws = 400;
  // Truth drawn from the same law as the samples.
  const Vector zeros = testing::normal_vector(comps, rng);
  const DenseMatrix s = testing::normal_matrix(comps, draws, rng);
  CHECK(coverage_probability(s, zeros) == doctest::Approx(0.95).epsilon(0.0105));
  CHECK(coverage_probability(s, zeros, 0.95, IntervalMode::Gaussian) ==
        doctest::Approx(0.95).epsilon(0.0105));
  CHECK_THROWS_AS(coverage_probability(DenseMatrix::Zero(3, 1), truth), Error);
  CHECK_THROWS_AS(coverage_probability(DenseMatrix::Zero(2, 5), truth), Error);
}

TEST_CASE("coverage is invariant under per-component reordering of samples") {
  auto rng = test_rng(91);
  DenseMatrix s = testing::normal_matrix(20, 31, rng);
  const Vector truth = 1.5 * testing::normal_vector(20, rng);
  const double before = coverage_probability(s, truth);
  for (Index i = 0; i < s.rows(); ++i) {
    std::vector<double> row;
    for (Index j = 0; j < s.cols(); ++j) row.push_back(s(i, j));
    std::reverse(row.begin(), row.end());
    std::rotate(row.begin(), row.begin() + i % 7, row.end());
    for (Index j = 0; j < s.cols(); ++j) s(i, j) = row[static_cast<std::size_t>(j)];
  }
  CHECK(coverage_probability(s, truth) == before);
}

TEST_CASE("credible intervals") {
  const std::vector<double> v{4.0, 1.0, 3.0, 2.0, 5.0};
  const auto p = credible_interval(v, 0.5, IntervalMode::Percentile);
  CHECK(p.lower == doctest::Approx(2.0));
  CHECK(p.upper == doctest::Approx(4.0));
  const auto g = credible_interval(v, 0.95, IntervalMode::Gaussian);
  const double sd = std::sqrt(2.5);
  CHECK(g.lower == doctest::Approx(3.0 - 1.959963985 * sd).epsilon(1e-8));
  CHECK(g.upper == doctest::Approx(3.0 + 1.959963985 * sd).epsilon(1e-8));
  CHECK_THROWS_AS(credible_interval(std::vector<double>{1.0}, 0.9, IntervalMode::Percentile), Error);
}

TEST_CASE("inclusion_probability examples") {
  const MixtureGaussianPrior sym{0.5, 0.3, 0.3};
  for (double b : {-3.0, 0.0, 0.2, 7.0}) CHECK(inclusion_probability(b, sym) == doctest::Approx(0.5));
  const MixtureGaussianPrior prior{0.0005, 0.01, 1.0};
  CHECK(inclusion_probability(0.0, prior) == doctest::Approx(0.0005 / (0.0005 + 9.995)).epsilon(1e-12));
  CHECK(inclusion_probability(0.0, prior) == doctest::Approx(5.002e-5).epsilon(1e-3));
  CHECK(inclusion_probability(1.0, prior) > 1.0 - 1e-15);
  CHECK(inclusion_probability(1.0, prior) <= 1.0);
  // Far in the tails the naive ratio underflows; log space keeps it exact.
  CHECK(inclusion_probability(60.0, prior) == 1.0);
  CHECK(std::isfinite(inclusion_probability(-1e5, prior)));
}

TEST_CASE("inclusion_probability matches a direct long-double evaluation") {
  const MixtureGaussianPrior prior{0.01, 0.05, 2.0};
  for (double b = -1.5; b <= 1.5; b += 0.01) {
    const long double a = (0.01L / std::sqrt(2.0L)) * std::exp(-(long double)b * b / (2 * 2.0L));
    const long double c = (0.99L / std::sqrt(0.05L)) * std::exp(-(long double)b * b / (2 * 0.05L));
    CHECK(inclusion_probability(b, prior) == doctest::Approx(static_cast<double>(a / (a + c))).epsilon(1e-12));
  }
}

TEST_CASE("inclusion_probability is even and monotone in |beta|") {
  const MixtureGaussianPrior prior{0.0005, 0.01, 1.0};
  double prev = -1.0;
  for (double b = 0.0; b <= 3.0; b += 0.005) {
    const double v = inclusion_probability(b, prior);
    CHECK(v == inclusion_probability(-b, prior));
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("marginal_inclusion averages over draws") {
  const MixtureGaussianPrior prior{0.0005, 0.01, 1.0};
  DenseMatrix d(2, 3);
  d << 0.0, 1.0, 0.5, -2.0, 2.0, 0.1;
  const Vector m = marginal_inclusion(d, prior);
  for (Index i = 0; i < 2; ++i) {
    double acc = 0.0;
    for (Index j = 0; j < 3; ++j) acc += inclusion_probability(d(i, j), prior);
    CHECK(m[i] == doctest::Approx(acc / 3.0).epsilon(1e-15));
  }
}

TEST_CASE("posterior_mean_estimate examples") {
  const std::vector<Vector> c(5, Vector::Constant(3, 2.5));
  CHECK(posterior_mean_estimate(c, 2) == 2.5);
  std::vector<Vector> s;
  for (double v : {1.0, 2.0, 3.0, 4.0}) s.push_back(Vector::Constant(1, v));
  CHECK(posterior_mean_estimate(s, 0) == 2.5);
  CHECK(posterior_mean_estimate(s, 2) == 3.5);
  CHECK_THROWS_AS(posterior_mean_estimate(s, 4), Error);
}

TEST_CASE("ess examples") {
  CHECK(ess(std::vector<double>(7, -3.2)) == doctest::Approx(7.0));
  const double ninf = -std::numeric_limits<double>::infinity();
  CHECK(ess(std::vector<double>{ninf, 0.0, ninf}) == doctest::Approx(1.0));
  CHECK(ess(std::vector<double>{0.0, -std::log(3.0)}) == doctest::Approx(1.6).epsilon(1e-14));
  CHECK_THROWS_AS(ess(std::vector<double>{}), Error);
}

TEST_CASE("stage average over a window") {
  std::vector<double> v(100);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i + 1);
  CHECK(stage_average(v, 21, 100) == doctest::Approx((21.0 + 100.0) / 2.0));
  CHECK(stage_average(v, 5, 5) == 5.0);
  CHECK_THROWS_AS(stage_average(v, 0, 10), Error);
  CHECK_THROWS_AS(stage_average(v, 21, 101), Error);
}
