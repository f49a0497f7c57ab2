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
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "doctest.h"
#include "lenkf/models.hpp"
#include "test_util.hpp"

using namespace lenkf;
using testing::test_rng;

namespace {

double explicit_log_mixture(double b, const MixtureGaussianPrior& pr) {
  const long double pi = 3.14159265358979323846264338327950288L;
  const long double bb = b;
  const long double n1 = std::exp(-bb * bb / (2.0L * pr.tau1_sq)) / std::sqrt(2.0L * pi * pr.tau1_sq);
  const long double n2 = std::exp(-bb * bb / (2.0L * pr.tau2_sq)) / std::sqrt(2.0L * pi * pr.tau2_sq);
  return static_cast<double>(std::log((1.0L - pr.p0) * n1 + pr.p0 * n2));
}

// Reference Lorenz-96 integrator written independently of the library.
std::vector<double> ref_rhs(const std::vector<double>& x, double f) {
  const int p = static_cast<int>(x.size());
  std::vector<double> d(x.size());
  for (int i = 0; i < p; ++i) {
    const double xp1 = x[static_cast<std::size_t>((i + 1) % p)];
    const double xm1 = x[static_cast<std::size_t>((i + p - 1) % p)];
    const double xm2 = x[static_cast<std::size_t>((i + p - 2) % p)];
    d[static_cast<std::size_t>(i)] = (xp1 - xm2) * xm1 - x[static_cast<std::size_t>(i)] + f;
  }
  return d;
}

std::vector<double> ref_rk4(const std::vector<double>& x, double f, double h) {
  auto axpy = [](const std::vector<double>& a, double s, const std::vector<double>& b) {
    std::vector<double> r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + s * b[i];
    return r;
  };
  const auto k1 = ref_rhs(x, f);
  const auto k2 = ref_rhs(axpy(x, h / 2, k1), f);
  const auto k3 = ref_rhs(axpy(x, h / 2, k2), f);
  const auto k4 = ref_rhs(axpy(x, h, k3), f);
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    r[i] = x[i] + h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  return r;
}

Lorenz96Config noiseless_full() {
  Lorenz96Config c;
  c.process_noise_sd = 0.0;
  c.obs_noise_sd = 0.0;
  c.obs_fraction = 1.0;
  c.observe_identity = true;
  return c;
}

}  // namespace

TEST_CASE("mixture gradient at zero is zero") {
  const MixtureGaussianPrior pr;
  CHECK(mixture_log_prior_grad(Vector::Zero(5), pr).norm() == 0.0);
}

TEST_CASE("mixture gradient collapses to the slab as p0 -> 1") {
  MixtureGaussianPrior pr;
  pr.p0 = 1.0 - 1e-15;
  Vector b(4);
  b << -2.0, -0.3, 0.7, 3.0;
  const Vector g = mixture_log_prior_grad(b, pr);
  for (Index i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx(-b[i] / pr.tau2_sq).epsilon(1e-9));
}

TEST_CASE("mixture gradient matches finite differences") {
  const MixtureGaussianPrior pr{0.0005, 0.01, 1.0};
  const double h = 1e-5;
  const Vector b = Vector::Constant(1, 0.05);
  const double fd = (explicit_log_mixture(0.05 + h, pr) - explicit_log_mixture(0.05 - h, pr)) / (2 * h);
  CHECK(std::abs(mixture_log_prior_grad(b, pr)[0] - fd) < 1e-6);

  auto rng = test_rng(21);
  for (int rep = 0; rep < 100; ++rep) {
    const double x = -5.0 + 10.0 * rng.uniform();
    const double d = (explicit_log_mixture(x + h, pr) - explicit_log_mixture(x - h, pr)) / (2 * h);
    const double g = mixture_log_prior_grad(Vector::Constant(1, x), pr)[0];
    CHECK(std::abs(g - d) <= 1e-6 * std::max(1.0, std::abs(d)));
  }
}

TEST_CASE("mixture log prior matches the explicit density and is finite for large beta") {
  const MixtureGaussianPrior pr{0.0005, 0.01, 1.0};
  Vector b(3);
  b << 0.01, -0.7, 2.0;
  double expected = 0.0;
  for (Index i = 0; i < 3; ++i) expected += explicit_log_mixture(b[i], pr);
  CHECK(mixture_log_prior(b, pr) == doctest::Approx(expected).epsilon(1e-12));
  const Vector big = Vector::Constant(2, 100.0);
  const Vector g = mixture_log_prior_grad(big, pr);
  CHECK(std::isfinite(g[0]));
  CHECK(g[0] == doctest::Approx(-100.0 / pr.tau2_sq).epsilon(1e-9));
  CHECK(std::isfinite(mixture_log_prior(big, pr)));
}

TEST_CASE("mixture prior validation") {
  CHECK_THROWS_AS((MixtureGaussianPrior{0.0, 0.01, 1.0}.validate()), Error);
  CHECK_THROWS_AS((MixtureGaussianPrior{0.5, 1.0, 0.01}.validate()), Error);
  CHECK_NOTHROW((MixtureGaussianPrior{0.5, 0.01, 1.0}.validate()));
}

TEST_CASE("lorenz96_rhs examples") {
  CHECK(lorenz96_rhs(Vector::Constant(40, 8.0), 8.0).norm() == 0.0);
  Vector x(4);
  x << 1, 2, 3, 4;
  const Vector d = lorenz96_rhs(x, 8.0);
  // d_i = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F, cyclic.
  CHECK(d[0] == doctest::Approx((2 - 3) * 4 - 1 + 8));
  CHECK(d[1] == doctest::Approx((3 - 4) * 1 - 2 + 8));
  CHECK(d[2] == doctest::Approx((4 - 1) * 2 - 3 + 8));
  CHECK(d[3] == doctest::Approx((1 - 2) * 3 - 4 + 8));
  CHECK(d[0] == 3.0);
  try {
    lorenz96_rhs(Vector::Ones(3), 8.0);
    FAIL("expected DimensionTooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionTooSmall);
  }
}

TEST_CASE("lorenz96_rhs commutes with cyclic rotation") {
  auto rng = test_rng(22);
  for (int rep = 0; rep < 20; ++rep) {
    const Index p = 4 + static_cast<Index>(rng.uniform_index(40));
    const Vector x = testing::normal_vector(p, rng) * 5.0;
    const Index s = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(p)));
    Vector rx(p);
    for (Index i = 0; i < p; ++i) rx[i] = x[(i + s) % p];
    const Vector d = lorenz96_rhs(x, 8.0);
    const Vector rd = lorenz96_rhs(rx, 8.0);
    for (Index i = 0; i < p; ++i) CHECK(rd[i] == doctest::Approx(d[(i + s) % p]).epsilon(1e-14));
  }
}

TEST_CASE("rk4_step examples") {
  Vector x(3);
  x << 1, -2, 0.5;
  CHECK((rk4_step([](const Vector& v) { return Vector(Vector::Zero(v.size())); }, x, 0.1) - x)
            .norm() == 0.0);
  Vector c(3);
  c << 0.5, 1.0, -3.0;
  const Vector y = rk4_step([&](const Vector&) { return c; }, x, 0.01);
  CHECK((y - (x + 0.01 * c)).norm() < 1e-15);
  const Vector e = rk4_step([](const Vector& v) { return Vector(-v); }, Vector::Ones(1), 0.01);
  CHECK(std::abs(e[0] - std::exp(-0.01)) < 1e-10);
}

TEST_CASE("rk4 local error is fifth order") {
  auto err = [](double dt) {
    const Vector e = rk4_step([](const Vector& v) { return Vector(-v); }, Vector::Ones(1), dt);
    return std::abs(e[0] - std::exp(-dt));
  };
  const double ratio = err(0.1) / err(0.05);
  CHECK(ratio >= 28.0);
  CHECK(ratio <= 36.0);
}

TEST_CASE("noiseless fully observed lorenz96 reproduces the RK4 trajectory") {
  const Lorenz96Config c = noiseless_full();
  const Lorenz96Data d = generate_lorenz96(c);
  REQUIRE(d.truth.size() == static_cast<std::size_t>(c.stages));
  std::vector<double> x(static_cast<std::size_t>(c.p), c.init_value);
  x[static_cast<std::size_t>(c.init_perturbed_index)] += c.init_perturbation;
  for (Index t = 0; t < c.stages; ++t) {
    x = ref_rk4(x, c.forcing, c.dt);
    const auto& obs = d.observations[static_cast<std::size_t>(t)];
    REQUIRE(obs.values.size() == c.p);
    for (Index i = 0; i < c.p; ++i) {
      CHECK(obs.indices[static_cast<std::size_t>(i)] == i);
      CHECK(obs.values[i] == doctest::Approx(x[static_cast<std::size_t>(i)]).epsilon(1e-12));
      CHECK(d.truth[static_cast<std::size_t>(t)][i] == obs.values[i]);
    }
  }
}

TEST_CASE("lorenz96 reference trajectory peak matches the reference integrator") {
  const Lorenz96Data d = generate_lorenz96(noiseless_full());
  std::vector<double> x(40, 20.0);
  x[19] += 0.1;
  double ref_peak = 0.0, lib_peak = 0.0;
  for (const auto& s : d.truth) {
    x = ref_rk4(x, 8.0, 0.01);
    for (double v : x) ref_peak = std::max(ref_peak, std::abs(v));
    lib_peak = std::max(lib_peak, s.cwiseAbs().maxCoeff());
  }
  CHECK(lib_peak == doctest::Approx(ref_peak).epsilon(1e-12));
  CHECK(lib_peak == doctest::Approx(34.0131).epsilon(1e-5));
}

// The bound |X| < 25 does not hold from X0 = 20: the reference integration
// above peaks at 34.01 in the noiseless case.  Kept as an expected failure.
TEST_CASE("lorenz96 reference trajectory stays below 25" * doctest::should_fail()) {
  Lorenz96Config c;
  const Lorenz96Data d = generate_lorenz96(c);
  double peak = 0.0;
  for (const auto& s : d.truth) peak = std::max(peak, s.cwiseAbs().maxCoeff());
  CHECK(peak < 25.0);
}

TEST_CASE("lorenz96 generation is deterministic and observes p/2 distinct coordinates") {
  Lorenz96Config c;
  c.seed = 17;
  const Lorenz96Data a = generate_lorenz96(c);
  const Lorenz96Data b = generate_lorenz96(c);
  REQUIRE(a.observations.size() == 100u);
  std::set<std::vector<Index>> distinct_sets;
  for (std::size_t t = 0; t < a.truth.size(); ++t) {
    CHECK((a.truth[t] - b.truth[t]).norm() == 0.0);
    CHECK((a.observations[t].values - b.observations[t].values).norm() == 0.0);
    const auto& idx = a.observations[t].indices;
    CHECK(idx.size() == 20u);
    CHECK(std::is_sorted(idx.begin(), idx.end()));
    CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
    CHECK(idx.front() >= 0);
    CHECK(idx.back() < 40);
    distinct_sets.insert(idx);
  }
  CHECK(distinct_sets.size() > 90u);
  c.seed = 18;
  const Lorenz96Data other = generate_lorenz96(c);
  CHECK((other.truth.back() - a.truth.back()).norm() > 0.0);
}

TEST_CASE("lorenz96 noise levels match the configuration") {
  Lorenz96Config c;
  c.stages = 2000;
  c.process_noise_sd = 0.5;
  c.obs_noise_sd = 2.0;
  const Lorenz96Data d = generate_lorenz96(c);
  const auto g = lorenz96_propagator(c);
  double s_proc = 0.0, s_obs = 0.0;
  Index n_proc = 0, n_obs = 0;
  Vector prev = d.initial_state;
  for (std::size_t t = 0; t < d.truth.size(); ++t) {
    s_proc += (d.truth[t] - g(prev)).squaredNorm();
    n_proc += c.p;
    prev = d.truth[t];
    const auto& o = d.observations[t];
    for (std::size_t j = 0; j < o.indices.size(); ++j) {
      const double r = o.values[static_cast<Index>(j)] - d.truth[t][o.indices[j]];
      s_obs += r * r;
      ++n_obs;
    }
  }
  CHECK(std::sqrt(s_proc / n_proc) == doctest::Approx(0.5).epsilon(0.02));
  CHECK(std::sqrt(s_obs / n_obs) == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("lorenz96 config validation") {
  Lorenz96Config c;
  c.p = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = Lorenz96Config{};
  c.dt = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = Lorenz96Config{};
  c.obs_fraction = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c.obs_fraction = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = Lorenz96Config{};
  CHECK(c.observed_per_stage() == 20);
}

TEST_CASE("observation selection matrix") {
  Observation o;
  o.indices = {1, 3};
  o.values = Vector::Zero(2);
  const DenseMatrix h = o.selection_matrix(5);
  CHECK(h.rows() == 2);
  CHECK(h.cols() == 5);
  CHECK(h(0, 1) == 1.0);
  CHECK(h(1, 3) == 1.0);
  CHECK(h.sum() == 2.0);
}

TEST_CASE("lorenz96 CSV round trip and sidecar") {
  Lorenz96Config c;
  c.stages = 5;
  const Lorenz96Data d = generate_lorenz96(c);
  const auto dir = std::filesystem::temp_directory_path() / "lenkf_test_l96_csv";
  std::filesystem::remove_all(dir);
  write_lorenz96_csv(d, dir);
  CHECK(std::filesystem::exists(dir / "truth.csv"));
  CHECK(std::filesystem::exists(dir / "dataset.json"));
  const auto obs = read_observations_csv(dir / "observations.csv");
  REQUIRE(obs.size() == d.observations.size());
  for (std::size_t t = 0; t < obs.size(); ++t) {
    CHECK(obs[t].indices == d.observations[t].indices);
    CHECK((obs[t].values - d.observations[t].values).norm() == 0.0);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("regression: pure noise response") {
  const RegressionDataset d = generate_regression(10000, 3, 100, Vector::Zero(3), 0.0, 5);
  const double mean = d.response.mean();
  const double var = (d.response.array() - mean).square().sum() / (d.response.size() - 1);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("regression: equicorrelated design") {
  const RegressionDataset d = generate_regression(100000, 4, 1000, Vector::Zero(4), 0.5, 6);
  const DenseMatrix z = d.design;
  for (Index a = 0; a < 4; ++a) {
    const Vector ca = z.col(a).array() - z.col(a).mean();
    CHECK(ca.squaredNorm() / z.rows() == doctest::Approx(1.0).epsilon(0.02));
    for (Index b = a + 1; b < 4; ++b) {
      const Vector cb = z.col(b).array() - z.col(b).mean();
      const double r = ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
      CHECK(std::abs(r - 0.5) < 0.01);
    }
  }
}

TEST_CASE("regression: response follows the linear model") {
  const Vector beta = sparse_truth(20);
  const RegressionDataset d = generate_regression(20000, 20, 100, beta, 0.5, 7);
  const Vector resid = d.response - d.design * beta;
  CHECK(resid.squaredNorm() / resid.size() == doctest::Approx(1.0).epsilon(0.05));
  // Least squares recovers beta.
  const Vector ols = (d.design.transpose() * d.design).ldlt().solve(d.design.transpose() * d.response);
  CHECK((ols - beta).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("regression: blocks partition the rows") {
  const RegressionDataset d = generate_regression(1000, 5, 50, Vector::Zero(5), 0.5, 8);
  CHECK(d.num_blocks() == 20);
  std::vector<int> seen(1000, 0);
  for (const auto& b : d.blocks) {
    CHECK(b.size() == 50u);
    for (Index i : b) ++seen[static_cast<std::size_t>(i)];
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
  // Seeded shuffle: the first block is not simply rows 0..49.
  std::vector<Index> first = d.blocks.front();
  std::sort(first.begin(), first.end());
  CHECK(first.back() != 49);
  const RegressionDataset again = generate_regression(1000, 5, 50, Vector::Zero(5), 0.5, 8);
  CHECK(again.blocks == d.blocks);
  CHECK((again.design - d.design).norm() == 0.0);
}

TEST_CASE("regression: indivisible batch") {
  try {
    generate_regression(1000, 5, 30, Vector::Zero(5), 0.5, 1);
    FAIL("expected IndivisibleBatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IndivisibleBatch);
  }
  CHECK_THROWS_AS(generate_regression(100, 5, 10, Vector::Zero(5), 1.0, 1), Error);
  CHECK_THROWS_AS(generate_regression(100, 5, 10, Vector::Zero(4), 0.5, 1), Error);
}

TEST_CASE("sparse truth and the full-scale configuration") {
  const Vector b = sparse_truth(2000);
  CHECK(b.size() == 2000);
  for (Index i = 0; i < 5; ++i) CHECK(b[i] == 1.0);
  for (Index i = 5; i < 8; ++i) CHECK(b[i] == -1.0);
  CHECK(b.tail(1992).cwiseAbs().sum() == 0.0);
}

TEST_CASE("regression row and response accessors") {
  const RegressionDataset d = generate_regression(100, 3, 10, sparse_truth(8).head(3), 0.3, 2);
  const std::vector<Index> idx{4, 7};
  const DenseMatrix h = d.rows(idx);
  CHECK((h.row(1) - d.design.row(7)).norm() == 0.0);
  CHECK(d.responses(idx)[0] == d.response[4]);
}
