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

#include <cmath>
#include <vector>

#include "doctest.h"
#include "lenkf/lenkf_assim.hpp"
#include "lenkf/metrics.hpp"
#include "test_util.hpp"

using namespace lenkf;
using testing::test_rng;

namespace {

CovSpec s1(double v) { return CovSpec::scaled_identity(v, 1); }
Vector v1(double v) { return Vector::Constant(1, v); }

// Scalar AR(1) state observed n times per stage with unit-row measurements.
struct ScalarSystem {
  double a = 0.9, u = 0.5, v = 1.0, x0 = 1.0, init_var = 0.5;
  Index n = 20, stages = 8;

  StateSpaceModel model() const {
    StateSpaceModel m;
    m.dim_state = 1;
    const double aa = a;
    m.propagate = [aa](const Vector& x) { return Vector(aa * x); };
    m.process_cov = s1(u);
    m.obs_block_cov = CovSpec::scaled_identity(v, 1);
    m.measurement_rows = [](std::span<const Index> idx) {
      return DenseMatrix::Ones(static_cast<Index>(idx.size()), 1);
    };
    return m;
  }

  std::vector<Observation> observe(std::uint64_t seed, std::vector<double>& truth) const {
    auto rng = test_rng(seed);
    std::vector<Observation> out;
    double x = x0;
    for (Index t = 1; t <= stages; ++t) {
      x = (t == 1 ? a * x0 : a * x) + std::sqrt(u) * rng.normal();
      truth.push_back(x);
      Observation o;
      o.values.resize(n);
      for (Index j = 0; j < n; ++j) {
        o.indices.push_back(j);
        o.values[j] = x + std::sqrt(v) * rng.normal();
      }
      out.push_back(o);
    }
    return out;
  }

  // Exact filter means; the stage-1 prior is N(a x0, init_var).
  std::vector<double> kalman_means(const std::vector<Observation>& obs) const {
    std::vector<double> means;
    double mean = a * x0, var = init_var;
    for (std::size_t t = 0; t < obs.size(); ++t) {
      if (t > 0) {
        mean = a * mean;
        var = a * a * var + u;
      }
      const double prec = 1.0 / var + static_cast<double>(n) / v;
      const double post_var = 1.0 / prec;
      mean = post_var * (mean / var + obs[t].values.sum() / v);
      var = post_var;
      means.push_back(mean);
    }
    return means;
  }
};

}  // namespace

TEST_CASE("importance_resample singleton and symmetric pools") {
  auto rng = test_rng(60);
  StagePool one{DenseMatrix::Constant(2, 1, 3.0)};
  for (int i = 0; i < 20; ++i) {
    const auto r = importance_resample(one, Vector::Zero(2), {}, CovSpec::scaled_identity(1.0, 2), rng);
    CHECK(r.index == 0);
    CHECK(r.sample[0] == 3.0);
    CHECK(r.ess == doctest::Approx(1.0));
  }
  StagePool two{DenseMatrix(2, 2)};
  two.samples << 1.0, -1.0, 0.5, -0.5;
  const auto pp = propagate_pool(two, {});
  int zero = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
    if (importance_resample(pp, Vector::Zero(2), CovSpec::scaled_identity(2.0, 2), rng).index == 0) ++zero;
  const double e = draws / 2.0;
  const double chi2 = (zero - e) * (zero - e) / e + (draws - zero - e) * (draws - zero - e) / e;
  CHECK(chi2 < 10.83);
}

TEST_CASE("importance_resample density-ratio probability") {
  auto rng = test_rng(61);
  StagePool pool{DenseMatrix(1, 2)};
  pool.samples << 0.0, 1.0;
  const auto pp = propagate_pool(pool, {});
  const double expected = 1.0 / (1.0 + std::exp(-0.5));
  CHECK(expected == doctest::Approx(0.62246).epsilon(1e-5));
  const int draws = 100000;
  int zero = 0;
  for (int i = 0; i < draws; ++i)
    if (importance_resample(pp, v1(0.0), s1(1.0), rng).index == 0) ++zero;
  const double sd = std::sqrt(expected * (1 - expected) / draws);
  CHECK(std::abs(zero / static_cast<double>(draws) - expected) < 4.0 * sd);
}

TEST_CASE("importance_resample uses the propagated pool and flags degeneracy") {
  auto rng = test_rng(62);
  StagePool pool{DenseMatrix(1, 3)};
  pool.samples << 0.0, 1.0, 2.0;
  const VectorField g = [](const Vector& x) { return Vector(x.array() + 10.0); };
  const auto r = importance_resample(pool, v1(12.0), g, s1(1e-4), rng);
  CHECK(r.index == 2);
  CHECK(r.propagated[0] == 12.0);
  const Vector lw = resample_log_weights(propagate_pool(pool, g), v1(11.0), s1(1.0));
  CHECK(lw[1] == 0.0);
  CHECK(lw[0] == doctest::Approx(-0.5));

  const auto far = importance_resample(propagate_pool(pool, {}), v1(1e200), s1(1e-300), rng);
  CHECK(far.degenerate);
  CHECK(far.ess == 3.0);
  CHECK_THROWS_AS(importance_resample(StagePool{DenseMatrix(1, 0)}, v1(0.0), {}, s1(1.0), rng), Error);
}

TEST_CASE("assim_forecast examples") {
  auto rng = test_rng(63);
  CHECK(assim_forecast_with_noise(v1(1.0), v1(0.0), s1(1.0), 0.1, 1.0, v1(0.0))[0] ==
        doctest::Approx(0.95).epsilon(1e-15));
  Vector x(2);
  x << 0.4, -2.0;
  CHECK((assim_forecast_with_noise(x, x, CovSpec::scaled_identity(0.3, 2), 0.2, 0.5, Vector::Zero(2)) - x)
            .norm() == 0.0);
  const Vector w = Vector::Constant(2, 0.1);
  const Vector diffuse =
      assim_forecast_with_noise(x, Vector::Zero(2), CovSpec::scaled_identity(1e300, 2), 0.2, 0.5, w);
  CHECK((diffuse - (x + w)).norm() < 1e-15);
  CHECK_THROWS_AS(assim_forecast(x, x, CovSpec::scaled_identity(1.0, 2), 0.0, 1.0, rng), Error);
}

TEST_CASE("stage hand-off with identity map and zero process noise is exact") {
  StateSpaceModel m;
  m.dim_state = 3;
  m.propagate_is_identity = true;
  m.process_cov = CovSpec::scaled_identity(0.0, 3);
  auto rng = test_rng(64);
  Ensemble e;
  e.members = testing::normal_matrix(3, 5, rng);
  const Ensemble h = stage_handoff(e, m, Streams{1}, 2);
  CHECK(h.members == e.members);
  CHECK(h.stage == 2);
}

TEST_CASE("pool bookkeeping and a single stage match the static sampler") {
  ScalarSystem sys;
  sys.stages = 3;
  std::vector<double> truth;
  const auto obs = sys.observe(65, truth);
  AssimConfig cfg;
  cfg.ensemble_size = 7;
  cfg.iterations = 6;
  cfg.burn_in = 2;
  const GaussianPrior init{v1(sys.a * sys.x0), s1(sys.init_var)};
  const Streams streams{66};
  const FilterResult res = run_assimilation(sys.model(), obs, init, cfg, streams);
  REQUIRE(res.stages.size() == 3);
  for (const auto& st : res.stages) CHECK(st.samples.cols() == 7 * 4);
  CHECK(res.ess.front().empty());
  CHECK(res.ess.back().size() == 6u);
  CHECK(res.resamplings == 2 * 6 * 7);
  CHECK(res.ess_below_floor <= res.resamplings);

  // T = 1 is the static forecast-analysis recursion on the first stage.
  cfg.stages = 1;
  Ensemble last;
  run_assimilation(sys.model(), obs, init, cfg, streams,
                   [&](Index, Index k, const Ensemble& e) {
                     if (k == cfg.iterations) last = e;
                   });
  Ensemble ens = draw_ensemble(init, 7, streams, 1);
  const DenseMatrix h = DenseMatrix::Ones(sys.n, 1);
  const CovSpec r = CovSpec::scaled_identity(2.0 * sys.v, sys.n);
  for (Index k = 1; k <= cfg.iterations; ++k) {
    const double eps = cfg.schedule.at(1.0, static_cast<double>(k));
    const CovSpec q = s1(eps);
    const DenseMatrix gain = kalman_gain(q, h, r);
    for (Index i = 0; i < 7; ++i) {
      const Vector x = ens.members.col(i);
      auto wf = streams.at(1, k, i, Purpose::Forecast);
      auto va = streams.at(1, k, i, Purpose::Analysis);
      const Vector xf = lenkf_forecast(x, init.log_grad(x), eps, 1.0, q, wf);
      ens.members.col(i) = lenkf_analysis(xf, gain, obs[0].values, h, r, 1.0, va);
    }
  }
  CHECK((ens.members - last.members).norm() < 1e-12);

  cfg.stages = 4;
  CHECK_THROWS_AS(run_assimilation(sys.model(), obs, init, cfg, streams), Error);
  cfg.stages = 0;
  cfg.burn_in = 6;
  CHECK_THROWS_AS(run_assimilation(sys.model(), obs, init, cfg, streams), Error);
}

TEST_CASE("scalar linear-Gaussian system tracks the exact Kalman filter") {
  ScalarSystem sys;
  std::vector<double> truth;
  const auto obs = sys.observe(67, truth);
  const auto kf = sys.kalman_means(obs);
  AssimConfig cfg;
  cfg.ensemble_size = 100;
  cfg.iterations = 50;
  cfg.burn_in = 25;
  const GaussianPrior init{v1(sys.a * sys.x0), s1(sys.init_var)};
  const FilterResult res = run_assimilation(sys.model(), obs, init, cfg, Streams{68});
  for (std::size_t t = 0; t < res.stages.size(); ++t) {
    const DenseMatrix& s = res.stages[t].samples;
    const Index m = cfg.ensemble_size, keep = cfg.iterations - cfg.burn_in;
    Vector chain_means = Vector::Zero(m);
    for (Index k = 0; k < keep; ++k) chain_means += s.row(0).segment(k * m, m).transpose();
    chain_means /= static_cast<double>(keep);
    const double mean = chain_means.mean();
    const double se = std::sqrt((chain_means.array() - mean).square().sum() / (m - 1) / m);
    INFO("stage " << t + 1 << " estimate " << mean << " kf " << kf[t] << " se " << se);
    CHECK(std::abs(mean - kf[t]) < 3.0 * se);
    CHECK(res.stages[t].estimate[0] == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("augmented measurement model") {
  StateSpaceModel base;
  base.dim_state = 1;
  base.obs_block_cov = CovSpec::scaled_identity(2.0, 1);
  base.process_cov = s1(1.0);
  const MeasurementFn h = [](const Vector& z, std::span<const Index> idx) {
    return Vector::Constant(static_cast<Index>(idx.size()), z[0] * z[0]);
  };
  const MeasurementJacobianT jt = [](const Vector& z, std::span<const Index>, const Vector& r) {
    return Vector::Constant(1, 2.0 * z[0] * r.sum());
  };
  CHECK_THROWS_AS(augment_nonlinear_measurement(base, h, jt, 1.0), Error);
  CHECK_THROWS_AS(augment_nonlinear_measurement(base, h, jt, 0.0), Error);
  const auto m1 = augment_nonlinear_measurement(base, h, jt, 0.25);
  const auto m2 = augment_nonlinear_measurement(base, h, jt, 0.5);
  CHECK(m1.measurement_noise(3).identity_scale() == doctest::Approx(1.5));
  CHECK(m1.latent_noise(3).identity_scale() == doctest::Approx(0.5));
  const std::vector<Index> idx{0, 1};
  Vector gamma(2);
  gamma << 3.0, 0.5;
  const Vector g1 = augmented_assim_grad(m1, v1(1.2), gamma, idx, v1(0.0));
  const Vector g2 = augmented_assim_grad(m2, v1(1.2), gamma, idx, v1(0.0));
  // gamma block: -(gamma - h(z)) / (alpha Gamma), exact 1/alpha scaling.
  CHECK(g1[1] == doctest::Approx(-(3.0 - 1.44) / (0.25 * 2.0)));
  CHECK(g1[1] == doctest::Approx(2.0 * g2[1]).epsilon(1e-15));
  CHECK(g1[2] == doctest::Approx(2.0 * g2[2]).epsilon(1e-15));
  CHECK(g1[0] == doctest::Approx(2.0 * 1.2 * ((3.0 - 1.44) + (0.5 - 1.44)) / 0.5));
}

TEST_CASE("augmented run with linear measurement matches the direct filter") {
  ScalarSystem sys;
  sys.n = 5;
  sys.stages = 4;
  std::vector<double> truth;
  const auto obs = sys.observe(69, truth);
  const GaussianPrior init{v1(sys.a * sys.x0), s1(sys.init_var)};
  const auto kf = sys.kalman_means(obs);
  const MeasurementFn h = [](const Vector& z, std::span<const Index> idx) {
    return Vector::Constant(static_cast<Index>(idx.size()), z[0]);
  };
  const MeasurementJacobianT jt = [](const Vector&, std::span<const Index>, const Vector& r) {
    return Vector::Constant(1, r.sum());
  };
  const auto aug = augment_nonlinear_measurement(sys.model(), h, jt, 0.5);
  AssimConfig cfg;
  cfg.ensemble_size = 100;
  cfg.iterations = 60;
  cfg.burn_in = 40;
  cfg.schedule = LearningRateSchedule::constant(0.05);
  Index seen = 0;
  const FilterResult res = run_augmented_assimilation(
      aug, obs, init, cfg, Streams{70}, [&](Index t, Index k, const Ensemble& e) {
        CHECK(e.dim() == 1 + sys.n);
        if (k == 1 && t == 2) ++seen;
      });
  CHECK(seen == 1);
  for (std::size_t t = 0; t < res.stages.size(); ++t) {
    const DenseMatrix& s = res.stages[t].samples;
    const Index m = cfg.ensemble_size, keep = cfg.iterations - cfg.burn_in;
    Vector chain_means = Vector::Zero(m);
    for (Index k = 0; k < keep; ++k) chain_means += s.row(0).segment(k * m, m).transpose();
    chain_means /= static_cast<double>(keep);
    const double mean = chain_means.mean();
    const double se = std::sqrt((chain_means.array() - mean).square().sum() / (m - 1) / m);
    INFO("stage " << t + 1 << " estimate " << mean << " kf " << kf[t] << " se " << se);
    CHECK(std::abs(mean - kf[t]) < 3.0 * se + 0.02);
  }
  cfg.batch_size = 2;
  CHECK_THROWS_AS(run_augmented_assimilation(aug, obs, init, cfg, Streams{70}), Error);
}

TEST_CASE("ImportanceSampler reuses weights and agrees with importance_resample") {
  auto rng = test_rng(71);
  StagePool pool{testing::normal_matrix(2, 50, rng)};
  const auto pp = propagate_pool(pool, {});
  const Vector x = testing::normal_vector(2, rng);
  const CovSpec u = CovSpec::scaled_identity(0.7, 2);
  const ImportanceSampler sampler(pp, x, u);
  const Streams s{72};
  for (Index i = 0; i < 200; ++i) {
    auto r1 = s.at(1, i, 0, Purpose::Resample);
    auto r2 = s.at(1, i, 0, Purpose::Resample);
    const auto a = sampler.draw(r1);
    const auto b = importance_resample(pp, x, u, r2);
    CHECK(a.index == b.index);
    CHECK(a.ess == b.ess);
  }
  const Vector lw = resample_log_weights(pp, x, u);
  CHECK(sampler.ess() == doctest::Approx(lenkf::ess(as_span(lw))));
  CHECK_FALSE(sampler.degenerate());
}
