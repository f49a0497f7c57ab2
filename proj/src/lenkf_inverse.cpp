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

#include "lenkf/lenkf_inverse.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace lenkf {

DenseMatrix kalman_gain(const CovSpec& q, const DenseMatrix& h, const CovSpec& r) {
  require(q.dim() == h.cols(), ErrorCode::DimensionMismatch,
          "kalman_gain: Q is " + std::to_string(q.dim()) + "-dimensional, H has " +
              std::to_string(h.cols()) + " columns");
  require(r.dim() == h.rows(), ErrorCode::DimensionMismatch,
          "kalman_gain: R dimension differs from H rows");
  // K^T = S^{-1} H Q with S = H Q H^T + R (n x n).
  const DenseMatrix hq = q.apply(DenseMatrix(h.transpose())).transpose();
  DenseMatrix inner = hq * h.transpose();
  r.add_to(inner);
  inner = 0.5 * (inner + inner.transpose());
  return solve_spd(inner, hq).transpose();
}

Vector lenkf_forecast_with_noise(const Vector& x, const Vector& grad_log_prior, double eps,
                                 double n_over_N, const Vector& w) {
  require(grad_log_prior.size() == x.size() && w.size() == x.size(),
          ErrorCode::DimensionMismatch, "lenkf_forecast: dimension mismatch");
  return x + (0.5 * eps * n_over_N) * grad_log_prior + w;
}

Vector lenkf_forecast(const Vector& x, const Vector& grad_log_prior, double eps, double n_over_N,
                      const CovSpec& q, RngStream& rng) {
  require(eps > 0.0, ErrorCode::InvalidArgument, "lenkf_forecast: eps must be > 0");
  require(n_over_N > 0.0 && n_over_N <= 1.0, ErrorCode::InvalidArgument,
          "lenkf_forecast: n/N must be in (0,1]");
  const Vector w = sample_gaussian(Vector::Zero(x.size()), q.scaled(n_over_N), rng);
  return lenkf_forecast_with_noise(x, grad_log_prior, eps, n_over_N, w);
}

Vector lenkf_analysis_with_noise(const Vector& x_f, const DenseMatrix& gain, const Vector& y,
                                 const DenseMatrix& h, const Vector& v) {
  require(h.cols() == x_f.size() && h.rows() == y.size() && v.size() == y.size() &&
              gain.rows() == x_f.size() && gain.cols() == y.size(),
          ErrorCode::DimensionMismatch, "lenkf_analysis: dimension mismatch");
  return x_f + gain * (y - h * x_f - v);
}

Vector lenkf_analysis(const Vector& x_f, const DenseMatrix& gain, const Vector& y,
                      const DenseMatrix& h, const CovSpec& r, double n_over_N, RngStream& rng) {
  const Vector v = sample_gaussian(Vector::Zero(y.size()), r.scaled(n_over_N), rng);
  return lenkf_analysis_with_noise(x_f, gain, y, h, v);
}

Index select_block(BatchPolicy policy, Index num_blocks, Index stage, const Streams& streams,
                   Index chain) {
  require(num_blocks >= 1, ErrorCode::InvalidArgument, "select_block: no blocks");
  require(stage >= 1, ErrorCode::InvalidArgument, "select_block: stages are 1-based");
  if (policy == BatchPolicy::UniformBlock) {
    auto rng = streams.at(stage, 0, chain, Purpose::Batch);
    return static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(num_blocks)));
  }
  const Index epoch = (stage - 1) / num_blocks;
  const Index pos = (stage - 1) % num_blocks;
  std::vector<Index> order(static_cast<std::size_t>(num_blocks));
  std::iota(order.begin(), order.end(), Index{0});
  auto rng = streams.at(epoch, 0, chain, Purpose::Shuffle);
  shuffle(std::span<Index>(order), rng);
  return order[static_cast<std::size_t>(pos)];
}

namespace {

CovSpec block_cov(const CovSpec& v, Index n) {
  if (v.is_scaled_identity()) return CovSpec::scaled_identity(v.identity_scale(), n);
  require(v.dim() == n, ErrorCode::DimensionMismatch,
          "observation block covariance must match the block size");
  return v;
}

GaussianPrior default_initial(const GaussianPrior& initial, Index p) {
  if (initial.mean.size() == 0) return {Vector::Zero(p), CovSpec::scaled_identity(1.0, p)};
  require(initial.mean.size() == p && initial.cov.dim() == p, ErrorCode::DimensionMismatch,
          "initial ensemble distribution has the wrong dimension");
  return initial;
}

}  // namespace

Ensemble run_linear_inverse(const StateSpaceModel& model, const RegressionDataset& data,
                            const LinearInverseConfig& cfg, const Streams& streams,
                            const EnsembleObserver& observer) {
  const Index p = data.dim();
  require(model.dim_state == p, ErrorCode::DimensionMismatch,
          "run_linear_inverse: model and data dimensions differ");
  require(model.propagate_is_identity, ErrorCode::InvalidArgument,
          "run_linear_inverse needs an identity propagator");
  require(cfg.ensemble_size >= 1, ErrorCode::EnsembleTooSmall, "ensemble size must be >= 1");
  require(data.num_blocks() >= 1 && data.num_obs() % data.block_size == 0,
          ErrorCode::IndivisibleBatch, "dataset is not partitioned into equal blocks");
  const Index n = data.block_size;
  const double n_over_N = static_cast<double>(n) / static_cast<double>(data.num_obs());
  const CovSpec v = block_cov(model.obs_block_cov, n);
  const CovSpec r = v.scaled(2.0);
  const Index m = cfg.ensemble_size;

  Ensemble ens = draw_ensemble(default_initial(cfg.initial, p), m, streams, 0);
  for (Index t = 1; t <= cfg.stages; ++t) {
    const double eps = cfg.schedule.at(static_cast<double>(t));
    const CovSpec q = CovSpec::scaled_identity(eps, p);
    DenseMatrix h;
    Vector y;
    DenseMatrix gain;
    if (!cfg.per_chain_batches) {
      const auto& block = data.blocks[static_cast<std::size_t>(
          select_block(cfg.batch_policy, data.num_blocks(), t, streams))];
      h = data.rows(block);
      y = data.responses(block);
      gain = kalman_gain(q, h, r);
    }
    for (Index i = 0; i < m; ++i) {
      if (cfg.per_chain_batches) {
        const auto& block = data.blocks[static_cast<std::size_t>(
            select_block(cfg.batch_policy, data.num_blocks(), t, streams, i))];
        h = data.rows(block);
        y = data.responses(block);
        gain = kalman_gain(q, h, r);
      }
      const Vector x = ens.members.col(i);
      const Vector grad = model.log_prior_grad ? model.log_prior_grad(x) : Vector::Zero(p);
      auto wf = streams.at(t, 1, i, Purpose::Forecast);
      const Vector xf = lenkf_forecast(x, grad, eps, n_over_N, q, wf);
      auto va = streams.at(t, 1, i, Purpose::Analysis);
      ens.members.col(i) = lenkf_analysis(xf, gain, y, h, r, n_over_N, va);
    }
    ens.stage = t;
    if (observer) observer(t, 1, ens);
  }
  return ens;
}

// -- Nonlinear ---------------------------------------------------------------

Vector AugmentedState::stacked() const {
  Vector x(dim());
  x << z, gamma;
  return x;
}

Vector augmented_grad(const AugmentedState& state, std::span<const Index> block,
                      const NonlinearForward& fwd, const Vector& prior_grad_z, const CovSpec& v,
                      double N_over_n) {
  require(state.alpha > 0.0 && state.alpha < 1.0, ErrorCode::InvalidArgument,
          "augmented_grad: alpha must be in (0,1)");
  require(prior_grad_z.size() == state.z.size(), ErrorCode::DimensionMismatch,
          "augmented_grad: prior gradient has the wrong length");
  const Vector g = fwd.response(state.z, block);
  require(g.size() == state.gamma.size(), ErrorCode::DimensionMismatch,
          "augmented_grad: response length differs from gamma");
  const Vector scaled = v.solve(Vector(state.gamma - g)) / state.alpha;
  Vector out(state.dim());
  out.head(state.z.size()) =
      prior_grad_z + N_over_n * fwd.jacobian_transpose_apply(state.z, block, scaled);
  out.tail(state.gamma.size()) = -scaled;
  return out;
}

DenseMatrix gamma_gain(double eps, const CovSpec& r) {
  DenseMatrix s = DenseMatrix::Identity(r.dim(), r.dim()) * eps;
  r.add_to(s);
  return eps * solve_spd(s, DenseMatrix::Identity(r.dim(), r.dim()));
}

Vector gamma_update(const Vector& gamma, const Vector& response, const Vector& y, double alpha,
                    double eps, double n_over_N, const CovSpec& v, const DenseMatrix& gain,
                    RngStream& rng) {
  const Index n = gamma.size();
  const Vector bottom = -v.solve(Vector(gamma - response)) / alpha;
  Vector w(n);
  rng.fill_normal({w.data(), static_cast<std::size_t>(n)});
  const Vector gf = gamma + (0.5 * eps * n_over_N) * bottom + std::sqrt(n_over_N * eps) * w;
  const CovSpec r = v.scaled(2.0 * (1.0 - alpha) * n_over_N);
  const Vector noise = sample_gaussian(Vector::Zero(n), r, rng);
  return gf + gain * (y - gf - noise);
}

Ensemble run_nonlinear_inverse(const NonlinearForward& fwd, const NonlinearDataset& data,
                               const VectorField& prior_grad_z, const CovSpec& v_in,
                               const NonlinearInverseConfig& cfg, const Streams& streams,
                               const EnsembleObserver& observer) {
  require(cfg.alpha > 0.0 && cfg.alpha < 1.0, ErrorCode::InvalidArgument,
          "run_nonlinear_inverse: alpha must be in (0,1)");
  require(cfg.iterations >= 1, ErrorCode::InvalidArgument, "iterations must be >= 1");
  require(cfg.ensemble_size >= 1, ErrorCode::EnsembleTooSmall, "ensemble size must be >= 1");
  require(cfg.initial.mean.size() > 0, ErrorCode::InvalidArgument,
          "run_nonlinear_inverse: initial distribution for z required");
  const Index n = data.block_size();
  require(n >= 1 && n * static_cast<Index>(data.blocks.size()) == data.num_obs(),
          ErrorCode::IndivisibleBatch, "nonlinear dataset is not partitioned into equal blocks");
  const Index pz = cfg.initial.mean.size();
  const Index m = cfg.ensemble_size;
  const double n_over_N = static_cast<double>(n) / static_cast<double>(data.num_obs());
  const CovSpec v = block_cov(v_in, n);
  const CovSpec r = v.scaled(2.0 * (1.0 - cfg.alpha));

  Ensemble zs = draw_ensemble(cfg.initial, m, streams, 0);
  Ensemble full;
  full.members.resize(pz + n, m);
  for (Index t = 1; t <= cfg.stages; ++t) {
    const auto& block = data.blocks[static_cast<std::size_t>(
        select_block(cfg.batch_policy, static_cast<Index>(data.blocks.size()), t, streams))];
    Vector y(n);
    for (Index j = 0; j < n; ++j) y[j] = data.y[block[static_cast<std::size_t>(j)]];
    // Stage start: z carries over, gamma restarts at the data.
    full.members.topRows(pz) = zs.members;
    full.members.bottomRows(n) = y.replicate(1, m);
    for (Index k = 1; k <= cfg.iterations; ++k) {
      const double eps = cfg.schedule.at(static_cast<double>(t), static_cast<double>(k));
      const DenseMatrix gain = gamma_gain(eps, r);
      for (Index i = 0; i < m; ++i) {
        AugmentedState st{full.members.col(i).head(pz), full.members.col(i).tail(n), cfg.alpha};
        const Vector response = fwd.response(st.z, block);
        const Vector grad =
            augmented_grad(st, block, fwd, prior_grad_z ? prior_grad_z(st.z) : Vector::Zero(pz),
                           v, 1.0 / n_over_N);
        auto wz = streams.at(t, k, i, Purpose::Forecast);
        Vector noise(pz);
        wz.fill_normal({noise.data(), static_cast<std::size_t>(pz)});
        full.members.col(i).head(pz) =
            st.z + (0.5 * eps * n_over_N) * grad.head(pz) + std::sqrt(n_over_N * eps) * noise;
        auto wg = streams.at(t, k, i, Purpose::Analysis);
        full.members.col(i).tail(n) =
            gamma_update(st.gamma, response, y, cfg.alpha, eps, n_over_N, v, gain, wg);
      }
      full.stage = t;
      if (observer) observer(t, k, full);
    }
    zs.members = full.members.topRows(pz);
    zs.stage = t;
  }
  return zs;
}

}  // namespace lenkf
