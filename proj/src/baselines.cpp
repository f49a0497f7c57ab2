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

#include "lenkf/baselines.hpp"

#include <cmath>
#include <vector>

namespace lenkf {

BaselineAlgorithm parse_baseline(const std::string& name) {
  if (name == "sgld" || name == "SGLD") return BaselineAlgorithm::SGLD;
  if (name == "psgld" || name == "pSGLD") return BaselineAlgorithm::PSGLD;
  if (name == "sgnht" || name == "SGNHT") return BaselineAlgorithm::SGNHT;
  throw Error(ErrorCode::InvalidArgument, "unknown baseline algorithm '" + name + "'");
}

std::string to_string(BaselineAlgorithm a) {
  switch (a) {
    case BaselineAlgorithm::SGLD: return "SGLD";
    case BaselineAlgorithm::PSGLD: return "pSGLD";
    case BaselineAlgorithm::SGNHT: return "SGNHT";
  }
  return "unknown";
}

namespace {

Vector normals(Index n, RngStream& rng) {
  Vector z(n);
  rng.fill_normal({z.data(), static_cast<std::size_t>(n)});
  return z;
}

}  // namespace

Vector sgld_step_with_noise(const Vector& x, const Vector& stoch_grad, double eps,
                            const Vector& z) {
  return x + (0.5 * eps) * stoch_grad + std::sqrt(eps) * z;
}

Vector sgld_step(const Vector& x, const Vector& stoch_grad, double eps, RngStream& rng) {
  require(eps > 0.0, ErrorCode::InvalidArgument, "sgld_step: eps must be > 0");
  return sgld_step_with_noise(x, stoch_grad, eps, normals(x.size(), rng));
}

Vector psgld_step_with_noise(const Vector& x, const Vector& stoch_grad, double eps,
                             PsgldState& state, const PsgldParams& params, const Vector& z) {
  if (state.v.size() == 0) state.v = Vector::Zero(x.size());
  require(state.v.size() == x.size(), ErrorCode::DimensionMismatch,
          "psgld_step: EWMA state has the wrong length");
  state.v = params.beta * state.v + (1.0 - params.beta) * stoch_grad.cwiseAbs2();
  const Vector g = (params.lambda + state.v.array().sqrt()).inverse().matrix();
  return x + (0.5 * eps) * g.cwiseProduct(stoch_grad) +
         (eps * g).cwiseSqrt().cwiseProduct(z);
}

Vector psgld_step(const Vector& x, const Vector& stoch_grad, double eps, PsgldState& state,
                  const PsgldParams& params, RngStream& rng) {
  require(eps > 0.0, ErrorCode::InvalidArgument, "psgld_step: eps must be > 0");
  return psgld_step_with_noise(x, stoch_grad, eps, state, params, normals(x.size(), rng));
}

Vector sgnht_step_with_noise(const Vector& x, SgnhtState& state, const Vector& stoch_grad,
                             double eps, double diffusion, const Vector& z) {
  if (state.momentum.size() == 0) state.momentum = Vector::Zero(x.size());
  require(state.momentum.size() == x.size(), ErrorCode::DimensionMismatch,
          "sgnht_step: momentum has the wrong length");
  state.momentum = state.momentum + eps * stoch_grad - (state.thermostat * eps) * state.momentum +
                   std::sqrt(2.0 * diffusion * eps) * z;
  const Vector next = x + eps * state.momentum;
  state.thermostat +=
      eps * (state.momentum.squaredNorm() / static_cast<double>(x.size()) - 1.0);
  return next;
}

Vector sgnht_step(const Vector& x, SgnhtState& state, const Vector& stoch_grad, double eps,
                  double diffusion, RngStream& rng) {
  require(eps > 0.0 && diffusion >= 0.0, ErrorCode::InvalidArgument,
          "sgnht_step: need eps > 0 and A >= 0");
  return sgnht_step_with_noise(x, state, stoch_grad, eps, diffusion, normals(x.size(), rng));
}

Vector regression_stoch_grad(const Vector& beta, const RegressionDataset& data,
                             std::span<const Index> block, double noise_var,
                             const VectorField& prior_grad) {
  const DenseMatrix h = data.rows(block);
  const Vector y = data.responses(block);
  const double scale = static_cast<double>(data.num_obs()) /
                       (static_cast<double>(block.size()) * noise_var);
  Vector g = scale * (h.transpose() * (y - h * beta));
  if (prior_grad) g += prior_grad(beta);
  return g;
}

Ensemble run_baseline(const RegressionDataset& data, double noise_var,
                      const VectorField& prior_grad, const BaselineConfig& cfg,
                      const Streams& streams, const EnsembleObserver& observer) {
  require(cfg.chains >= 1, ErrorCode::EnsembleTooSmall, "need at least one chain");
  require(noise_var > 0.0, ErrorCode::InvalidArgument, "noise variance must be > 0");
  require(cfg.psgld.beta > 0.0 && cfg.psgld.beta < 1.0 && cfg.psgld.lambda > 0.0,
          ErrorCode::InvalidArgument, "pSGLD needs 0 < beta < 1 and lambda > 0");
  const Index p = data.dim();
  GaussianPrior initial = cfg.initial;
  if (initial.mean.size() == 0) initial = {Vector::Zero(p), CovSpec::scaled_identity(1.0, p)};
  Ensemble ens = draw_ensemble(initial, cfg.chains, streams, 0);

  std::vector<PsgldState> psgld(static_cast<std::size_t>(cfg.chains));
  std::vector<SgnhtState> sgnht(static_cast<std::size_t>(cfg.chains));
  for (Index i = 0; i < cfg.chains; ++i) {
    auto rng = streams.at(0, 1, i, Purpose::Init);
    sgnht[static_cast<std::size_t>(i)].momentum = normals(p, rng);
    sgnht[static_cast<std::size_t>(i)].thermostat = cfg.sgnht_diffusion;
  }

  for (Index t = 1; t <= cfg.stages; ++t) {
    const double eps = cfg.schedule.at(static_cast<double>(t));
    const auto& block = data.blocks[static_cast<std::size_t>(
        select_block(cfg.batch_policy, data.num_blocks(), t, streams))];
    for (Index i = 0; i < cfg.chains; ++i) {
      const Vector x = ens.members.col(i);
      const Vector g = regression_stoch_grad(x, data, block, noise_var, prior_grad);
      auto rng = streams.at(t, 1, i, Purpose::Baseline);
      const auto ci = static_cast<std::size_t>(i);
      switch (cfg.algorithm) {
        case BaselineAlgorithm::SGLD: ens.members.col(i) = sgld_step(x, g, eps, rng); break;
        case BaselineAlgorithm::PSGLD:
          ens.members.col(i) = psgld_step(x, g, eps, psgld[ci], cfg.psgld, rng);
          break;
        case BaselineAlgorithm::SGNHT:
          ens.members.col(i) = sgnht_step(x, sgnht[ci], g, eps, cfg.sgnht_diffusion, rng);
          break;
      }
    }
    ens.stage = t;
    if (observer) observer(t, 1, ens);
  }
  return ens;
}

}  // namespace lenkf
