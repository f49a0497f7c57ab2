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

#include "lenkf/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include "json.hpp"
#include "lenkf/csv.hpp"

namespace lenkf {

void MixtureGaussianPrior::validate() const {
  require(p0 > 0.0 && p0 < 1.0, ErrorCode::InvalidArgument, "mixture prior: p0 must be in (0,1)");
  require(tau1_sq > 0.0 && tau2_sq > 0.0, ErrorCode::InvalidArgument,
          "mixture prior: variances must be positive");
  require(tau1_sq < tau2_sq, ErrorCode::InvalidArgument,
          "mixture prior: spike variance must be below slab variance");
}

namespace {

// Log weights of the two mixture components at b (unnormalized densities).
std::array<double, 2> mixture_log_terms(double b, const MixtureGaussianPrior& prior) {
  const double log2pi = std::log(2.0 * std::numbers::pi);
  const double l1 = std::log1p(-prior.p0) - 0.5 * (log2pi + std::log(prior.tau1_sq)) -
                    0.5 * b * b / prior.tau1_sq;
  const double l2 = std::log(prior.p0) - 0.5 * (log2pi + std::log(prior.tau2_sq)) -
                    0.5 * b * b / prior.tau2_sq;
  return {l1, l2};
}

}  // namespace

Vector mixture_log_prior_grad(const Vector& beta, const MixtureGaussianPrior& prior) {
  Vector g(beta.size());
  for (Index i = 0; i < beta.size(); ++i) {
    const double b = beta[i];
    const auto terms = mixture_log_terms(b, prior);
    const double lse = log_sum_exp(terms);
    const double w1 = std::exp(terms[0] - lse);
    const double w2 = std::exp(terms[1] - lse);
    g[i] = -b * (w1 / prior.tau1_sq + w2 / prior.tau2_sq);
  }
  return g;
}

double mixture_log_prior(const Vector& beta, const MixtureGaussianPrior& prior) {
  double acc = 0.0;
  for (Index i = 0; i < beta.size(); ++i) acc += log_sum_exp(mixture_log_terms(beta[i], prior));
  return acc;
}

// -- Lorenz-96 ---------------------------------------------------------------

void Lorenz96Config::validate() const {
  require(p >= 4, ErrorCode::DimensionTooSmall, "Lorenz-96 needs p >= 4");
  require(dt > 0.0 && std::isfinite(dt), ErrorCode::InvalidArgument, "Lorenz-96: dt must be > 0");
  require(substeps >= 1, ErrorCode::InvalidArgument, "Lorenz-96: substeps must be >= 1");
  require(stages >= 1, ErrorCode::InvalidArgument, "Lorenz-96: stages must be >= 1");
  require(obs_fraction > 0.0 && obs_fraction <= 1.0, ErrorCode::InvalidArgument,
          "Lorenz-96: obs_fraction must be in (0,1]");
  require(process_noise_sd >= 0.0 && obs_noise_sd >= 0.0, ErrorCode::InvalidArgument,
          "Lorenz-96: noise standard deviations must be >= 0");
  require(init_perturbed_index >= 0 && init_perturbed_index < p, ErrorCode::InvalidArgument,
          "Lorenz-96: init_perturbed_index out of range");
  require(observed_per_stage() >= 1, ErrorCode::InvalidArgument,
          "Lorenz-96: obs_fraction observes no coordinates");
}

Index Lorenz96Config::observed_per_stage() const {
  return static_cast<Index>(std::floor(static_cast<double>(p) * obs_fraction + 1e-12));
}

Vector lorenz96_rhs(const Vector& x, double forcing) {
  const Index p = x.size();
  require(p >= 4, ErrorCode::DimensionTooSmall, "lorenz96_rhs needs dimension >= 4");
  Vector dx(p);
  for (Index i = 0; i < p; ++i) {
    const double xp1 = x[(i + 1) % p];
    const double xm1 = x[(i + p - 1) % p];
    const double xm2 = x[(i + p - 2) % p];
    dx[i] = (xp1 - xm2) * xm1 - x[i] + forcing;
  }
  return dx;
}

VectorField lorenz96_propagator(const Lorenz96Config& cfg) {
  const double forcing = cfg.forcing;
  const double dt = cfg.dt;
  const int substeps = cfg.substeps;
  return [forcing, dt, substeps](const Vector& x) {
    Vector y = x;
    const auto field = [forcing](const Vector& s) { return lorenz96_rhs(s, forcing); };
    for (int s = 0; s < substeps; ++s) y = rk4_step(field, y, dt);
    return y;
  };
}

DenseMatrix Observation::selection_matrix(Index p) const {
  DenseMatrix h = DenseMatrix::Zero(static_cast<Index>(indices.size()), p);
  for (std::size_t r = 0; r < indices.size(); ++r) h(static_cast<Index>(r), indices[r]) = 1.0;
  return h;
}

Lorenz96Data generate_lorenz96(const Lorenz96Config& cfg) {
  cfg.validate();
  Lorenz96Data out;
  out.config = cfg;
  out.initial_state = Vector::Constant(cfg.p, cfg.init_value);
  out.initial_state[cfg.init_perturbed_index] += cfg.init_perturbation;

  const auto g = lorenz96_propagator(cfg);
  const Index n_obs = cfg.observed_per_stage();
  std::vector<Index> all(static_cast<std::size_t>(cfg.p));
  Vector x = out.initial_state;
  for (Index t = 1; t <= cfg.stages; ++t) {
    const auto stage = static_cast<std::uint64_t>(t);
    // State noise is added before the stage is observed.
    x = g(x);
    RngStream process(cfg.seed, {stage, 0, 0, Purpose::ProcessNoise});
    for (Index i = 0; i < cfg.p; ++i) x[i] += cfg.process_noise_sd * process.normal();
    out.truth.push_back(x);

    Observation obs;
    std::iota(all.begin(), all.end(), Index{0});
    if (!cfg.observe_identity) {
      RngStream select(cfg.seed, {stage, 0, 0, Purpose::ObservationSelect});
      // Partial Fisher-Yates: the first n_obs entries become a uniform subset.
      for (Index i = 0; i < n_obs; ++i) {
        const auto j = i + static_cast<Index>(select.uniform_index(
                               static_cast<std::uint64_t>(cfg.p - i)));
        std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
      }
    }
    obs.indices.assign(all.begin(), all.begin() + n_obs);
    std::sort(obs.indices.begin(), obs.indices.end());
    RngStream noise(cfg.seed, {stage, 0, 0, Purpose::ObservationNoise});
    obs.values.resize(n_obs);
    for (Index r = 0; r < n_obs; ++r)
      obs.values[r] = x[obs.indices[static_cast<std::size_t>(r)]] + cfg.obs_noise_sd * noise.normal();
    out.observations.push_back(std::move(obs));
  }
  return out;
}

void write_lorenz96_csv(const Lorenz96Data& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    CsvWriter w(dir / "truth.csv", {"t", "component", "value"});
    for (std::size_t t = 0; t < data.truth.size(); ++t)
      for (Index i = 0; i < data.truth[t].size(); ++i)
        w.row(t + 1, i, data.truth[t][i]);
  }
  {
    CsvWriter w(dir / "observations.csv", {"t", "component", "value"});
    for (std::size_t t = 0; t < data.observations.size(); ++t) {
      const auto& o = data.observations[t];
      for (std::size_t r = 0; r < o.indices.size(); ++r)
        w.row(t + 1, o.indices[r], o.values[static_cast<Index>(r)]);
    }
  }
  const auto& c = data.config;
  nlohmann::ordered_json side = {
      {"generator", "lorenz96"},   {"p", c.p},
      {"forcing", c.forcing},      {"dt", c.dt},
      {"substeps", c.substeps},    {"stages", c.stages},
      {"obs_fraction", c.obs_fraction},
      {"process_noise_sd", c.process_noise_sd},
      {"obs_noise_sd", c.obs_noise_sd},
      {"init_value", c.init_value},
      {"init_perturbation", c.init_perturbation},
      {"init_perturbed_index", c.init_perturbed_index},
      {"observe_identity", c.observe_identity},
      {"seed", c.seed},
      {"noise_order", "state noise added before observation at each stage"}};
  std::ofstream(dir / "dataset.json") << side.dump(2) << '\n';
}

std::vector<Observation> read_observations_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  require(in.good(), ErrorCode::IoError, "cannot open " + file.string());
  std::string line;
  std::getline(in, line);
  require(line == "t,component,value", ErrorCode::IoError,
          "unexpected observations header in " + file.string());
  std::vector<Observation> out;
  std::vector<std::vector<std::pair<Index, double>>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a, b, c;
    require(std::getline(ss, a, ',') && std::getline(ss, b, ',') && std::getline(ss, c),
            ErrorCode::IoError, "malformed observation row: " + line);
    const auto t = static_cast<std::size_t>(std::stoll(a));
    require(t >= 1, ErrorCode::IoError, "stage index must start at 1");
    if (rows.size() < t) rows.resize(t);
    rows[t - 1].emplace_back(static_cast<Index>(std::stoll(b)), std::stod(c));
  }
  for (auto& r : rows) {
    std::sort(r.begin(), r.end());
    Observation o;
    o.values.resize(static_cast<Index>(r.size()));
    for (std::size_t k = 0; k < r.size(); ++k) {
      o.indices.push_back(r[k].first);
      o.values[static_cast<Index>(k)] = r[k].second;
    }
    out.push_back(std::move(o));
  }
  return out;
}

// -- Sparse linear regression -------------------------------------------------

DenseMatrix RegressionDataset::rows(std::span<const Index> idx) const {
  DenseMatrix h(static_cast<Index>(idx.size()), design.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) h.row(static_cast<Index>(r)) = design.row(idx[r]);
  return h;
}

Vector RegressionDataset::responses(std::span<const Index> idx) const {
  Vector y(static_cast<Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) y[static_cast<Index>(r)] = response[idx[r]];
  return y;
}

Vector sparse_truth(Index dim) {
  Vector beta = Vector::Zero(dim);
  for (Index i = 0; i < std::min<Index>(dim, 8); ++i) beta[i] = i < 5 ? 1.0 : -1.0;
  return beta;
}

RegressionDataset generate_regression(Index num_obs, Index dim, Index block_size,
                                      const Vector& beta_true, double rho, std::uint64_t seed) {
  require(num_obs > 0 && dim > 0 && block_size > 0, ErrorCode::InvalidArgument,
          "regression: sizes must be positive");
  require(num_obs % block_size == 0, ErrorCode::IndivisibleBatch,
          "regression: block size " + std::to_string(block_size) + " does not divide N = " +
              std::to_string(num_obs));
  require(beta_true.size() == dim, ErrorCode::DimensionMismatch,
          "regression: beta_true has the wrong length");
  require(rho >= 0.0 && rho < 1.0, ErrorCode::InvalidArgument, "regression: rho must be in [0,1)");

  RegressionDataset out;
  out.design.resize(num_obs, dim);
  out.response.resize(num_obs);
  out.true_beta = beta_true;
  out.block_size = block_size;

  const double a = std::sqrt(rho);
  const double b = std::sqrt(1.0 - rho);
  // One stream per row keeps rows independent of generation order.
  for (Index r = 0; r < num_obs; ++r) {
    RngStream rs(seed, {0, 0, static_cast<std::uint64_t>(r), Purpose::DataDesign});
    const double w = rs.normal();
    for (Index j = 0; j < dim; ++j) out.design(r, j) = a * w + b * rs.normal();
  }
  RngStream noise(seed, {0, 0, 0, Purpose::DataNoise});
  out.response = out.design * beta_true;
  for (Index r = 0; r < num_obs; ++r) out.response[r] += noise.normal();

  std::vector<Index> perm(static_cast<std::size_t>(num_obs));
  std::iota(perm.begin(), perm.end(), Index{0});
  RngStream sh(seed, {0, 0, 0, Purpose::Shuffle});
  shuffle(std::span<Index>(perm), sh);
  for (Index k = 0; k < num_obs / block_size; ++k) {
    auto first = perm.begin() + k * block_size;
    out.blocks.emplace_back(first, first + block_size);
  }
  return out;
}

void write_regression_csv(const RegressionDataset& data, const std::filesystem::path& file) {
  std::vector<std::string> header = {"row", "block", "y"};
  for (Index j = 0; j < data.dim(); ++j) header.push_back("z" + std::to_string(j));
  std::vector<Index> block_of(static_cast<std::size_t>(data.num_obs()), -1);
  for (std::size_t k = 0; k < data.blocks.size(); ++k)
    for (Index r : data.blocks[k]) block_of[static_cast<std::size_t>(r)] = static_cast<Index>(k);
  CsvWriter w(file, header);
  for (Index r = 0; r < data.num_obs(); ++r) {
    w.begin_row();
    w.field(r);
    w.field(block_of[static_cast<std::size_t>(r)]);
    w.field(data.response[r]);
    for (Index j = 0; j < data.dim(); ++j) w.field(data.design(r, j));
    w.end_row();
  }
}

}  // namespace lenkf
