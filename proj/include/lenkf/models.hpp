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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "lenkf/numkit.hpp"

namespace lenkf {

using VectorField = std::function<Vector(const Vector&)>;

/// x_t = g(x_{t-1}) + u_t,  y_t = H_t x_t + eta_t.
struct StateSpaceModel {
  Index dim_state = 0;
  VectorField propagate;  // g; may be empty when propagate_is_identity
  bool propagate_is_identity = false;
  CovSpec process_cov = CovSpec::scaled_identity(0.0, 0);    // U_t
  CovSpec obs_block_cov = CovSpec::scaled_identity(1.0, 0);  // V (per block / per stage)
  VectorField log_prior_grad;                                 // optional
  /// Rows of H for a set of observation indices; optional.
  std::function<DenseMatrix(std::span<const Index>)> measurement_rows;

  Vector apply_propagator(const Vector& x) const {
    return propagate_is_identity || !propagate ? x : propagate(x);
  }
};

struct MixtureGaussianPrior {
  double p0 = 0.0005;
  double tau1_sq = 0.01;
  double tau2_sq = 1.0;

  void validate() const;
};

/// Coordinatewise d/d beta_i log[(1-p0) N(beta_i; 0, tau1^2) + p0 N(beta_i; 0, tau2^2)].
Vector mixture_log_prior_grad(const Vector& beta, const MixtureGaussianPrior& prior);

/// Sum over coordinates of the mixture log-density.
double mixture_log_prior(const Vector& beta, const MixtureGaussianPrior& prior);

// -- Lorenz-96 ---------------------------------------------------------------

struct Lorenz96Config {
  Index p = 40;
  double forcing = 8.0;
  double dt = 0.01;
  /// RK4 substeps per stage; one step of length dt per stage by default.
  int substeps = 1;
  Index stages = 100;
  double obs_fraction = 0.5;
  double process_noise_sd = 1.0;
  double obs_noise_sd = 1.0;
  double init_value = 20.0;
  double init_perturbation = 0.1;
  /// 0-based coordinate that receives init_perturbation (the 20th variable).
  Index init_perturbed_index = 19;
  /// Observe every coordinate in index order instead of a random subset.
  bool observe_identity = false;
  std::uint64_t seed = 1;

  void validate() const;
  Index observed_per_stage() const;
};

Vector lorenz96_rhs(const Vector& x, double forcing);

/// One classical fourth-order Runge-Kutta step.
template <typename Field>
Vector rk4_step(Field&& f, const Vector& x, double dt) {
  const Vector k1 = f(x);
  const Vector k2 = f(Vector(x + 0.5 * dt * k1));
  const Vector k3 = f(Vector(x + 0.5 * dt * k2));
  const Vector k4 = f(Vector(x + dt * k3));
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Deterministic Lorenz-96 propagator for one stage (cfg.substeps RK4 steps).
VectorField lorenz96_propagator(const Lorenz96Config& cfg);

/// One stage of observations: y = values, H = selection of `indices`.
struct Observation {
  std::vector<Index> indices;  // sorted, distinct
  Vector values;

  /// The selection matrix H_t (|indices| x p).
  DenseMatrix selection_matrix(Index p) const;
};

struct Lorenz96Data {
  Lorenz96Config config;
  Vector initial_state;          // X_0
  std::vector<Vector> truth;     // X_1..X_T
  std::vector<Observation> observations;
};

/// Truth: X_t = RK4(X_{t-1}) + process noise, then y_t observes a fresh
/// random subset of floor(p * obs_fraction) coordinates with additive noise.
Lorenz96Data generate_lorenz96(const Lorenz96Config& cfg);

void write_lorenz96_csv(const Lorenz96Data& data, const std::filesystem::path& dir);
/// Reads observations.csv as written by write_lorenz96_csv.
std::vector<Observation> read_observations_csv(const std::filesystem::path& file);

// -- Sparse linear regression -------------------------------------------------

struct RegressionDataset {
  DenseMatrix design;   // Z, N x p
  Vector response;      // Y, N
  Vector true_beta;     // p
  Index block_size = 0; // n
  std::vector<std::vector<Index>> blocks;

  Index num_obs() const { return design.rows(); }
  Index dim() const { return design.cols(); }
  Index num_blocks() const { return static_cast<Index>(blocks.size()); }

  /// H rows and y entries for a set of observation indices.
  DenseMatrix rows(std::span<const Index> idx) const;
  Vector responses(std::span<const Index> idx) const;
};

/// Rows z = sqrt(rho) w 1 + sqrt(1 - rho) e (equicorrelated, unit variance),
/// Y = Z beta + N(0, 1) noise, blocks = contiguous chunks of a seeded row
/// permutation.
RegressionDataset generate_regression(Index num_obs, Index dim, Index block_size,
                                      const Vector& beta_true, double rho, std::uint64_t seed);

/// beta = (1,1,1,1,1,-1,-1,-1,0,...,0) of length dim.
Vector sparse_truth(Index dim);

void write_regression_csv(const RegressionDataset& data, const std::filesystem::path& file);

}  // namespace lenkf
