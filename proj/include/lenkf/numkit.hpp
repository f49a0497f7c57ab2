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

#include <Eigen/Dense>

#include <span>
#include <variant>

#include "lenkf/error.hpp"
#include "lenkf/rng.hpp"

namespace lenkf {

using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Covariance in one of three storage forms.  Algorithm code only talks to
/// the CovSpec interface, so the scaled-identity and diagonal forms never
/// build a dense matrix or a factorization.
class CovSpec {
 public:
  struct ScaledIdentity {
    double scale;
    Index dim;
  };
  struct Diagonal {
    Vector diag;
  };
  struct DenseSPD {
    DenseMatrix matrix;
    Eigen::LLT<DenseMatrix> chol;
  };

  static CovSpec scaled_identity(double scale, Index dim);
  static CovSpec diagonal(Vector diag);
  /// Throws NotSPD unless `m` is symmetric and Cholesky-factorizable.
  static CovSpec dense(DenseMatrix m);

  Index dim() const noexcept;
  bool is_scaled_identity() const noexcept {
    return std::holds_alternative<ScaledIdentity>(rep_);
  }
  bool is_diagonal() const noexcept { return std::holds_alternative<Diagonal>(rep_); }
  bool is_dense() const noexcept { return std::holds_alternative<DenseSPD>(rep_); }
  /// Scale of a ScaledIdentity; throws InvalidArgument for other forms.
  double identity_scale() const;

  /// Sigma * v and Sigma * M.
  Vector apply(const Vector& v) const;
  DenseMatrix apply(const DenseMatrix& m) const;
  /// Sigma^{-1} * v.  Throws NotSPD for singular (zero-scale) forms.
  Vector solve(const Vector& v) const;
  DenseMatrix solve(const DenseMatrix& m) const;
  /// L * z with L L^T = Sigma; for scaled identity and diagonal L is the
  /// elementwise square root.
  Vector sqrt_apply(const Vector& z) const;

  DenseMatrix to_dense() const;
  /// Adds Sigma to `m` in place (m must be dim x dim).
  void add_to(DenseMatrix& m) const;
  CovSpec scaled(double c) const;

  /// log N(x; mean, Sigma).  Throws NotSPD for singular forms.
  double log_density(const Vector& x, const Vector& mean) const;

 private:
  using Rep = std::variant<ScaledIdentity, Diagonal, DenseSPD>;
  explicit CovSpec(Rep rep) : rep_(std::move(rep)) {}
  Rep rep_;
};

/// Solves A X = B for symmetric positive definite A via Cholesky.
DenseMatrix solve_spd(const DenseMatrix& a, const DenseMatrix& b);

Vector sample_gaussian(const Vector& mean, const CovSpec& cov, RngStream& rng);

/// Numerically stable log(sum(exp(values))).  -inf entries are allowed;
/// an all -inf input returns -inf.
double log_sum_exp(std::span<const double> values);

/// Exact W2 between two equal-size 1-D empirical measures (sorted coupling).
double wasserstein2_1d(std::span<const double> a, std::span<const double> b);

/// W2 between N(mean_a, cov_a) and N(mean_b, cov_b) in closed form.
double gaussian_w2(const Vector& mean_a, const CovSpec& cov_a, const Vector& mean_b,
                   const CovSpec& cov_b);

/// Same for PSD matrices such as rank-deficient sample covariances.
double gaussian_w2(const Vector& mean_a, const DenseMatrix& cov_a, const Vector& mean_b,
                   const DenseMatrix& cov_b);

/// Symmetric PSD square root, negative eigenvalues clamped to zero.
DenseMatrix symmetric_sqrt(const DenseMatrix& m);

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace lenkf
