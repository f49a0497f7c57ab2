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

#include "lenkf/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace lenkf {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_dim(Index got, Index want, const char* what) {
  require(got == want, ErrorCode::DimensionMismatch,
          std::string(what) + ": expected dimension " + std::to_string(want) + ", got " +
              std::to_string(got));
}

Eigen::LLT<DenseMatrix> factorize_spd(const DenseMatrix& a) {
  require(a.rows() == a.cols(), ErrorCode::DimensionMismatch, "matrix is not square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  require((a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale, ErrorCode::NotSPD,
          "matrix is not symmetric");
  Eigen::LLT<DenseMatrix> llt(a);
  require(llt.info() == Eigen::Success, ErrorCode::NotSPD, "Cholesky factorization failed");
  // Eigen's LLT reports success on some tiny negative pivots; check the factor.
  const auto diag = llt.matrixL().toDenseMatrix().diagonal();
  require((diag.array() > 0.0).all() && diag.allFinite(), ErrorCode::NotSPD,
          "non-positive Cholesky pivot");
  return llt;
}

}  // namespace

CovSpec CovSpec::scaled_identity(double scale, Index dim) {
  require(std::isfinite(scale) && scale >= 0.0, ErrorCode::InvalidArgument,
          "scaled identity needs a finite scale >= 0");
  require(dim >= 0, ErrorCode::InvalidArgument, "negative dimension");
  return CovSpec(ScaledIdentity{scale, dim});
}

CovSpec CovSpec::diagonal(Vector diag) {
  require(diag.allFinite() && (diag.array() >= 0.0).all(), ErrorCode::InvalidArgument,
          "diagonal covariance entries must be finite and >= 0");
  return CovSpec(Diagonal{std::move(diag)});
}

CovSpec CovSpec::dense(DenseMatrix m) {
  auto chol = factorize_spd(m);
  return CovSpec(DenseSPD{std::move(m), std::move(chol)});
}

Index CovSpec::dim() const noexcept {
  return std::visit(overloaded{[](const ScaledIdentity& s) { return s.dim; },
                               [](const Diagonal& d) { return d.diag.size(); },
                               [](const DenseSPD& d) { return d.matrix.rows(); }},
                    rep_);
}

double CovSpec::identity_scale() const {
  const auto* s = std::get_if<ScaledIdentity>(&rep_);
  require(s != nullptr, ErrorCode::InvalidArgument, "covariance is not a scaled identity");
  return s->scale;
}

Vector CovSpec::apply(const Vector& v) const {
  check_dim(v.size(), dim(), "CovSpec::apply");
  return std::visit(
      overloaded{[&](const ScaledIdentity& s) -> Vector { return s.scale * v; },
                 [&](const Diagonal& d) -> Vector { return d.diag.cwiseProduct(v); },
                 [&](const DenseSPD& d) -> Vector { return d.matrix * v; }},
      rep_);
}

DenseMatrix CovSpec::apply(const DenseMatrix& m) const {
  check_dim(m.rows(), dim(), "CovSpec::apply");
  return std::visit(
      overloaded{[&](const ScaledIdentity& s) -> DenseMatrix { return s.scale * m; },
                 [&](const Diagonal& d) -> DenseMatrix { return d.diag.asDiagonal() * m; },
                 [&](const DenseSPD& d) -> DenseMatrix { return d.matrix * m; }},
      rep_);
}

Vector CovSpec::solve(const Vector& v) const {
  check_dim(v.size(), dim(), "CovSpec::solve");
  return std::visit(overloaded{[&](const ScaledIdentity& s) -> Vector {
                                 require(s.scale > 0.0, ErrorCode::NotSPD,
                                         "singular scaled identity");
                                 return v / s.scale;
                               },
                               [&](const Diagonal& d) -> Vector {
                                 require((d.diag.array() > 0.0).all(), ErrorCode::NotSPD,
                                         "singular diagonal covariance");
                                 return v.cwiseQuotient(d.diag);
                               },
                               [&](const DenseSPD& d) -> Vector { return d.chol.solve(v); }},
                    rep_);
}

DenseMatrix CovSpec::solve(const DenseMatrix& m) const {
  check_dim(m.rows(), dim(), "CovSpec::solve");
  return std::visit(overloaded{[&](const ScaledIdentity& s) -> DenseMatrix {
                                 require(s.scale > 0.0, ErrorCode::NotSPD,
                                         "singular scaled identity");
                                 return m / s.scale;
                               },
                               [&](const Diagonal& d) -> DenseMatrix {
                                 require((d.diag.array() > 0.0).all(), ErrorCode::NotSPD,
                                         "singular diagonal covariance");
                                 return d.diag.cwiseInverse().asDiagonal() * m;
                               },
                               [&](const DenseSPD& d) -> DenseMatrix { return d.chol.solve(m); }},
                    rep_);
}

Vector CovSpec::sqrt_apply(const Vector& z) const {
  check_dim(z.size(), dim(), "CovSpec::sqrt_apply");
  return std::visit(
      overloaded{[&](const ScaledIdentity& s) -> Vector { return std::sqrt(s.scale) * z; },
                 [&](const Diagonal& d) -> Vector { return d.diag.cwiseSqrt().cwiseProduct(z); },
                 [&](const DenseSPD& d) -> Vector { return d.chol.matrixL() * z; }},
      rep_);
}

DenseMatrix CovSpec::to_dense() const {
  return std::visit(overloaded{[](const ScaledIdentity& s) -> DenseMatrix {
                                 return s.scale * DenseMatrix::Identity(s.dim, s.dim);
                               },
                               [](const Diagonal& d) -> DenseMatrix {
                                 return d.diag.asDiagonal().toDenseMatrix();
                               },
                               [](const DenseSPD& d) -> DenseMatrix { return d.matrix; }},
                    rep_);
}

void CovSpec::add_to(DenseMatrix& m) const {
  const Index n = dim();
  require(m.rows() == n && m.cols() == n, ErrorCode::DimensionMismatch,
          "CovSpec::add_to: shape mismatch");
  std::visit(overloaded{[&](const ScaledIdentity& s) { m.diagonal().array() += s.scale; },
                        [&](const Diagonal& d) { m.diagonal() += d.diag; },
                        [&](const DenseSPD& d) { m += d.matrix; }},
             rep_);
}

CovSpec CovSpec::scaled(double c) const {
  require(std::isfinite(c) && c >= 0.0, ErrorCode::InvalidArgument, "scale factor must be >= 0");
  return std::visit(overloaded{[&](const ScaledIdentity& s) {
                                 return CovSpec::scaled_identity(c * s.scale, s.dim);
                               },
                               [&](const Diagonal& d) { return CovSpec::diagonal(c * d.diag); },
                               [&](const DenseSPD& d) { return CovSpec::dense(c * d.matrix); }},
                    rep_);
}

double CovSpec::log_density(const Vector& x, const Vector& mean) const {
  check_dim(x.size(), dim(), "CovSpec::log_density");
  check_dim(mean.size(), dim(), "CovSpec::log_density");
  const Vector r = x - mean;
  const double n = static_cast<double>(dim());
  const double log2pi = std::log(2.0 * std::numbers::pi);
  return std::visit(
      overloaded{[&](const ScaledIdentity& s) {
                   require(s.scale > 0.0, ErrorCode::NotSPD, "singular scaled identity");
                   return -0.5 * (r.squaredNorm() / s.scale + n * (log2pi + std::log(s.scale)));
                 },
                 [&](const Diagonal& d) {
                   require((d.diag.array() > 0.0).all(), ErrorCode::NotSPD,
                           "singular diagonal covariance");
                   return -0.5 * (r.cwiseAbs2().cwiseQuotient(d.diag).sum() + n * log2pi +
                                  d.diag.array().log().sum());
                 },
                 [&](const DenseSPD& d) {
                   const Vector z = d.chol.matrixL().solve(r);
                   const double logdet =
                       2.0 * d.chol.matrixL().toDenseMatrix().diagonal().array().log().sum();
                   return -0.5 * (z.squaredNorm() + n * log2pi + logdet);
                 }},
      rep_);
}

DenseMatrix solve_spd(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.rows() == a.cols(), ErrorCode::DimensionMismatch, "solve_spd: A is not square");
  require(b.rows() == a.rows(), ErrorCode::DimensionMismatch,
          "solve_spd: B has " + std::to_string(b.rows()) + " rows, A is " +
              std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  return factorize_spd(a).solve(b);
}

Vector sample_gaussian(const Vector& mean, const CovSpec& cov, RngStream& rng) {
  check_dim(cov.dim(), mean.size(), "sample_gaussian");
  Vector z(mean.size());
  rng.fill_normal({z.data(), static_cast<std::size_t>(z.size())});
  return mean + cov.sqrt_apply(z);
}

double log_sum_exp(std::span<const double> values) {
  require(!values.empty(), ErrorCode::EmptyInput, "log_sum_exp of an empty sequence");
  const double mx = *std::max_element(values.begin(), values.end());
  if (mx == -std::numeric_limits<double>::infinity()) return mx;
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - mx);
  return mx + std::log(acc);
}

double wasserstein2_1d(std::span<const double> a, std::span<const double> b) {
  require(!a.empty() && !b.empty(), ErrorCode::EmptyInput, "wasserstein2_1d: empty sample");
  require(a.size() == b.size(), ErrorCode::LengthMismatch,
          "wasserstein2_1d: sample sizes differ (" + std::to_string(a.size()) + " vs " +
              std::to_string(b.size()) + ")");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    const double d = sa[i] - sb[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(sa.size()));
}

DenseMatrix symmetric_sqrt(const DenseMatrix& m) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(m);
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

double gaussian_w2(const Vector& mean_a, const CovSpec& cov_a, const Vector& mean_b,
                   const CovSpec& cov_b) {
  check_dim(cov_a.dim(), mean_a.size(), "gaussian_w2");
  check_dim(cov_b.dim(), mean_b.size(), "gaussian_w2");
  const DenseMatrix sa = cov_a.to_dense();
  const DenseMatrix sb = cov_b.to_dense();
  factorize_spd(sa);
  factorize_spd(sb);
  return gaussian_w2(mean_a, sa, mean_b, sb);
}

double gaussian_w2(const Vector& mean_a, const DenseMatrix& sa, const Vector& mean_b,
                   const DenseMatrix& sb) {
  const Index n = mean_a.size();
  check_dim(mean_b.size(), n, "gaussian_w2");
  check_dim(sa.rows(), n, "gaussian_w2");
  check_dim(sb.rows(), n, "gaussian_w2");
  const DenseMatrix rb = symmetric_sqrt(sb);
  DenseMatrix inner = rb * sa * rb;
  inner = 0.5 * (inner + inner.transpose());
  const double bures = sa.trace() + sb.trace() - 2.0 * symmetric_sqrt(inner).trace();
  return std::sqrt(std::max(0.0, (mean_a - mean_b).squaredNorm() + bures));
}

}  // namespace lenkf
