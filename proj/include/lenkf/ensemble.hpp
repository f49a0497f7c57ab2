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
#include <functional>
#include <string>
#include <vector>

#include "lenkf/numkit.hpp"

namespace lenkf {

/// m particles of dimension p, stored column-wise: members.col(i) is x^{a,i}.
struct Ensemble {
  DenseMatrix members;
  Index stage = 0;

  Index size() const noexcept { return members.cols(); }
  Index dim() const noexcept { return members.rows(); }
  Vector mean() const { return members.rowwise().mean(); }
};

/// Unbiased (divisor m-1) sample covariance of the columns of `members`.
DenseMatrix sample_covariance(const DenseMatrix& members);

/// Root seed plus the path convention shared by every algorithm.
struct Streams {
  std::uint64_t seed = 0;

  RngStream at(Index stage, Index iteration, Index chain, Purpose purpose) const {
    return RngStream(seed, {static_cast<std::uint64_t>(stage),
                            static_cast<std::uint64_t>(iteration),
                            static_cast<std::uint64_t>(chain), purpose});
  }
};

struct GaussianPrior {
  Vector mean;
  CovSpec cov = CovSpec::scaled_identity(1.0, 0);

  Vector log_grad(const Vector& x) const { return -cov.solve(Vector(x - mean)); }
};

/// Draws an m-member ensemble from `prior` on the Init streams of `stage`.
Ensemble draw_ensemble(const GaussianPrior& prior, Index m, const Streams& streams,
                       Index stage = 0);

/// Auditable run events such as degenerate importance weights.
struct RunEvent {
  Index stage = 0;
  Index iteration = 0;
  Index chain = 0;
  std::string kind;
  std::string detail;
};

/// Called after every analysis sweep with the (stage, iteration) just done.
using EnsembleObserver = std::function<void(Index stage, Index iteration, const Ensemble&)>;

}  // namespace lenkf
