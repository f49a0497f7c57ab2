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

#include "lenkf/ensemble.hpp"

namespace lenkf {

DenseMatrix sample_covariance(const DenseMatrix& members) {
  const Index m = members.cols();
  require(m >= 2, ErrorCode::EnsembleTooSmall, "sample covariance needs at least 2 members");
  const DenseMatrix centered = members.colwise() - members.rowwise().mean();
  return centered * centered.transpose() / static_cast<double>(m - 1);
}

Ensemble draw_ensemble(const GaussianPrior& prior, Index m, const Streams& streams, Index stage) {
  require(m >= 1, ErrorCode::EnsembleTooSmall, "ensemble size must be >= 1");
  Ensemble ens;
  ens.stage = stage;
  ens.members.resize(prior.mean.size(), m);
  for (Index i = 0; i < m; ++i) {
    auto rng = streams.at(stage, 0, i, Purpose::Init);
    ens.members.col(i) = sample_gaussian(prior.mean, prior.cov, rng);
  }
  return ens;
}

}  // namespace lenkf
