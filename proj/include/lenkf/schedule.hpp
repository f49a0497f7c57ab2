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

#include <algorithm>
#include <cmath>
#include <variant>

#include "lenkf/error.hpp"

namespace lenkf {

/// eps_t = c / max(t0, t)^varpi, or a constant rate.
class LearningRateSchedule {
 public:
  struct PolyDecay {
    double c;
    double t0;
    double varpi;
  };
  struct Constant {
    double eps;
  };
  /// Which counter drives a two-index schedule eps_{t,k}.
  enum class Driver { Stage, Iteration };

  static LearningRateSchedule poly_decay(double c, double t0, double varpi,
                                         Driver driver = Driver::Stage) {
    require(c > 0.0 && std::isfinite(c), ErrorCode::InvalidArgument, "schedule: c must be > 0");
    require(t0 >= 1.0, ErrorCode::InvalidArgument, "schedule: t0 must be >= 1");
    require(varpi > 0.0 && varpi < 1.0, ErrorCode::InvalidArgument,
            "schedule: varpi must be in (0,1)");
    return LearningRateSchedule(PolyDecay{c, t0, varpi}, driver);
  }
  static LearningRateSchedule constant(double eps) {
    require(eps > 0.0 && std::isfinite(eps), ErrorCode::InvalidArgument,
            "schedule: constant rate must be > 0");
    return LearningRateSchedule(Constant{eps}, Driver::Stage);
  }

  /// Single-index evaluation (t >= 1).
  double at(double t) const {
    if (const auto* c = std::get_if<Constant>(&rep_)) return c->eps;
    const auto& p = std::get<PolyDecay>(rep_);
    return p.c / std::pow(std::max(p.t0, t), p.varpi);
  }

  /// eps_{t,k}, driven by t or by k.
  double at(double t, double k) const { return at(driver_ == Driver::Stage ? t : k); }

  Driver driver() const noexcept { return driver_; }
  bool is_constant() const noexcept { return std::holds_alternative<Constant>(rep_); }
  const std::variant<PolyDecay, Constant>& rep() const noexcept { return rep_; }

 private:
  LearningRateSchedule(std::variant<PolyDecay, Constant> rep, Driver d) : rep_(rep), driver_(d) {}
  std::variant<PolyDecay, Constant> rep_;
  Driver driver_;
};

}  // namespace lenkf
