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

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>

namespace lenkf {

/// What a stream is used for. Part of the stream key, so adding a draw for
/// one purpose never shifts the draws of another.
enum class Purpose : std::uint32_t {
  Init = 1,
  Forecast = 2,     // w: Langevin forecast noise
  Analysis = 3,     // v / eta: perturbed observations
  Handoff = 4,      // u: stage hand-off process noise
  Resample = 5,
  Batch = 6,        // mini-batch selection
  DataDesign = 7,
  DataNoise = 8,
  ProcessNoise = 9,
  ObservationNoise = 10,
  ObservationSelect = 11,
  Shuffle = 12,
  Baseline = 13,
  Test = 99,
};

struct StreamPath {
  std::uint64_t stage = 0;
  std::uint64_t iteration = 0;
  std::uint64_t chain = 0;
  Purpose purpose = Purpose::Test;
};

/// Counter-based Philox4x32-10 stream keyed by (root_seed, path).
///
/// The 64-bit root seed is the Philox key; the path is hashed into the upper
/// half of the 128-bit counter and the lower half counts blocks.  Every
/// (seed, path) pair therefore addresses its own reproducible sequence, and
/// chains can be stepped in any order or in parallel without changing draws.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t root_seed, StreamPath path) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return next_u64(); }

  std::uint64_t next_u64() noexcept;

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() noexcept;

  /// Standard normal (Box-Muller, both variates used).
  double normal() noexcept;

  void fill_normal(std::span<double> out) noexcept;

  /// Uniform integer in [0, n) without modulo bias. n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;

  std::uint64_t root_seed() const noexcept { return seed_; }
  const StreamPath& path() const noexcept { return path_; }

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  StreamPath path_;
  std::uint64_t path_hash_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;  // 32-bit words remaining in buffer_
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// Philox4x32-10 block function; exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) noexcept;

/// Fisher-Yates shuffle of `values` driven by `rng`.
template <typename T>
void shuffle(std::span<T> values, RngStream& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace lenkf
