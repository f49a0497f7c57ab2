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
#include <optional>
#include <string>
#include <vector>

#include "lenkf/baselines.hpp"
#include "lenkf/enkf.hpp"
#include "lenkf/ensemble.hpp"
#include "lenkf/metrics.hpp"
#include "lenkf/models.hpp"

namespace lenkf {

enum class ExperimentKind { LinearInverse, NonlinearInverse, Lorenz96Assim, BaselineComparison };

std::string to_string(ExperimentKind kind);

/// Which (stage, iteration, chain, component) tuples go to samples.csv.
struct SnapshotSpec {
  bool all_iterations = false;  // false: last iteration of each stage only
  Index components = 10;        // leading components; 0 means all
  Index stage_stride = 1;       // stages with t % stride == 0
  Index chains = 0;             // leading chains; 0 means all

  bool wants_stage(Index t) const { return t % stage_stride == 0; }
};

struct PriorSpec {
  bool mixture = true;
  MixtureGaussianPrior mix;
  double gaussian_variance = 1.0;
};

struct ScheduleSpec {
  bool constant = false;
  double eps = 1e-3;
  double c = 0.2;
  double t0 = 100.0;
  double varpi = 0.6;
  bool driven_by_iteration = false;

  LearningRateSchedule build() const;
};

struct RegressionSpec {
  Index num_obs = 5000;
  Index dim = 200;
  Index block_size = 100;
  double rho = 0.5;
};

struct LinearSamplerSpec {
  Index ensemble_size = 100;
  Index stages = 2000;
  Index burn_in = 1000;  // stages excluded from posterior averages
  ScheduleSpec schedule;
  BatchPolicy batch_policy = BatchPolicy::UniformBlock;
  bool per_chain_batches = false;
  PriorSpec prior;
};

struct NonlinearSpec {
  Index num_obs = 1000;
  Index dim = 5;
  Index block_size = 100;
  double rho = 0.0;
  double cubic = 0.1;  // G_i(z) = a + cubic * a^3 with a = h_i^T z
  double noise_var = 1.0;
  std::vector<double> truth;  // empty: (1, -1, 0.5, 0, ...)
  Index ensemble_size = 20;
  Index stages = 500;
  Index iterations = 5;
  Index burn_in = 250;
  double alpha = 0.9;
  ScheduleSpec schedule;
  double prior_variance = 10.0;
};

struct Lorenz96Spec {
  Lorenz96Config data;
  Index replicates = 1;
  Index ensemble_size = 50;
  Index iterations = 20;
  Index burn_in = 10;
  ScheduleSpec schedule;
  Index batch_size = 0;
  bool run_enkf = true;
  Index enkf_iterations = 20;
  Index enkf_burn_in = 10;
  EnkfSweep enkf_sweep = EnkfSweep::Langevin;
  double level = 0.95;
  IntervalMode interval_mode = IntervalMode::Percentile;
  Index summary_first_stage = 21;
};

struct BaselineRunSpec {
  std::string name;  // LEnKF, SGLD, pSGLD, SGNHT
  ScheduleSpec schedule;
  PsgldParams psgld;
  double sgnht_diffusion = 10.0;
};

struct BaselineComparisonSpec {
  Index chains = 50;
  Index stages = 2000;
  Index burn_in = 1000;
  BatchPolicy batch_policy = BatchPolicy::UniformBlock;
  PriorSpec prior;
  std::vector<BaselineRunSpec> algorithms;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::LinearInverse;
  std::uint64_t seed = 1;
  std::string output_dir;
  SnapshotSpec snapshot;
  RegressionSpec regression;
  LinearSamplerSpec linear;
  NonlinearSpec nonlinear;
  Lorenz96Spec lorenz;
  BaselineComparisonSpec baseline;
};

/// Parses a config document, or the "config" member of a manifest.  Unknown
/// keys and out-of-range values throw ConfigInvalid naming the key.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& file);

/// Fully resolved config (defaults filled in) as JSON text.
std::string config_to_json(const ExperimentConfig& cfg, int indent = 2);

struct RunRecord {
  std::filesystem::path directory;
  std::vector<MetricRow> metrics;
  std::vector<RunEvent> events;
  Index sample_rows = 0;
};

/// Generates data, runs the samplers and writes samples.csv, metrics.csv,
/// events.csv and manifest.json into `out_dir` (created if missing).
RunRecord execute_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Names of the presets shipped in the preset directory.
std::vector<std::string> list_presets(const std::filesystem::path& dir);
std::filesystem::path default_preset_dir();

std::string library_version();

}  // namespace lenkf
