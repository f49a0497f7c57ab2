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

#include "lenkf/experiment.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lenkf/csv.hpp"
#include "lenkf/enkf.hpp"
#include "lenkf/lenkf_assim.hpp"
#include "lenkf/lenkf_inverse.hpp"

namespace lenkf {

using nlohmann::json;

std::string library_version() { return "0.1.0"; }

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::LinearInverse: return "linear_inverse";
    case ExperimentKind::NonlinearInverse: return "nonlinear_inverse";
    case ExperimentKind::Lorenz96Assim: return "lorenz96_assim";
    case ExperimentKind::BaselineComparison: return "baseline_comparison";
  }
  return "unknown";
}

LearningRateSchedule ScheduleSpec::build() const {
  if (constant) return LearningRateSchedule::constant(eps);
  return LearningRateSchedule::poly_decay(
      c, t0, varpi,
      driven_by_iteration ? LearningRateSchedule::Driver::Iteration
                          : LearningRateSchedule::Driver::Stage);
}

namespace {

[[noreturn]] void config_error(const std::string& key, const std::string& msg) {
  throw Error(ErrorCode::ConfigInvalid, "'" + key + "': " + msg);
}

void check(bool cond, const std::string& key, const std::string& msg) {
  if (!cond) config_error(key, msg);
}

// Strict reader over one JSON object: every key must be consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_error(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  bool has(const std::string& k) const { return j_.contains(k); }

  template <typename T>
  T get(const std::string& k, T fallback) {
    used_.insert(k);
    if (!j_.contains(k)) return fallback;
    const json& v = j_.at(k);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) config_error(key(k), "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) config_error(key(k), "expected an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
          config_error(key(k), "expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) config_error(key(k), "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) config_error(key(k), "expected a string");
    }
    try {
      return v.get<T>();
    } catch (const json::exception& e) {
      config_error(key(k), e.what());
    }
  }

  Section child(const std::string& k) {
    used_.insert(k);
    static const json empty = json::object();
    return Section(j_.contains(k) ? j_.at(k) : empty, key(k));
  }

  const json& raw(const std::string& k) {
    used_.insert(k);
    return j_.at(k);
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!used_.count(item.key())) config_error(key(item.key()), "unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

ScheduleSpec read_schedule(Section s, const ScheduleSpec& def) {
  ScheduleSpec out = def;
  const std::string type = s.get<std::string>("type", def.constant ? "constant" : "poly_decay");
  if (type == "constant") {
    out.constant = true;
    out.eps = s.get("eps", def.eps);
    check(out.eps > 0.0 && std::isfinite(out.eps), s.key("eps"), "must be > 0");
  } else if (type == "poly_decay") {
    out.constant = false;
    out.c = s.get("c", def.c);
    out.t0 = s.get("t0", def.t0);
    out.varpi = s.get("varpi", def.varpi);
    const std::string driver =
        s.get<std::string>("driver", def.driven_by_iteration ? "iteration" : "stage");
    check(driver == "stage" || driver == "iteration", s.key("driver"),
          "must be 'stage' or 'iteration'");
    out.driven_by_iteration = driver == "iteration";
    check(out.c > 0.0, s.key("c"), "must be > 0");
    check(out.t0 >= 1.0, s.key("t0"), "must be >= 1");
    check(out.varpi > 0.0 && out.varpi < 1.0, s.key("varpi"), "must lie in (0,1)");
  } else {
    config_error(s.key("type"), "must be 'constant' or 'poly_decay'");
  }
  s.finish();
  return out;
}

json schedule_json(const ScheduleSpec& s) {
  if (s.constant) return {{"type", "constant"}, {"eps", s.eps}};
  return {{"type", "poly_decay"},
          {"c", s.c},
          {"t0", s.t0},
          {"varpi", s.varpi},
          {"driver", s.driven_by_iteration ? "iteration" : "stage"}};
}

PriorSpec read_prior(Section s) {
  PriorSpec out;
  const std::string type = s.get<std::string>("type", "mixture");
  if (type == "mixture") {
    out.mixture = true;
    out.mix.p0 = s.get("p0", out.mix.p0);
    out.mix.tau1_sq = s.get("tau1_sq", out.mix.tau1_sq);
    out.mix.tau2_sq = s.get("tau2_sq", out.mix.tau2_sq);
    check(out.mix.p0 > 0.0 && out.mix.p0 < 1.0, s.key("p0"), "must lie in (0,1)");
    check(out.mix.tau1_sq > 0.0, s.key("tau1_sq"), "must be > 0");
    check(out.mix.tau2_sq > 0.0, s.key("tau2_sq"), "must be > 0");
  } else if (type == "gaussian") {
    out.mixture = false;
    out.gaussian_variance = s.get("variance", out.gaussian_variance);
    check(out.gaussian_variance > 0.0, s.key("variance"), "must be > 0");
  } else {
    config_error(s.key("type"), "must be 'mixture' or 'gaussian'");
  }
  s.finish();
  return out;
}

json prior_json(const PriorSpec& p) {
  if (p.mixture)
    return {{"type", "mixture"}, {"p0", p.mix.p0}, {"tau1_sq", p.mix.tau1_sq},
            {"tau2_sq", p.mix.tau2_sq}};
  return {{"type", "gaussian"}, {"variance", p.gaussian_variance}};
}

BatchPolicy read_policy(Section& s, const std::string& k) {
  const std::string v = s.get<std::string>(k, "uniform_block");
  if (v == "uniform_block") return BatchPolicy::UniformBlock;
  if (v == "epoch_cycle") return BatchPolicy::EpochCycle;
  config_error(s.key(k), "must be 'uniform_block' or 'epoch_cycle'");
}

const char* policy_name(BatchPolicy p) {
  return p == BatchPolicy::UniformBlock ? "uniform_block" : "epoch_cycle";
}

const char* sweep_name(EnkfSweep s) {
  switch (s) {
    case EnkfSweep::Sequential: return "sequential";
    case EnkfSweep::Restart: return "restart";
    case EnkfSweep::Langevin: return "langevin";
  }
  return "sequential";
}

void positive(Index v, const std::string& key) { check(v >= 1, key, "must be >= 1"); }

RegressionSpec read_regression(Section s) {
  RegressionSpec r;
  r.num_obs = s.get("num_obs", r.num_obs);
  r.dim = s.get("dim", r.dim);
  r.block_size = s.get("block_size", r.block_size);
  r.rho = s.get("rho", r.rho);
  positive(r.num_obs, s.key("num_obs"));
  check(r.dim >= 8, s.key("dim"), "must be >= 8 (eight true coefficients)");
  positive(r.block_size, s.key("block_size"));
  check(r.num_obs % r.block_size == 0, s.key("block_size"), "must divide num_obs");
  check(r.rho >= 0.0 && r.rho < 1.0, s.key("rho"), "must lie in [0,1)");
  s.finish();
  return r;
}

json regression_json(const RegressionSpec& r) {
  return {{"num_obs", r.num_obs}, {"dim", r.dim}, {"block_size", r.block_size}, {"rho", r.rho}};
}

void read_linear(Section& root, ExperimentConfig& cfg) {
  cfg.regression = read_regression(root.child("dataset"));
  Section s = root.child("sampler");
  auto& l = cfg.linear;
  l.ensemble_size = s.get("ensemble_size", l.ensemble_size);
  l.stages = s.get("stages", l.stages);
  l.burn_in = s.get("burn_in", l.burn_in);
  l.schedule = read_schedule(s.child("schedule"), l.schedule);
  l.batch_policy = read_policy(s, "batch_policy");
  l.per_chain_batches = s.get("per_chain_batches", l.per_chain_batches);
  l.prior = read_prior(s.child("prior"));
  positive(l.ensemble_size, s.key("ensemble_size"));
  positive(l.stages, s.key("stages"));
  check(l.burn_in >= 0 && l.burn_in < l.stages, s.key("burn_in"), "must lie in [0, stages)");
  s.finish();
}

void read_nonlinear(Section& root, ExperimentConfig& cfg) {
  auto& n = cfg.nonlinear;
  {
    Section s = root.child("dataset");
    n.num_obs = s.get("num_obs", n.num_obs);
    n.dim = s.get("dim", n.dim);
    n.block_size = s.get("block_size", n.block_size);
    n.rho = s.get("rho", n.rho);
    n.cubic = s.get("cubic", n.cubic);
    n.noise_var = s.get("noise_var", n.noise_var);
    n.truth = s.get("truth", n.truth);
    positive(n.num_obs, s.key("num_obs"));
    positive(n.dim, s.key("dim"));
    positive(n.block_size, s.key("block_size"));
    check(n.num_obs % n.block_size == 0, s.key("block_size"), "must divide num_obs");
    check(n.rho >= 0.0 && n.rho < 1.0, s.key("rho"), "must lie in [0,1)");
    check(n.cubic >= 0.0, s.key("cubic"), "must be >= 0");
    check(n.noise_var > 0.0, s.key("noise_var"), "must be > 0");
    check(n.truth.empty() || static_cast<Index>(n.truth.size()) == n.dim, s.key("truth"),
          "length must equal dim");
    s.finish();
  }
  Section s = root.child("sampler");
  n.ensemble_size = s.get("ensemble_size", n.ensemble_size);
  n.stages = s.get("stages", n.stages);
  n.iterations = s.get("iterations", n.iterations);
  n.burn_in = s.get("burn_in", n.burn_in);
  n.alpha = s.get("alpha", n.alpha);
  n.schedule = read_schedule(s.child("schedule"), n.schedule);
  n.prior_variance = s.get("prior_variance", n.prior_variance);
  positive(n.ensemble_size, s.key("ensemble_size"));
  positive(n.stages, s.key("stages"));
  positive(n.iterations, s.key("iterations"));
  check(n.burn_in >= 0 && n.burn_in < n.stages, s.key("burn_in"), "must lie in [0, stages)");
  check(n.alpha > 0.0 && n.alpha < 1.0, s.key("alpha"), "must lie in (0,1)");
  check(n.prior_variance > 0.0, s.key("prior_variance"), "must be > 0");
  s.finish();
}

void read_lorenz(Section& root, ExperimentConfig& cfg) {
  auto& l = cfg.lorenz;
  {
    Section s = root.child("dataset");
    auto& d = l.data;
    d.p = s.get("p", d.p);
    d.forcing = s.get("forcing", d.forcing);
    d.dt = s.get("dt", d.dt);
    d.substeps = s.get("substeps", d.substeps);
    d.stages = s.get("stages", d.stages);
    d.obs_fraction = s.get("obs_fraction", d.obs_fraction);
    d.process_noise_sd = s.get("process_noise_sd", d.process_noise_sd);
    d.obs_noise_sd = s.get("obs_noise_sd", d.obs_noise_sd);
    d.init_value = s.get("init_value", d.init_value);
    d.init_perturbation = s.get("init_perturbation", d.init_perturbation);
    d.init_perturbed_index = s.get("init_perturbed_index", d.init_perturbed_index);
    d.observe_identity = s.get("observe_identity", d.observe_identity);
    s.finish();
    try {
      d.validate();
    } catch (const Error& e) {
      config_error(s.key(""), e.what());
    }
    check(d.process_noise_sd > 0.0, s.key("process_noise_sd"), "must be > 0");
    check(d.obs_noise_sd > 0.0, s.key("obs_noise_sd"), "must be > 0");
  }
  l.replicates = root.get("replicates", l.replicates);
  positive(l.replicates, root.key("replicates"));
  {
    Section s = root.child("sampler");
    l.ensemble_size = s.get("ensemble_size", l.ensemble_size);
    l.iterations = s.get("iterations", l.iterations);
    l.burn_in = s.get("burn_in", l.burn_in);
    ScheduleSpec def;
    def.c = 0.5;
    def.t0 = 1.0;
    def.varpi = 0.9;
    def.driven_by_iteration = true;
    l.schedule = read_schedule(s.child("schedule"), def);
    l.batch_size = s.get("batch_size", l.batch_size);
    check(l.ensemble_size >= 2, s.key("ensemble_size"), "must be >= 2");
    positive(l.iterations, s.key("iterations"));
    check(l.burn_in >= 0 && l.burn_in < l.iterations, s.key("burn_in"),
          "must lie in [0, iterations)");
    check(l.batch_size >= 0, s.key("batch_size"), "must be >= 0");
    s.finish();
  }
  {
    Section s = root.child("enkf");
    l.run_enkf = s.get("enabled", l.run_enkf);
    l.enkf_iterations = s.get("iterations", l.iterations);
    l.enkf_burn_in = s.get("burn_in", l.burn_in);
    const std::string sweep = s.get<std::string>("sweep", sweep_name(l.enkf_sweep));
    if (sweep == "sequential") l.enkf_sweep = EnkfSweep::Sequential;
    else if (sweep == "restart") l.enkf_sweep = EnkfSweep::Restart;
    else if (sweep == "langevin") l.enkf_sweep = EnkfSweep::Langevin;
    else config_error(s.key("sweep"), "must be 'sequential', 'restart' or 'langevin'");
    positive(l.enkf_iterations, s.key("iterations"));
    check(l.enkf_burn_in >= 0 && l.enkf_burn_in < l.enkf_iterations, s.key("burn_in"),
          "must lie in [0, iterations)");
    s.finish();
  }
  {
    Section s = root.child("metrics");
    l.level = s.get("level", l.level);
    const std::string mode = s.get<std::string>("interval_mode", "percentile");
    check(mode == "percentile" || mode == "gaussian", s.key("interval_mode"),
          "must be 'percentile' or 'gaussian'");
    l.interval_mode = mode == "gaussian" ? IntervalMode::Gaussian : IntervalMode::Percentile;
    l.summary_first_stage = s.get("summary_first_stage", l.summary_first_stage);
    check(l.level > 0.0 && l.level < 1.0, s.key("level"), "must lie in (0,1)");
    check(l.summary_first_stage >= 1 && l.summary_first_stage <= l.data.stages,
          s.key("summary_first_stage"), "must lie in [1, stages]");
    s.finish();
  }
}

void read_baseline(Section& root, ExperimentConfig& cfg) {
  cfg.regression = read_regression(root.child("dataset"));
  auto& b = cfg.baseline;
  {
    Section s = root.child("sampler");
    b.chains = s.get("chains", b.chains);
    b.stages = s.get("stages", b.stages);
    b.burn_in = s.get("burn_in", b.burn_in);
    b.batch_policy = read_policy(s, "batch_policy");
    b.prior = read_prior(s.child("prior"));
    positive(b.chains, s.key("chains"));
    positive(b.stages, s.key("stages"));
    check(b.burn_in >= 0 && b.burn_in < b.stages, s.key("burn_in"), "must lie in [0, stages)");
    s.finish();
  }
  check(root.has("algorithms"), root.key("algorithms"), "required");
  const json& algs = root.raw("algorithms");
  check(algs.is_array() && !algs.empty(), root.key("algorithms"), "expected a non-empty array");
  std::set<std::string> seen;
  for (std::size_t a = 0; a < algs.size(); ++a) {
    Section s(algs[a], root.key("algorithms[" + std::to_string(a) + "]"));
    BaselineRunSpec r;
    r.name = s.get<std::string>("name", "");
    check(r.name == "LEnKF" || r.name == "SGLD" || r.name == "pSGLD" || r.name == "SGNHT",
          s.key("name"), "must be one of LEnKF, SGLD, pSGLD, SGNHT");
    check(seen.insert(r.name).second, s.key("name"), "duplicate algorithm");
    r.schedule = read_schedule(s.child("schedule"), r.schedule);
    r.psgld.lambda = s.get("lambda", r.psgld.lambda);
    r.psgld.beta = s.get("beta", r.psgld.beta);
    r.sgnht_diffusion = s.get("diffusion", r.sgnht_diffusion);
    check(r.psgld.lambda > 0.0, s.key("lambda"), "must be > 0");
    check(r.psgld.beta > 0.0 && r.psgld.beta < 1.0, s.key("beta"), "must lie in (0,1)");
    check(r.sgnht_diffusion >= 0.0, s.key("diffusion"), "must be >= 0");
    s.finish();
    b.algorithms.push_back(r);
  }
}

ExperimentConfig parse_json(const json& doc) {
  const json* body = &doc;
  if (doc.is_object() && doc.contains("lenkf_manifest")) {
    check(doc.contains("config"), "config", "manifest has no config member");
    body = &doc.at("config");
  }
  Section root(*body, "");
  ExperimentConfig cfg;
  const std::string kind = root.get<std::string>("experiment", "");
  if (kind == "linear_inverse") cfg.kind = ExperimentKind::LinearInverse;
  else if (kind == "nonlinear_inverse") cfg.kind = ExperimentKind::NonlinearInverse;
  else if (kind == "lorenz96_assim") cfg.kind = ExperimentKind::Lorenz96Assim;
  else if (kind == "baseline_comparison") cfg.kind = ExperimentKind::BaselineComparison;
  else
    config_error("experiment",
                 "must be one of linear_inverse, nonlinear_inverse, lorenz96_assim, "
                 "baseline_comparison");
  cfg.seed = root.get<std::uint64_t>("seed", cfg.seed);
  cfg.output_dir = root.get<std::string>("output_dir", "runs/" + kind);
  {
    Section s = root.child("snapshot");
    auto& sn = cfg.snapshot;
    const std::string it = s.get<std::string>("iterations", "last");
    check(it == "last" || it == "all", s.key("iterations"), "must be 'last' or 'all'");
    sn.all_iterations = it == "all";
    sn.components = s.get("components", sn.components);
    sn.stage_stride = s.get("stage_stride", sn.stage_stride);
    sn.chains = s.get("chains", sn.chains);
    check(sn.components >= 0, s.key("components"), "must be >= 0");
    positive(sn.stage_stride, s.key("stage_stride"));
    check(sn.chains >= 0, s.key("chains"), "must be >= 0");
    s.finish();
  }
  switch (cfg.kind) {
    case ExperimentKind::LinearInverse: read_linear(root, cfg); break;
    case ExperimentKind::NonlinearInverse: read_nonlinear(root, cfg); break;
    case ExperimentKind::Lorenz96Assim: read_lorenz(root, cfg); break;
    case ExperimentKind::BaselineComparison: read_baseline(root, cfg); break;
  }
  root.finish();
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["experiment"] = to_string(cfg.kind);
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["snapshot"] = {{"iterations", cfg.snapshot.all_iterations ? "all" : "last"},
                   {"components", cfg.snapshot.components},
                   {"stage_stride", cfg.snapshot.stage_stride},
                   {"chains", cfg.snapshot.chains}};
  switch (cfg.kind) {
    case ExperimentKind::LinearInverse: {
      const auto& l = cfg.linear;
      j["dataset"] = regression_json(cfg.regression);
      j["sampler"] = {{"ensemble_size", l.ensemble_size},
                      {"stages", l.stages},
                      {"burn_in", l.burn_in},
                      {"schedule", schedule_json(l.schedule)},
                      {"batch_policy", policy_name(l.batch_policy)},
                      {"per_chain_batches", l.per_chain_batches},
                      {"prior", prior_json(l.prior)}};
      break;
    }
    case ExperimentKind::NonlinearInverse: {
      const auto& n = cfg.nonlinear;
      j["dataset"] = {{"num_obs", n.num_obs}, {"dim", n.dim},
                      {"block_size", n.block_size}, {"rho", n.rho},
                      {"cubic", n.cubic}, {"noise_var", n.noise_var},
                      {"truth", n.truth}};
      j["sampler"] = {{"ensemble_size", n.ensemble_size}, {"stages", n.stages},
                      {"iterations", n.iterations}, {"burn_in", n.burn_in},
                      {"alpha", n.alpha}, {"schedule", schedule_json(n.schedule)},
                      {"prior_variance", n.prior_variance}};
      break;
    }
    case ExperimentKind::Lorenz96Assim: {
      const auto& l = cfg.lorenz;
      const auto& d = l.data;
      j["dataset"] = {{"p", d.p},
                      {"forcing", d.forcing},
                      {"dt", d.dt},
                      {"substeps", d.substeps},
                      {"stages", d.stages},
                      {"obs_fraction", d.obs_fraction},
                      {"process_noise_sd", d.process_noise_sd},
                      {"obs_noise_sd", d.obs_noise_sd},
                      {"init_value", d.init_value},
                      {"init_perturbation", d.init_perturbation},
                      {"init_perturbed_index", d.init_perturbed_index},
                      {"observe_identity", d.observe_identity}};
      j["replicates"] = l.replicates;
      j["sampler"] = {{"ensemble_size", l.ensemble_size}, {"iterations", l.iterations},
                      {"burn_in", l.burn_in}, {"schedule", schedule_json(l.schedule)},
                      {"batch_size", l.batch_size}};
      j["enkf"] = {{"enabled", l.run_enkf}, {"iterations", l.enkf_iterations},
                   {"burn_in", l.enkf_burn_in},
                   {"sweep", sweep_name(l.enkf_sweep)}};
      j["metrics"] = {{"level", l.level},
                      {"interval_mode",
                       l.interval_mode == IntervalMode::Gaussian ? "gaussian" : "percentile"},
                      {"summary_first_stage", l.summary_first_stage}};
      break;
    }
    case ExperimentKind::BaselineComparison: {
      const auto& b = cfg.baseline;
      j["dataset"] = regression_json(cfg.regression);
      j["sampler"] = {{"chains", b.chains}, {"stages", b.stages}, {"burn_in", b.burn_in},
                      {"batch_policy", policy_name(b.batch_policy)},
                      {"prior", prior_json(b.prior)}};
      json algs = json::array();
      for (const auto& a : b.algorithms)
        algs.push_back({{"name", a.name},
                        {"schedule", schedule_json(a.schedule)},
                        {"lambda", a.psgld.lambda},
                        {"beta", a.psgld.beta},
                        {"diffusion", a.sgnht_diffusion}});
      j["algorithms"] = algs;
      break;
    }
  }
  return j;
}

// -- Output plumbing -----------------------------------------------------------

class Recorder {
 public:
  Recorder(const std::filesystem::path& dir, const SnapshotSpec& snap)
      : snap_(snap), samples_(dir / "samples.csv", {"t", "k", "chain", "component", "value"}) {}

  /// Emits the snapshot rows for one ensemble if the cadence selects it.
  void snapshot(Index t, Index k, Index last_k, const Ensemble& ens, Index chain_offset = 0) {
    if (!snap_.wants_stage(t)) return;
    if (!snap_.all_iterations && k != last_k) return;
    const Index comps = snap_.components == 0 ? ens.dim() : std::min(snap_.components, ens.dim());
    const Index chains = snap_.chains == 0 ? ens.size() : std::min(snap_.chains, ens.size());
    for (Index i = 0; i < chains; ++i)
      for (Index c = 0; c < comps; ++c) {
        samples_.row(static_cast<std::int64_t>(t), static_cast<std::int64_t>(k),
                     static_cast<std::int64_t>(i + chain_offset), static_cast<std::int64_t>(c),
                     ens.members(c, i));
        ++rows_;
      }
  }

  void metric(Index t, std::string name, std::string aux, double value) {
    metrics.push_back({t, std::move(name), std::move(aux), value});
  }

  Index sample_rows() const { return rows_; }
  void flush() { samples_.flush(); }

  std::vector<MetricRow> metrics;
  std::vector<RunEvent> events;

 private:
  SnapshotSpec snap_;
  CsvWriter samples_;
  Index rows_ = 0;
};

VectorField prior_gradient(const PriorSpec& prior) {
  if (prior.mixture) {
    const MixtureGaussianPrior mix = prior.mix;
    return [mix](const Vector& b) { return mixture_log_prior_grad(b, mix); };
  }
  const double var = prior.gaussian_variance;
  return [var](const Vector& b) { return Vector(-b / var); };
}

struct GaussianPosterior {
  Vector mean;
  DenseMatrix cov;
};

GaussianPosterior exact_posterior(const RegressionDataset& data, double prior_var) {
  const Index p = data.dim();
  DenseMatrix prec = data.design.transpose() * data.design;
  prec.diagonal().array() += 1.0 / prior_var;
  GaussianPosterior post;
  post.cov = solve_spd(prec, DenseMatrix::Identity(p, p));
  post.mean = post.cov * (data.design.transpose() * data.response);
  return post;
}

// Running sums of per-sample inclusion probabilities over retained stages.
struct InclusionAccumulator {
  MixtureGaussianPrior prior;
  Vector sum;
  Index draws = 0;

  void add(const DenseMatrix& members) {
    if (sum.size() == 0) sum = Vector::Zero(members.rows());
    for (Index i = 0; i < members.cols(); ++i)
      for (Index c = 0; c < members.rows(); ++c)
        sum[c] += inclusion_probability(members(c, i), prior);
    draws += members.cols();
  }
};

void emit_regression_stage(Recorder& rec, Index t, const Ensemble& ens,
                           const RegressionDataset& data, const std::string& aux,
                           const GaussianPosterior* post) {
  const Vector mean = ens.mean();
  rec.metric(t, "RMSE", aux, rmse(mean, data.true_beta));
  for (Index c = 0; c < data.dim(); ++c) {
    if (data.true_beta[c] == 0.0) continue;
    rec.metric(t, "EnsembleMean", aux.empty() ? std::to_string(c) : aux + "/" + std::to_string(c),
               mean[c]);
  }
  if (post && ens.size() >= 2)
    rec.metric(t, "W2", aux, gaussian_w2(mean, sample_covariance(ens.members), post->mean, post->cov));
}

void emit_inclusion(Recorder& rec, Index t, const InclusionAccumulator& acc,
                    const RegressionDataset& data, const std::string& aux) {
  if (acc.draws == 0) return;
  const Vector incl = acc.sum / static_cast<double>(acc.draws);
  double on = 0.0, off = 0.0;
  Index n_on = 0, n_off = 0;
  for (Index c = 0; c < incl.size(); ++c) {
    const std::string a = aux.empty() ? std::to_string(c) : aux + "/" + std::to_string(c);
    rec.metric(t, "InclusionProbability", a, incl[c]);
    if (data.true_beta[c] != 0.0) {
      on += incl[c];
      ++n_on;
    } else {
      off += incl[c];
      ++n_off;
    }
  }
  if (n_on) rec.metric(t, "MeanInclusionTrue", aux, on / static_cast<double>(n_on));
  if (n_off) rec.metric(t, "MeanInclusionFalse", aux, off / static_cast<double>(n_off));
}

StateSpaceModel regression_model(const RegressionDataset& data, const PriorSpec& prior) {
  StateSpaceModel model;
  model.dim_state = data.dim();
  model.propagate_is_identity = true;
  model.obs_block_cov = CovSpec::scaled_identity(1.0, data.block_size);
  model.log_prior_grad = prior_gradient(prior);
  return model;
}

void run_linear(const ExperimentConfig& cfg, Recorder& rec) {
  const auto& r = cfg.regression;
  const auto& l = cfg.linear;
  const RegressionDataset data =
      generate_regression(r.num_obs, r.dim, r.block_size, sparse_truth(r.dim), r.rho, cfg.seed);
  const StateSpaceModel model = regression_model(data, l.prior);
  LinearInverseConfig lc;
  lc.ensemble_size = l.ensemble_size;
  lc.stages = l.stages;
  lc.schedule = l.schedule.build();
  lc.batch_policy = l.batch_policy;
  lc.per_chain_batches = l.per_chain_batches;
  GaussianPosterior post;
  const bool closed_form = !l.prior.mixture;
  if (closed_form) post = exact_posterior(data, l.prior.gaussian_variance);
  InclusionAccumulator acc{l.prior.mix, {}, 0};
  Vector mean_sum = Vector::Zero(r.dim);
  Index mean_count = 0;
  run_linear_inverse(model, data, lc, Streams{cfg.seed}, [&](Index t, Index k, const Ensemble& e) {
    rec.snapshot(t, k, 1, e);
    emit_regression_stage(rec, t, e, data, "", closed_form ? &post : nullptr);
    if (t > l.burn_in) {
      mean_sum += e.mean();
      ++mean_count;
      if (l.prior.mixture && cfg.snapshot.wants_stage(t)) acc.add(e.members);
    }
  });
  const Vector avg = mean_sum / static_cast<double>(mean_count);
  for (Index c = 0; c < r.dim; ++c) rec.metric(l.stages, "PosteriorMean", std::to_string(c), avg[c]);
  if (closed_form)
    rec.metric(l.stages, "PosteriorMeanError", "", (avg - post.mean).norm());
  if (l.prior.mixture) emit_inclusion(rec, l.stages, acc, data, "");
}

void run_nonlinear(const ExperimentConfig& cfg, Recorder& rec) {
  const auto& n = cfg.nonlinear;
  Vector truth(n.dim);
  if (n.truth.empty()) {
    truth.setZero();
    const double lead[] = {1.0, -1.0, 0.5};
    for (Index c = 0; c < std::min<Index>(n.dim, 3); ++c) truth[c] = lead[c];
  } else {
    for (Index c = 0; c < n.dim; ++c) truth[c] = n.truth[static_cast<std::size_t>(c)];
  }
  RegressionDataset design =
      generate_regression(n.num_obs, n.dim, n.block_size, truth, n.rho, cfg.seed);
  const double cubic = n.cubic;
  auto response_all = [&](const Vector& z, std::span<const Index> rows) {
    const Vector a = design.rows(rows) * z;
    return Vector(a.array() + cubic * a.array().cube());
  };
  NonlinearDataset data;
  data.blocks = design.blocks;
  {
    std::vector<Index> all(static_cast<std::size_t>(n.num_obs));
    for (Index j = 0; j < n.num_obs; ++j) all[static_cast<std::size_t>(j)] = j;
    auto rng = Streams{cfg.seed}.at(0, 0, 0, Purpose::DataNoise);
    Vector noise(n.num_obs);
    rng.fill_normal({noise.data(), static_cast<std::size_t>(n.num_obs)});
    data.y = response_all(truth, all) + std::sqrt(n.noise_var) * noise;
  }
  NonlinearForward fwd;
  fwd.response = [&](const Vector& z, std::span<const Index> block) {
    return response_all(z, block);
  };
  fwd.jacobian_transpose_apply = [&](const Vector& z, std::span<const Index> block,
                                     const Vector& resid) {
    const DenseMatrix h = design.rows(block);
    const Vector a = h * z;
    const Vector d = (1.0 + 3.0 * cubic * a.array().square()).matrix();
    return Vector(h.transpose() * d.cwiseProduct(resid));
  };
  NonlinearInverseConfig nc;
  nc.ensemble_size = n.ensemble_size;
  nc.stages = n.stages;
  nc.iterations = n.iterations;
  nc.alpha = n.alpha;
  nc.schedule = n.schedule.build();
  nc.initial = {Vector::Zero(n.dim), CovSpec::scaled_identity(n.prior_variance, n.dim)};
  const double pv = n.prior_variance;
  Vector mean_sum = Vector::Zero(n.dim);
  Index mean_count = 0;
  run_nonlinear_inverse(
      fwd, data, [pv](const Vector& z) { return Vector(-z / pv); },
      CovSpec::scaled_identity(n.noise_var, n.block_size), nc, Streams{cfg.seed},
      [&](Index t, Index k, const Ensemble& e) {
        rec.snapshot(t, k, n.iterations, e);
        if (k != n.iterations) return;
        const Vector zmean = e.members.topRows(n.dim).rowwise().mean();
        rec.metric(t, "RMSE", "", rmse(zmean, truth));
        if (t > n.burn_in) {
          mean_sum += zmean;
          ++mean_count;
        }
      });
  const Vector avg = mean_sum / static_cast<double>(mean_count);
  for (Index c = 0; c < n.dim; ++c) {
    rec.metric(n.stages, "PosteriorMean", std::to_string(c), avg[c]);
    rec.metric(n.stages, "Truth", std::to_string(c), truth[c]);
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_dev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

void run_lorenz(const ExperimentConfig& cfg, Recorder& rec) {
  const auto& l = cfg.lorenz;
  const Index p = l.data.p;
  const Index first = l.summary_first_stage;
  const Index last = l.data.stages;
  std::vector<double> lenkf_rmse, lenkf_cp, enkf_rmse, enkf_cp;

  auto summarise = [&](const FilterResult& res, const Lorenz96Data& data, const std::string& aux,
                       std::vector<double>& rmse_out, std::vector<double>& cp_out) {
    std::vector<double> rm, cp;
    for (Index t = 1; t <= last; ++t) {
      const auto& st = res.stages[static_cast<std::size_t>(t - 1)];
      const Vector& truth = data.truth[static_cast<std::size_t>(t - 1)];
      rm.push_back(rmse(st.estimate, truth));
      cp.push_back(coverage_probability(st.samples, truth, l.level, l.interval_mode));
      rec.metric(t, "RMSE", aux, rm.back());
      rec.metric(t, "CP", aux, cp.back());
    }
    const double mr = stage_average(rm, first, last);
    const double mc = stage_average(cp, first, last);
    rec.metric(0, "MeanRMSE", aux, mr);
    rec.metric(0, "MeanCP", aux, mc);
    rmse_out.push_back(mr);
    cp_out.push_back(mc);
  };

  for (Index rep = 0; rep < l.replicates; ++rep) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(rep);
    Lorenz96Config dc = l.data;
    dc.seed = seed;
    const Lorenz96Data data = generate_lorenz96(dc);
    StateSpaceModel model;
    model.dim_state = p;
    model.propagate = lorenz96_propagator(dc);
    model.process_cov = CovSpec::scaled_identity(dc.process_noise_sd * dc.process_noise_sd, p);
    model.obs_block_cov = CovSpec::scaled_identity(dc.obs_noise_sd * dc.obs_noise_sd, 1);
    const GaussianPrior initial{model.propagate(data.initial_state), model.process_cov};
    const std::string tag = "/rep" + std::to_string(rep);

    AssimConfig ac;
    ac.ensemble_size = l.ensemble_size;
    ac.iterations = l.iterations;
    ac.burn_in = l.burn_in;
    ac.schedule = l.schedule.build();
    ac.batch_size = l.batch_size;
    const Streams streams{seed};
    EnsembleObserver obs;
    if (rep == 0)
      obs = [&](Index t, Index k, const Ensemble& e) { rec.snapshot(t, k, l.iterations, e); };
    const FilterResult res = run_assimilation(model, data.observations, initial, ac, streams, obs);
    summarise(res, data, "LEnKF" + tag, lenkf_rmse, lenkf_cp);
    for (Index t = 2; t <= last; ++t)
      rec.metric(t, "MeanESS", "LEnKF" + tag, mean_of(res.ess[static_cast<std::size_t>(t - 1)]));
    if (res.resamplings > 0)
      rec.metric(0, "ESSBelowFloorFraction", "LEnKF" + tag,
                 static_cast<double>(res.ess_below_floor) / static_cast<double>(res.resamplings));
    for (const auto& ev : res.events) {
      RunEvent e = ev;
      e.detail = "LEnKF" + tag + ": " + e.detail;
      rec.events.push_back(std::move(e));
    }

    if (l.run_enkf) {
      EnkfAssimConfig ec;
      ec.ensemble_size = l.ensemble_size;
      ec.iterations = l.enkf_iterations;
      ec.burn_in = l.enkf_burn_in;
      ec.sweep = l.enkf_sweep;
      ec.schedule = ac.schedule;
      const FilterResult er = run_enkf_assimilation(model, data.observations, initial, ec,
                                                    Streams{seed ^ 0x9e3779b97f4a7c15ULL});
      summarise(er, data, "EnKF" + tag, enkf_rmse, enkf_cp);
    }
  }
  rec.metric(0, "MeanRMSE", "LEnKF", mean_of(lenkf_rmse));
  rec.metric(0, "MeanRMSE_SD", "LEnKF", std_dev(lenkf_rmse));
  rec.metric(0, "MeanCP", "LEnKF", mean_of(lenkf_cp));
  rec.metric(0, "MeanCP_SD", "LEnKF", std_dev(lenkf_cp));
  if (l.run_enkf) {
    rec.metric(0, "MeanRMSE", "EnKF", mean_of(enkf_rmse));
    rec.metric(0, "MeanRMSE_SD", "EnKF", std_dev(enkf_rmse));
    rec.metric(0, "MeanCP", "EnKF", mean_of(enkf_cp));
    rec.metric(0, "MeanCP_SD", "EnKF", std_dev(enkf_cp));
  }
}

void run_baselines(const ExperimentConfig& cfg, Recorder& rec) {
  const auto& r = cfg.regression;
  const auto& b = cfg.baseline;
  const RegressionDataset data =
      generate_regression(r.num_obs, r.dim, r.block_size, sparse_truth(r.dim), r.rho, cfg.seed);
  const StateSpaceModel model = regression_model(data, b.prior);
  const bool closed_form = !b.prior.mixture;
  GaussianPosterior post;
  if (closed_form) post = exact_posterior(data, b.prior.gaussian_variance);
  const Streams streams{cfg.seed};

  for (std::size_t a = 0; a < b.algorithms.size(); ++a) {
    const auto& alg = b.algorithms[a];
    const Index offset = static_cast<Index>(a) * b.chains;
    InclusionAccumulator acc{b.prior.mix, {}, 0};
    Vector mean_sum = Vector::Zero(r.dim);
    Index mean_count = 0;
    auto observer = [&](Index t, Index k, const Ensemble& e) {
      rec.snapshot(t, k, 1, e, offset);
      emit_regression_stage(rec, t, e, data, alg.name, closed_form ? &post : nullptr);
      if (t > b.burn_in) {
        mean_sum += e.mean();
        ++mean_count;
        if (b.prior.mixture && cfg.snapshot.wants_stage(t)) acc.add(e.members);
      }
    };
    if (alg.name == "LEnKF") {
      LinearInverseConfig lc;
      lc.ensemble_size = b.chains;
      lc.stages = b.stages;
      lc.schedule = alg.schedule.build();
      lc.batch_policy = b.batch_policy;
      run_linear_inverse(model, data, lc, streams, observer);
    } else {
      BaselineConfig bc;
      bc.algorithm = parse_baseline(alg.name);
      bc.schedule = alg.schedule.build();
      bc.chains = b.chains;
      bc.stages = b.stages;
      bc.batch_policy = b.batch_policy;
      bc.psgld = alg.psgld;
      bc.sgnht_diffusion = alg.sgnht_diffusion;
      run_baseline(data, 1.0, model.log_prior_grad, bc, streams, observer);
    }
    const Vector avg = mean_sum / static_cast<double>(mean_count);
    rec.metric(b.stages, "PosteriorMeanRMSE", alg.name, rmse(avg, data.true_beta));
    if (closed_form) rec.metric(b.stages, "PosteriorMeanError", alg.name, (avg - post.mean).norm());
    if (b.prior.mixture) emit_inclusion(rec, b.stages, acc, data, alg.name);
  }
}

void write_metrics(const std::filesystem::path& file, const std::vector<MetricRow>& rows) {
  CsvWriter w(file, {"t", "metric", "aux", "value"});
  for (const auto& m : rows) w.row(static_cast<std::int64_t>(m.stage), m.metric, m.aux, m.value);
  w.flush();
}

void write_events(const std::filesystem::path& file, const std::vector<RunEvent>& rows) {
  CsvWriter w(file, {"t", "k", "chain", "kind", "detail"});
  for (const auto& e : rows)
    w.row(static_cast<std::int64_t>(e.stage), static_cast<std::int64_t>(e.iteration),
          static_cast<std::int64_t>(e.chain), e.kind, e.detail);
  w.flush();
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("malformed JSON: ") + e.what());
  }
  return parse_json(doc);
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg, int indent) {
  return to_json(cfg).dump(indent);
}

RunRecord execute_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

  Recorder rec(out_dir, cfg.snapshot);
  switch (cfg.kind) {
    case ExperimentKind::LinearInverse: run_linear(cfg, rec); break;
    case ExperimentKind::NonlinearInverse: run_nonlinear(cfg, rec); break;
    case ExperimentKind::Lorenz96Assim: run_lorenz(cfg, rec); break;
    case ExperimentKind::BaselineComparison: run_baselines(cfg, rec); break;
  }
  rec.flush();
  write_metrics(out_dir / "metrics.csv", rec.metrics);
  write_events(out_dir / "events.csv", rec.events);

  json manifest;
  manifest["lenkf_manifest"] = 1;
  manifest["config"] = to_json(cfg);
  manifest["seed"] = cfg.seed;
  manifest["versions"] = {{"lenkf", library_version()},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                        std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                        std::to_string(EIGEN_MINOR_VERSION)},
                          {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                       std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                       std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  manifest["outputs"] = {{"samples.csv", rec.sample_rows()},
                         {"metrics.csv", rec.metrics.size()},
                         {"events.csv", rec.events.size()}};
  std::ofstream m(out_dir / "manifest.json");
  if (!m) throw Error(ErrorCode::IoError, "cannot write manifest in " + out_dir.string());
  m << manifest.dump(2) << '\n';

  RunRecord out;
  out.directory = out_dir;
  out.metrics = std::move(rec.metrics);
  out.events = std::move(rec.events);
  out.sample_rows = rec.sample_rows();
  return out;
}

std::filesystem::path default_preset_dir() {
#ifdef LENKF_PRESET_DIR
  return LENKF_PRESET_DIR;
#else
  return "presets";
#endif
}

std::vector<std::string> list_presets(const std::filesystem::path& dir) {
  std::vector<std::string> names;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec))
    if (entry.path().extension() == ".json") names.push_back(entry.path().stem().string());
  if (ec) throw Error(ErrorCode::IoError, "cannot list presets in " + dir.string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace lenkf
