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

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "lenkf/experiment.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

// A bare preset name resolves to the shipped preset file.
std::filesystem::path resolve_config(const std::string& arg) {
  std::filesystem::path p(arg);
  if (std::filesystem::exists(p)) return p;
  const auto preset = lenkf::default_preset_dir() / (arg + ".json");
  if (p.extension().empty() && std::filesystem::exists(preset)) return preset;
  return p;
}

int report(const lenkf::Error& e) {
  std::cerr << "lenkf: " << e.what() << '\n';
  return e.code() == lenkf::ErrorCode::ConfigInvalid ? kConfigError : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Langevinized ensemble Kalman filter experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::string out_dir;
  std::string preset_dir = lenkf::default_preset_dir().string();

  auto* run = app.add_subcommand("run", "Run an experiment from a JSON config");
  run->add_option("--config", config_path, "Config or manifest file, or a preset name")
      ->required();
  run->add_option("--seed-override", seed_override, "Replace the config seed");
  run->add_option("--out", out_dir, "Output directory (default: config output_dir)");

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("--config", config_path, "Config or manifest file")->required();

  auto* presets = app.add_subcommand("presets", "Shipped presets");
  presets->add_option("--dir", preset_dir, "Preset directory");
  auto* list = presets->add_subcommand("list", "List preset names");
  presets->require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*list) {
      for (const auto& name : lenkf::list_presets(preset_dir)) std::cout << name << '\n';
      return kOk;
    }
    lenkf::ExperimentConfig cfg;
    try {
      cfg = lenkf::load_config(resolve_config(config_path));
    } catch (const lenkf::Error& e) {
      std::cerr << "lenkf: " << e.what() << '\n';
      return kConfigError;
    }
    if (*validate) {
      std::cout << "ok: " << lenkf::to_string(cfg.kind) << '\n';
      return kOk;
    }
    if (seed_override) cfg.seed = *seed_override;
    const std::filesystem::path dir = out_dir.empty() ? cfg.output_dir : out_dir;
    const auto rec = lenkf::execute_experiment(cfg, dir);
    std::cout << "wrote " << rec.sample_rows << " sample rows and " << rec.metrics.size()
              << " metric rows to " << dir.string() << '\n';
    return kOk;
  } catch (const lenkf::Error& e) {
    return report(e);
  } catch (const std::exception& e) {
    std::cerr << "lenkf: " << e.what() << '\n';
    return kRuntimeError;
  }
}
