// Copyright 2026 The dpbt Authors.
//
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

#ifndef DPBT_CONFIG_HPP_
#define DPBT_CONFIG_HPP_

/// \file
/// Experiment description shared by the launcher, the agent processes and the
/// in-process scheduler. Stored as JSON; every field has a default.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dpbt/cem_trainer.hpp"
#include "dpbt/hyperparams.hpp"
#include "dpbt/landscape_trainer.hpp"
#include "dpbt/meta_objective.hpp"
#include "dpbt/pbt_agent.hpp"
#include "json.hpp"

namespace dpbt {

enum class TrainerKind { kLandscape, kPlanar };

std::string to_string(TrainerKind k);
TrainerKind trainer_kind_from_string(const std::string& s);

struct FaultAction {
  enum class Kind {
    /// The agent dies right after publishing its first record at or past
    /// `value` steps.
    kKillAtStep,
    /// The agent starts once every other live agent has reached `value`
    /// steps.
    kStartDelaySteps,
  };
  AgentId agent = 0;
  Kind kind = Kind::kKillAtStep;
  std::int64_t value = 0;
};

std::string to_string(FaultAction::Kind k);

struct ExperimentConfig {
  TrainerKind trainer = TrainerKind::kLandscape;
  int population_size = 8;
  /// Divides the reference PBT step constants.
  double step_scale = 10000.0;
  /// Steps each agent trains for.
  std::int64_t total_steps = 160000;
  PbtConfig pbt = PbtConfig::scaled(10000.0);
  MutationConfig mutation;
  /// Empty means the trainer's default specs.
  std::vector<ParamSpec> specs;
  ToleranceSchedule tolerance;
  Jitter jitter;
  std::vector<FaultAction> faults;
  std::uint64_t seed = 1;
  /// One per agent; empty means seed + agent id.
  std::vector<std::uint64_t> seeds;
  std::filesystem::path workspace = "workspace";
  bool durable = true;
  LandscapeConfig landscape{.steps_per_update = 0};
  CemConfig cem;
};

/// Throws ConfigError on inconsistent settings.
void check_experiment_config(const ExperimentConfig& cfg);

/// Parameter specs in force (explicit or the trainer default).
std::vector<ParamSpec> effective_specs(const ExperimentConfig& cfg);
std::uint64_t agent_seed(const ExperimentConfig& cfg, AgentId id);
/// Landscape settings with steps_per_update resolved (0 means one internal
/// iteration per PBT period).
LandscapeConfig effective_landscape(const ExperimentConfig& cfg);

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Reads and validates a config file. Throws ConfigError.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace dpbt

#endif  // DPBT_CONFIG_HPP_
