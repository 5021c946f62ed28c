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

#ifndef DPBT_EXPERIMENT_HPP_
#define DPBT_EXPERIMENT_HPP_

/// \file
/// Running whole populations. `launch` starts one OS process per agent and
/// only talks to them through the workspace and signals. `run_cooperative`
/// runs the same agents round-robin inside the calling process, one
/// iteration per agent per round, which makes runs reproducible and cheap
/// enough for statistical tests.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "dpbt/config.hpp"
#include "dpbt/pbt_agent.hpp"
#include "dpbt/report.hpp"
#include "dpbt/trainer.hpp"

namespace dpbt {

/// Copy of cfg with PBT decisions disabled (independent runs).
ExperimentConfig baseline_config(ExperimentConfig cfg);

std::unique_ptr<Trainer> make_trainer(const ExperimentConfig& cfg, std::uint64_t seed);
AgentOptions make_agent_options(const ExperimentConfig& cfg, std::ostream* log);

/// Creates an empty workspace at root. An existing non-empty directory is
/// refused unless force is set; with force, only a directory that already
/// holds a workspace is cleared, anything else is still refused.
void prepare_workspace(const std::filesystem::path& root, bool force);

/// Name of the resolved config written into the workspace for the agents.
inline constexpr const char* kConfigFileName = "experiment.json";

/// Body of one agent process: trains until total_steps, writing decision
/// JSON lines to log. A kill-at-step fault raises SIGKILL right after the
/// publish that reaches the kill step. Stops early once stop_flag is set.
/// Returns a process exit code.
int run_agent_process(const ExperimentConfig& cfg, AgentId id, std::ostream& log,
                      const std::atomic<bool>* stop_flag = nullptr);

struct LaunchOptions {
  bool force = false;
  /// Executable that understands `agent --config <path> --id <n>`.
  std::filesystem::path exe = "/proc/self/exe";
  double poll_seconds = 0.02;
  std::ostream* progress = nullptr;
  /// When set, children get SIGTERM and finish their current iteration.
  const std::atomic<bool>* interrupt = nullptr;
};

struct LaunchResult {
  RunReport report;
  /// Raw wait status per agent (-1 for agents that were never spawned).
  std::map<AgentId, int> wait_status;
  std::vector<AgentId> killed_by_plan;
  int exit_code = 0;
};

/// Exit codes shared by the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitWorkspace = 2,
  kExitTooFewFinished = 3,
  kExitSpawn = 4,
};

/// Spawns the population, applies the fault plan, waits, and writes the
/// report into <workspace>/report. Throws ConfigError, WorkspaceError, or
/// std::system_error (spawn failure).
LaunchResult launch(const ExperimentConfig& cfg, const LaunchOptions& opts);

struct CooperativeResult {
  RunReport report;
  /// Per agent, the trace of every completed iteration.
  std::map<AgentId, std::vector<IterationTrace>> traces;
  std::vector<AgentId> killed_by_plan;
};

/// In-process equivalent of launch (no report files are written).
CooperativeResult run_cooperative(const ExperimentConfig& cfg, bool force = true);

}  // namespace dpbt

#endif  // DPBT_EXPERIMENT_HPP_
