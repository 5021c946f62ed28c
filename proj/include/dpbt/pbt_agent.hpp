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

#ifndef DPBT_PBT_AGENT_HPP_
#define DPBT_PBT_AGENT_HPP_

/// \file
/// Per-process decentralized PBT loop. Each agent trains for one period,
/// publishes a checkpoint, ranks itself against the step-aligned records of
/// its peers and then continues, mutates its own hyperparameters or adopts a
/// mutated copy of a top agent. There is no coordinator: the shared workspace
/// is the only channel between agents and all gating is step-based.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "dpbt/hyperparams.hpp"
#include "dpbt/meta_objective.hpp"
#include "dpbt/random.hpp"
#include "dpbt/trainer.hpp"
#include "dpbt/workspace.hpp"

namespace dpbt {

struct PbtConfig {
  int population_size = 8;
  double top_fraction = 0.3;
  double mid_fraction = 0.4;
  double bottom_fraction = 0.3;
  std::int64_t n_start = 200'000'000;
  std::int64_t n_adapt = 50'000'000;
  std::int64_t n_iter = 20'000'000;
  /// Peers lagging the median newest step by more than this many periods are
  /// ranked but never used as replacement sources.
  double stale_periods = 3.0;
  /// Disabled PBT always continues (independent-runs baseline).
  bool enabled = true;

  /// Divides all three step constants by step_scale, keeping their ratios.
  static PbtConfig scaled(double step_scale);
};

void check_pbt_config(const PbtConfig& cfg);

enum class Tier { kTop, kMid, kBottom };
std::string to_string(Tier t);

/// Agent ids sorted best first: r_meta descending, then higher step, then
/// lower agent id.
std::vector<AgentId> rank_snapshot(const Snapshot& snapshot);

/// Size of the top and bottom tiers: max(1, round(fraction * n)).
int tier_size(int n, double fraction = 0.3);

/// Splits the snapshot into top/mid/bottom. With fewer than three entries
/// everyone is mid.
std::map<AgentId, Tier> tier_assignment(const Snapshot& snapshot,
                                        double top_fraction = 0.3,
                                        double bottom_fraction = 0.3);

struct AgentState {
  AgentId agent_id = 0;
  std::int64_t step = 0;
  HyperParams hyperparams;
  Bytes trainer_payload;
  std::int64_t last_mutation_step = 0;
  ToleranceSchedule tolerance;
  Rng rng;
};

struct Decision {
  enum class Kind { kContinue, kMutateSelf, kReplace };
  Kind kind = Kind::kContinue;
  HyperParams new_params;
  AgentId source = -1;
  std::int64_t source_step = -1;
  std::string payload_ref;
};

std::string to_string(Decision::Kind k);

struct PbtContext {
  PbtConfig pbt;
  MutationConfig mutation;
  std::vector<ParamSpec> specs;
};

/// One PBT decision at state.step over a step-aligned snapshot. Uses
/// state.rng for mutation and source sampling. Peers in `ineligible` (stale
/// agents) are never chosen as sources.
Decision pbt_step(AgentState& state, const Snapshot& snapshot, const PbtContext& ctx,
                  const std::set<AgentId>& ineligible = {});

struct ApplyStats {
  int fallbacks = 0;
};

/// Applies a decision. A Replace whose blob has disappeared degrades to
/// Continue and is counted in stats.
AgentState apply_decision(AgentState state, const Decision& decision,
                          const std::filesystem::path& root, ApplyStats* stats = nullptr);

/// Everything logged about one iteration; also written as a JSON line.
struct IterationTrace {
  AgentId agent_id = 0;
  int iteration = 0;
  std::int64_t step = 0;
  double r_meta = 0.0;
  double epsilon = 0.0;
  double n_succ = 0.0;
  Tier tier = Tier::kMid;
  bool ranked = false;
  Decision::Kind decision = Decision::Kind::kContinue;
  /// Decision as applied (a failed replace shows up as continue).
  Decision::Kind applied = Decision::Kind::kContinue;
  AgentId source = -1;
  std::int64_t source_step = -1;
  /// (agent, step, r_meta) of every snapshot entry the ranking used.
  std::vector<std::tuple<AgentId, std::int64_t, double>> snapshot;
  std::vector<AgentId> top;
  std::vector<AgentId> stale;
};

std::string trace_to_json(const IterationTrace& t);
std::optional<IterationTrace> trace_from_json(const std::string& line);

struct AgentOptions {
  PbtContext context;
  ToleranceSchedule tolerance;
  Jitter jitter;
  WorkspaceOptions workspace;
  /// Decision log sink (one JSON line per iteration); may be null.
  std::ostream* log = nullptr;
  /// Called after each publish, before ranking. Used for fault injection.
  std::function<void(const AgentState&)> after_publish;
};

class PbtAgent {
 public:
  /// Samples initial hyperparameters and seeds the trainer. Throws on an
  /// invalid configuration or an unwritable workspace.
  PbtAgent(AgentId id, Trainer& trainer, std::filesystem::path root,
           std::uint64_t seed, AgentOptions options);

  IterationTrace run_iteration();

  const AgentState& state() const { return state_; }
  int iterations() const { return iterations_; }
  const ApplyStats& apply_stats() const { return apply_stats_; }
  const ReadStats& read_stats() const { return reader_.stats(); }

 private:
  Trainer& trainer_;
  std::filesystem::path root_;
  AgentOptions options_;
  AgentWriter writer_;
  PopulationReader reader_;
  AgentState state_;
  std::uint64_t seed_;
  int iterations_ = 0;
  OriginKind pending_origin_ = OriginKind::kInitial;
  AgentId pending_source_ = -1;
  std::int64_t pending_source_step_ = -1;
  ApplyStats apply_stats_;
};

struct StopCondition {
  std::int64_t max_steps = 0;      // 0: unlimited
  int max_iterations = 0;          // 0: unlimited
  const std::atomic<bool>* stop_flag = nullptr;
};

/// Runs iterations until the stop condition holds. Every iteration publishes
/// exactly one record.
AgentState run_agent(PbtAgent& agent, const StopCondition& stop);

}  // namespace dpbt

#endif  // DPBT_PBT_AGENT_HPP_
