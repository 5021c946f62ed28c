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

#ifndef DPBT_REPORT_HPP_
#define DPBT_REPORT_HPP_

/// \file
/// Aggregates a workspace into plot-ready series: r_meta per agent, the
/// best-of-population curve, population min/mean/max per hyperparameter, each
/// agent's hyperparameter schedule and a summary of PBT decisions. The report
/// is a pure function of the records in the workspace.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dpbt/workspace.hpp"

namespace dpbt {

struct HpStat {
  std::int64_t step = 0;
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
  int count = 0;
};

struct DecisionSummary {
  int initial = 0;
  int cont = 0;
  int mutate = 0;
  int replace = 0;
};

struct RunReport {
  /// Records per agent sorted by (step, wall_seq).
  std::map<AgentId, std::vector<CheckpointRecord>> records;
  /// (step, best r_meta among agents with a record at exactly that step).
  std::vector<std::pair<std::int64_t, double>> best_curve;
  std::map<std::string, std::vector<HpStat>> hp_stats;
  /// Counts of record origins, i.e. of the decisions that produced them.
  std::map<AgentId, DecisionSummary> decisions;
  /// Target step an agent must reach to count as finished; 0 means no target.
  std::int64_t target_step = 0;

  bool finished(AgentId id) const;
  int finished_count() const;
  /// Maximum over agents of the r_meta of their newest record.
  double final_best_r_meta() const;
};

/// Throws WorkspaceError if the workspace is missing or holds no record.
RunReport build_report(const std::filesystem::path& root, std::int64_t target_step = 0);

/// Writes r_meta.tsv, best_r_meta.tsv, hp_<name>.tsv, hparams_agent_NNN.tsv,
/// decisions.tsv and summary.txt into out_dir.
void write_report(const RunReport& report, const std::filesystem::path& out_dir);

std::string summary_text(const RunReport& report);

}  // namespace dpbt

#endif  // DPBT_REPORT_HPP_
