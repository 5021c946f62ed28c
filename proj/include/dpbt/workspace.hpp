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

#ifndef DPBT_WORKSPACE_HPP_
#define DPBT_WORKSPACE_HPP_

/// \file
/// Shared-directory coordination medium for a population of agents.
///
/// Layout (format version 1):
///
///   <root>/FORMAT_VERSION                 the integer 1
///   <root>/agent_<id>/records/<seq>.rec   one record per file, one JSON line
///   <root>/agent_<id>/blobs/<id>_<step>_<seq>.bin
///
/// Every agent directory has exactly one writer. Files never change after
/// they become visible: both blobs and records are written under a dot-prefixed
/// temporary name, flushed, then renamed into place. A record is published
/// only after its blob is in place, so a reader that sees a record can load
/// its payload unless garbage collection removed it since.
///
/// Readers never lock and never wait. Record files that fail to parse (for
/// example a truncated final line left by a foreign tool) are skipped.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dpbt/bytes.hpp"
#include "dpbt/hyperparams.hpp"

namespace dpbt {

using AgentId = int;

inline constexpr int kFormatVersion = 1;

class WorkspaceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// How the hyperparameters stored in a record came to be.
enum class OriginKind { kInitial, kContinue, kMutate, kReplace };

std::string to_string(OriginKind kind);

struct CheckpointRecord {
  AgentId agent_id = 0;
  /// Cumulative environment transitions consumed.
  std::int64_t step = 0;
  double r_meta = 0.0;
  double epsilon = 0.0;
  double n_succ = 0.0;
  HyperParams hyperparams;
  /// Blob path relative to the workspace root.
  std::string payload_ref;
  std::int64_t wall_seq = 0;
  OriginKind origin = OriginKind::kInitial;
  AgentId origin_source = -1;
  std::int64_t origin_source_step = -1;

  bool operator==(const CheckpointRecord&) const = default;
};

std::string encode_record(const CheckpointRecord& r);
std::optional<CheckpointRecord> decode_record(std::string_view line);

struct PopulationView {
  /// Records per agent, sorted by (step, wall_seq).
  std::map<AgentId, std::vector<CheckpointRecord>> agents;
  std::int64_t observed_at = 0;
};

struct WorkspaceOptions {
  /// fsync files and directories during publish.
  bool durable = true;
};

/// Creates the root (if needed) and writes FORMAT_VERSION. Throws
/// WorkspaceError when the directory holds a different format.
void init_workspace(const std::filesystem::path& root);

/// Throws WorkspaceError unless root holds a version-1 workspace.
void check_workspace(const std::filesystem::path& root);

std::filesystem::path agent_dir(const std::filesystem::path& root, AgentId id);

enum class PublishStage {
  kBlobTempWritten,
  kBlobSynced,
  kBlobRenamed,
  kRecordTempWritten,
  kRecordSynced,
  kRecordRenamed,
};

struct PublishReceipt {
  std::int64_t wall_seq = 0;
  std::string payload_ref;
  std::filesystem::path record_path;
};

/// Single writer for one agent directory. Resumes sequence numbering from
/// whatever records already exist there.
class AgentWriter {
 public:
  AgentWriter(std::filesystem::path root, AgentId id,
              WorkspaceOptions options = {});

  /// Writes the blob, then the record. Fills in agent_id, wall_seq and
  /// payload_ref. Throws WorkspaceError if the workspace cannot be written and
  /// std::invalid_argument on an invalid record.
  PublishReceipt publish(CheckpointRecord record,
                         std::span<const std::uint8_t> payload);

  /// Test hook invoked after each step of the publish sequence.
  void set_stage_hook(std::function<void(PublishStage)> hook) {
    hook_ = std::move(hook);
  }

  AgentId id() const { return id_; }
  std::int64_t next_wall_seq() const { return next_seq_; }

 private:
  void stage(PublishStage s) {
    if (hook_) hook_(s);
  }

  std::filesystem::path root_;
  AgentId id_;
  WorkspaceOptions options_;
  std::int64_t next_seq_ = 1;
  std::int64_t last_step_ = -1;
  std::function<void(PublishStage)> hook_;
};

struct ReadStats {
  std::int64_t files_parsed = 0;
  std::int64_t lines_skipped = 0;
  std::int64_t missing_payloads = 0;
  std::int64_t agents_unreadable = 0;
};

struct ReadOptions {
  /// Drop records whose blob no longer exists.
  bool require_payload = true;
};

/// Incremental reader. Record files are immutable once visible, so parsed
/// files are cached across calls; each call still lists directories and
/// checks blob existence.
class PopulationReader {
 public:
  explicit PopulationReader(std::filesystem::path root, ReadOptions options = {});

  /// Throws WorkspaceError if the root is missing. Unreadable agent
  /// directories are omitted with a warning.
  PopulationView read(AgentId self_id, std::int64_t observed_at = 0);

  const ReadStats& stats() const { return stats_; }

 private:
  std::filesystem::path root_;
  ReadOptions options_;
  std::map<std::filesystem::path, std::vector<CheckpointRecord>> cache_;
  ReadStats stats_;
};

PopulationView read_population(const std::filesystem::path& root,
                               AgentId self_id, ReadOptions options = {});

using Snapshot = std::vector<std::pair<AgentId, CheckpointRecord>>;

/// For every agent, the record with the largest step <= self_step (ties:
/// largest wall_seq). Agents with no such record are left out. Sorted by
/// agent id.
Snapshot aligned_snapshot(const PopulationView& view, std::int64_t self_step);

/// Agents whose newest record lags the median newest step of the view by more
/// than max_lag steps.
std::set<AgentId> stale_agents(const PopulationView& view, std::int64_t max_lag);

std::optional<Bytes> load_payload(const std::filesystem::path& root,
                                  const std::string& payload_ref);

struct GcOptions {
  /// Records retained per agent regardless of age. Must be >= 2.
  int keep_last_k = 3;
  /// Staleness lag used to decide which agent counts as the slowest live one;
  /// 0 treats every agent as live.
  std::int64_t stale_lag = 0;
  /// No writer is running, so leftovers of interrupted publishes beyond the
  /// last published sequence number can go as well.
  bool writers_stopped = false;
};

/// Deletes blobs that no retained record refers to, orphan blobs left by an
/// interrupted publish, and stale temporaries. Records are never deleted.
/// Returns the number of files removed.
int gc_workspace(const std::filesystem::path& root, const GcOptions& options);

}  // namespace dpbt

#endif  // DPBT_WORKSPACE_HPP_
