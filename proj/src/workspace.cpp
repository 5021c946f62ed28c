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

#include "dpbt/workspace.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "json.hpp"

namespace dpbt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kRecordsDir = "records";
constexpr const char* kBlobsDir = "blobs";
constexpr const char* kRecordExt = ".rec";
constexpr const char* kTmpPrefix = ".tmp.";

void warn(const std::string& msg) { std::cerr << "dpbt: warning: " << msg << "\n"; }

std::string errno_text() { return std::strerror(errno); }

/// Writes data to path with O_CREAT|O_TRUNC, optionally fsyncing.
void write_file(const fs::path& path, std::span<const std::uint8_t> data,
                bool durable) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw WorkspaceError("open " + path.string() + ": " + errno_text());
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string err = errno_text();
      ::close(fd);
      throw WorkspaceError("write " + path.string() + ": " + err);
    }
    off += static_cast<std::size_t>(n);
  }
  if (durable && ::fsync(fd) != 0) {
    const std::string err = errno_text();
    ::close(fd);
    throw WorkspaceError("fsync " + path.string() + ": " + err);
  }
  if (::close(fd) != 0) throw WorkspaceError("close " + path.string() + ": " + errno_text());
}

void sync_dir(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

void rename_into_place(const fs::path& from, const fs::path& to) {
  if (::rename(from.c_str(), to.c_str()) != 0)
    throw WorkspaceError("rename " + from.string() + " -> " + to.string() + ": " +
                         errno_text());
}

std::optional<AgentId> parse_agent_dir(const std::string& name) {
  constexpr std::string_view prefix = "agent_";
  if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0)
    return std::nullopt;
  AgentId id = 0;
  const char* first = name.data() + prefix.size();
  const char* last = name.data() + name.size();
  auto [ptr, ec] = std::from_chars(first, last, id);
  if (ec != std::errc() || ptr != last || id < 0) return std::nullopt;
  return id;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string record_file_name(std::int64_t seq) {
  std::ostringstream name;
  name << std::setw(12) << std::setfill('0') << seq << kRecordExt;
  return name.str();
}

/// Sequence number encoded in a visible record file name.
std::optional<std::int64_t> record_seq(const std::string& name) {
  const std::string_view ext = kRecordExt;
  if (name.empty() || name[0] == '.' || name.size() <= ext.size()) return std::nullopt;
  if (name.compare(name.size() - ext.size(), ext.size(), ext) != 0) return std::nullopt;
  return parse_int(std::string_view(name).substr(0, name.size() - ext.size()));
}

/// Sequence number of a blob ("<id>_<step>_<seq>.bin") or temporary
/// (".tmp.<seq>.*") file.
std::optional<std::int64_t> file_seq(const std::string& name) {
  if (name.rfind(kTmpPrefix, 0) == 0) {
    const std::string rest = name.substr(std::strlen(kTmpPrefix));
    return parse_int(std::string_view(rest).substr(0, rest.find('.')));
  }
  const auto dot = name.rfind(".bin");
  if (dot == std::string::npos || dot + 4 != name.size()) return std::nullopt;
  const auto us = name.rfind('_', dot);
  if (us == std::string::npos) return std::nullopt;
  return parse_int(std::string_view(name).substr(us + 1, dot - us - 1));
}

std::vector<CheckpointRecord> parse_record_file(const fs::path& path,
                                                ReadStats& stats) {
  std::ifstream in(path, std::ios::binary);
  std::vector<CheckpointRecord> out;
  if (!in) return out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (auto rec = decode_record(line)) {
      out.push_back(std::move(*rec));
    } else {
      ++stats.lines_skipped;
    }
  }
  ++stats.files_parsed;
  return out;
}

bool record_less(const CheckpointRecord& a, const CheckpointRecord& b) {
  return std::tie(a.step, a.wall_seq) < std::tie(b.step, b.wall_seq);
}

}  // namespace

std::string to_string(OriginKind kind) {
  switch (kind) {
    case OriginKind::kInitial:
      return "initial";
    case OriginKind::kContinue:
      return "continue";
    case OriginKind::kMutate:
      return "mutate";
    case OriginKind::kReplace:
      return "replace";
  }
  return "unknown";
}

std::string encode_record(const CheckpointRecord& r) {
  json j = {
      {"v", kFormatVersion},
      {"agent_id", r.agent_id},
      {"step", r.step},
      {"wall_seq", r.wall_seq},
      {"r_meta", r.r_meta},
      {"epsilon", r.epsilon},
      {"n_succ", r.n_succ},
      {"hyperparams", r.hyperparams},
      {"payload_ref", r.payload_ref},
      {"origin",
       {{"kind", to_string(r.origin)},
        {"source", r.origin_source},
        {"source_step", r.origin_source_step}}},
  };
  return j.dump();
}

std::optional<CheckpointRecord> decode_record(std::string_view line) {
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  try {
    if (j.at("v").get<int>() != kFormatVersion) return std::nullopt;
    CheckpointRecord r;
    r.agent_id = j.at("agent_id").get<AgentId>();
    r.step = j.at("step").get<std::int64_t>();
    r.wall_seq = j.at("wall_seq").get<std::int64_t>();
    r.r_meta = j.at("r_meta").get<double>();
    r.epsilon = j.at("epsilon").get<double>();
    r.n_succ = j.value("n_succ", 0.0);
    r.hyperparams = j.at("hyperparams").get<HyperParams>();
    r.payload_ref = j.at("payload_ref").get<std::string>();
    if (j.contains("origin")) {
      const auto& o = j.at("origin");
      const std::string kind = o.at("kind").get<std::string>();
      if (kind == "initial") r.origin = OriginKind::kInitial;
      else if (kind == "continue") r.origin = OriginKind::kContinue;
      else if (kind == "mutate") r.origin = OriginKind::kMutate;
      else if (kind == "replace") r.origin = OriginKind::kReplace;
      else return std::nullopt;
      r.origin_source = o.value("source", -1);
      r.origin_source_step = o.value("source_step", std::int64_t{-1});
    }
    if (!std::isfinite(r.r_meta) || r.step < 0) return std::nullopt;
    return r;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

void init_workspace(const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw WorkspaceError("cannot create workspace " + root.string() + ": " + ec.message());
  const fs::path marker = root / "FORMAT_VERSION";
  if (fs::exists(marker)) {
    check_workspace(root);
    return;
  }
  const std::string text = std::to_string(kFormatVersion) + "\n";
  const fs::path tmp = root / (std::string(kTmpPrefix) + "FORMAT_VERSION." +
                               std::to_string(::getpid()));
  write_file(tmp, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()),
             true);
  rename_into_place(tmp, marker);
  sync_dir(root);
}

void check_workspace(const fs::path& root) {
  if (!fs::is_directory(root)) throw WorkspaceError("workspace root missing: " + root.string());
  std::ifstream in(root / "FORMAT_VERSION");
  int version = 0;
  if (!(in >> version)) throw WorkspaceError("no FORMAT_VERSION in " + root.string());
  if (version != kFormatVersion)
    throw WorkspaceError("unsupported workspace format " + std::to_string(version));
}

fs::path agent_dir(const fs::path& root, AgentId id) {
  std::ostringstream name;
  name << "agent_" << std::setw(3) << std::setfill('0') << id;
  return root / name.str();
}

AgentWriter::AgentWriter(fs::path root, AgentId id, WorkspaceOptions options)
    : root_(std::move(root)), id_(id), options_(options) {
  if (id < 0) throw std::invalid_argument("agent id must be nonnegative");
  check_workspace(root_);
  const fs::path dir = agent_dir(root_, id_);
  std::error_code ec;
  fs::create_directories(dir / kRecordsDir, ec);
  if (!ec) fs::create_directories(dir / kBlobsDir, ec);
  if (ec) throw WorkspaceError("cannot create " + dir.string() + ": " + ec.message());

  ReadStats ignored;
  for (const auto& entry : fs::directory_iterator(dir / kRecordsDir)) {
    const auto seq = record_seq(entry.path().filename().string());
    if (!seq) continue;
    for (const auto& r : parse_record_file(entry.path(), ignored)) {
      next_seq_ = std::max(next_seq_, r.wall_seq + 1);
      last_step_ = std::max(last_step_, r.step);
    }
  }
}

PublishReceipt AgentWriter::publish(CheckpointRecord record,
                                    std::span<const std::uint8_t> payload) {
  if (record.step < last_step_)
    throw std::invalid_argument("record step decreased for agent " + std::to_string(id_));
  if (!std::isfinite(record.r_meta)) throw std::invalid_argument("r_meta not finite");
  if (!std::isfinite(record.epsilon) || record.epsilon <= 0.0)
    throw std::invalid_argument("epsilon must be positive");

  const std::int64_t seq = next_seq_;
  const fs::path dir = agent_dir(root_, id_);
  const fs::path blobs = dir / kBlobsDir;
  const fs::path records = dir / kRecordsDir;

  const std::string blob_name = std::to_string(id_) + "_" + std::to_string(record.step) +
                                "_" + std::to_string(seq) + ".bin";
  const fs::path blob_tmp = blobs / (kTmpPrefix + std::to_string(seq) + ".bin");
  write_file(blob_tmp, payload, options_.durable);
  stage(PublishStage::kBlobTempWritten);
  stage(PublishStage::kBlobSynced);
  rename_into_place(blob_tmp, blobs / blob_name);
  if (options_.durable) sync_dir(blobs);
  stage(PublishStage::kBlobRenamed);

  record.agent_id = id_;
  record.wall_seq = seq;
  record.payload_ref = (dir.filename() / kBlobsDir / blob_name).generic_string();
  const std::string line = encode_record(record) + "\n";
  const fs::path rec_tmp = records / (kTmpPrefix + std::to_string(seq) + kRecordExt);
  write_file(rec_tmp,
             std::span(reinterpret_cast<const std::uint8_t*>(line.data()), line.size()),
             options_.durable);
  stage(PublishStage::kRecordTempWritten);
  stage(PublishStage::kRecordSynced);
  const fs::path rec_path = records / record_file_name(seq);
  rename_into_place(rec_tmp, rec_path);
  if (options_.durable) sync_dir(records);
  stage(PublishStage::kRecordRenamed);

  ++next_seq_;
  last_step_ = record.step;
  return {seq, record.payload_ref, rec_path};
}

PopulationReader::PopulationReader(fs::path root, ReadOptions options)
    : root_(std::move(root)), options_(options) {}

PopulationView PopulationReader::read(AgentId self_id, std::int64_t observed_at) {
  if (!fs::is_directory(root_)) throw WorkspaceError("workspace root missing: " + root_.string());
  PopulationView view;
  view.observed_at = observed_at;

  std::error_code ec;
  fs::directory_iterator it(root_, ec);
  if (ec) throw WorkspaceError("cannot list " + root_.string() + ": " + ec.message());
  for (const auto& entry : it) {
    const auto id = parse_agent_dir(entry.path().filename().string());
    if (!id) continue;
    std::vector<CheckpointRecord> records;
    std::error_code aec;
    fs::directory_iterator rit(entry.path() / kRecordsDir, aec);
    if (aec) {
      ++stats_.agents_unreadable;
      warn("omitting agent " + std::to_string(*id) + ": " + aec.message());
      continue;
    }
    bool ok = true;
    for (; rit != fs::directory_iterator(); rit.increment(aec)) {
      const fs::path path = rit->path();
      if (!record_seq(path.filename().string())) continue;
      auto cached = cache_.find(path);
      if (cached == cache_.end()) {
        auto parsed = parse_record_file(path, stats_);
        if (parsed.empty() && !fs::exists(path)) continue;
        cached = cache_.emplace(path, std::move(parsed)).first;
      }
      for (const auto& r : cached->second) {
        if (r.agent_id != *id) {
          ++stats_.lines_skipped;
          continue;
        }
        if (options_.require_payload && !fs::exists(root_ / r.payload_ref)) {
          ++stats_.missing_payloads;
          continue;
        }
        records.push_back(r);
      }
    }
    if (aec) ok = false;
    if (!ok || !fs::exists(entry.path())) {
      ++stats_.agents_unreadable;
      warn("omitting agent " + std::to_string(*id) + " (directory vanished during read)");
      continue;
    }
    std::sort(records.begin(), records.end(), record_less);
    view.agents[*id] = std::move(records);
  }
  view.agents.try_emplace(self_id);
  return view;
}

PopulationView read_population(const fs::path& root, AgentId self_id,
                               ReadOptions options) {
  PopulationReader reader(root, options);
  return reader.read(self_id);
}

Snapshot aligned_snapshot(const PopulationView& view, std::int64_t self_step) {
  Snapshot out;
  for (const auto& [id, records] : view.agents) {
    const CheckpointRecord* best = nullptr;
    for (const auto& r : records) {
      if (r.step > self_step) continue;
      if (!best || r.step > best->step ||
          (r.step == best->step && r.wall_seq > best->wall_seq))
        best = &r;
    }
    if (best) out.emplace_back(id, *best);
  }
  return out;
}

std::set<AgentId> stale_agents(const PopulationView& view, std::int64_t max_lag) {
  std::vector<std::pair<AgentId, std::int64_t>> newest;
  for (const auto& [id, records] : view.agents) {
    if (!records.empty()) newest.emplace_back(id, records.back().step);
  }
  std::set<AgentId> stale;
  if (newest.empty()) return stale;
  std::vector<std::int64_t> steps;
  for (const auto& [id, s] : newest) steps.push_back(s);
  std::sort(steps.begin(), steps.end());
  const std::size_t n = steps.size();
  const double median =
      n % 2 == 1 ? static_cast<double>(steps[n / 2])
                 : 0.5 * (static_cast<double>(steps[n / 2 - 1]) + static_cast<double>(steps[n / 2]));
  for (const auto& [id, s] : newest) {
    if (median - static_cast<double>(s) > static_cast<double>(max_lag)) stale.insert(id);
  }
  return stale;
}

std::optional<Bytes> load_payload(const fs::path& root, const std::string& payload_ref) {
  std::ifstream in(root / payload_ref, std::ios::binary);
  if (!in) return std::nullopt;
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) return std::nullopt;
  return data;
}

int gc_workspace(const fs::path& root, const GcOptions& options) {
  if (options.keep_last_k < 2) throw std::invalid_argument("keep_last_k must be >= 2");
  check_workspace(root);
  PopulationView view = read_population(root, 0, ReadOptions{.require_payload = false});

  std::set<AgentId> stale;
  if (options.stale_lag > 0) stale = stale_agents(view, options.stale_lag);
  std::optional<std::int64_t> slowest;
  for (const auto& [id, records] : view.agents) {
    if (records.empty() || stale.count(id)) continue;
    const std::int64_t newest = records.back().step;
    slowest = slowest ? std::min(*slowest, newest) : newest;
  }

  int removed = 0;
  for (const auto& [id, records] : view.agents) {
    std::set<std::string> keep;
    std::int64_t max_seq = 0;
    for (const auto& r : records) max_seq = std::max(max_seq, r.wall_seq);
    const std::size_t n = records.size();
    const std::size_t k = static_cast<std::size_t>(options.keep_last_k);
    for (std::size_t i = n > k ? n - k : 0; i < n; ++i) keep.insert(records[i].payload_ref);
    if (slowest) {
      // The slowest live agent will align on this agent's record at or
      // below its own step, or on any later one as it advances.
      std::optional<std::int64_t> cutoff;
      for (const auto& r : records)
        if (r.step <= *slowest) cutoff = r.step;
      for (const auto& r : records)
        if (!cutoff || r.step >= *cutoff) keep.insert(r.payload_ref);
    }

    const fs::path blobs = agent_dir(root, id) / kBlobsDir;
    std::error_code ec;
    fs::directory_iterator bit(blobs, ec);
    if (ec) continue;
    std::vector<fs::path> victims;
    for (const auto& entry : bit) {
      const std::string name = entry.path().filename().string();
      const std::string ref = (agent_dir(root, id).filename() / kBlobsDir / name).generic_string();
      if (keep.count(ref)) continue;
      const auto seq = file_seq(name);
      // Files at or beyond the next unpublished sequence number may belong
      // to a publish in progress.
      if (!seq) continue;
      if (*seq > max_seq && !options.writers_stopped) continue;
      victims.push_back(entry.path());
    }
    // Temporary record files never become visible under their own name.
    fs::directory_iterator rit(agent_dir(root, id) / kRecordsDir, ec);
    if (!ec) {
      for (const auto& entry : rit) {
        const std::string name = entry.path().filename().string();
        if (name.rfind(kTmpPrefix, 0) != 0) continue;
        const auto seq = file_seq(name);
        if (!seq) continue;
        if (*seq > max_seq && !options.writers_stopped) continue;
        victims.push_back(entry.path());
      }
    }
    for (const auto& p : victims) {
      std::error_code rec;
      if (fs::remove(p, rec)) {
        ++removed;
      } else if (rec) {
        warn("gc could not remove " + p.string() + ": " + rec.message());
      }
    }
  }
  return removed;
}

}  // namespace dpbt
