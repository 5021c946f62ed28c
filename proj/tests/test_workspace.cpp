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

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "dpbt/workspace.hpp"

using namespace dpbt;
namespace fs = std::filesystem;

namespace {

struct TempRoot {
  fs::path path;
  explicit TempRoot(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("dpbt_ws_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    init_workspace(path);
  }
  ~TempRoot() { fs::remove_all(path); }
};

CheckpointRecord make_record(std::int64_t step, double r_meta, double eps = 0.075) {
  CheckpointRecord r;
  r.step = step;
  r.r_meta = r_meta;
  r.epsilon = eps;
  r.n_succ = 1.5;
  r.hyperparams = {{"lr_kl", 0.016}, {"epochs_like", 2}};
  r.origin = OriginKind::kContinue;
  return r;
}

Bytes payload_of(int v) { return Bytes(16, static_cast<std::uint8_t>(v)); }

std::vector<fs::path> files_in(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  return out;
}

int dangling_records(const fs::path& root) {
  const PopulationView v = read_population(root, 0, ReadOptions{.require_payload = false});
  int n = 0;
  for (const auto& [id, recs] : v.agents) {
    for (const auto& r : recs) n += fs::exists(root / r.payload_ref) ? 0 : 1;
  }
  return n;
}

}  // namespace

TEST_SUITE("workspace") {

TEST_CASE("publish then read round trip") {
  TempRoot root("roundtrip");
  AgentWriter w(root.path, 3);
  CheckpointRecord rec = make_record(20'000'000, 0.41, 0.062);
  const PublishReceipt receipt = w.publish(rec, payload_of(7));
  const PopulationView v = read_population(root.path, 3);
  REQUIRE(v.agents.at(3).size() == 1);
  const CheckpointRecord& got = v.agents.at(3)[0];
  CHECK(got.agent_id == 3);
  CHECK(got.step == 20'000'000);
  CHECK(got.r_meta == 0.41);
  CHECK(got.epsilon == 0.062);
  CHECK(got.payload_ref == receipt.payload_ref);
  CHECK(load_payload(root.path, got.payload_ref) == payload_of(7));
}

TEST_CASE("record encoding round trip and rejection of garbage") {
  CheckpointRecord r = make_record(5, 0.25);
  r.agent_id = 2;
  r.wall_seq = 9;
  r.payload_ref = "agent_002/blobs/2_5_9.bin";
  r.origin = OriginKind::kReplace;
  r.origin_source = 4;
  r.origin_source_step = 5;
  const auto back = decode_record(encode_record(r));
  REQUIRE(back);
  CHECK(*back == r);
  CHECK_FALSE(decode_record(""));
  CHECK_FALSE(decode_record("{\"v\":1,\"agent_id\":2"));
  CHECK_FALSE(decode_record("not json"));
  CHECK_FALSE(decode_record("{\"v\":1}"));
}

TEST_CASE("view of a fresh workspace holds only self") {
  TempRoot root("empty");
  AgentWriter w(root.path, 0);
  const PopulationView v = read_population(root.path, 0);
  REQUIRE(v.agents.size() == 1);
  CHECK(v.agents.at(0).empty());
}

TEST_CASE("format version is enforced") {
  TempRoot root("version");
  {
    std::ofstream out(root.path / "FORMAT_VERSION", std::ios::trunc);
    out << "7\n";
  }
  CHECK_THROWS_AS(check_workspace(root.path), WorkspaceError);
  CHECK_THROWS_AS(AgentWriter(root.path, 0), WorkspaceError);
  CHECK_THROWS_AS(check_workspace(root.path / "missing"), WorkspaceError);
}

TEST_CASE("publish validates its input") {
  TempRoot root("validate");
  AgentWriter w(root.path, 0);
  w.publish(make_record(10, 0.1), payload_of(1));
  CHECK_THROWS_AS(w.publish(make_record(5, 0.1), payload_of(1)), std::invalid_argument);
  CHECK_THROWS_AS(w.publish(make_record(20, std::nan("")), payload_of(1)), std::invalid_argument);
  CHECK_THROWS_AS(w.publish(make_record(20, 0.1, 0.0), payload_of(1)), std::invalid_argument);
  CHECK_NOTHROW(w.publish(make_record(10, 0.2), payload_of(1)));
}

TEST_CASE("a restarted writer continues the sequence") {
  TempRoot root("resume");
  {
    AgentWriter w(root.path, 1);
    w.publish(make_record(1, 0.1), payload_of(1));
    w.publish(make_record(2, 0.2), payload_of(2));
  }
  AgentWriter again(root.path, 1);
  CHECK(again.next_wall_seq() == 3);
  CHECK_THROWS_AS(again.publish(make_record(1, 0.3), payload_of(3)), std::invalid_argument);
  again.publish(make_record(3, 0.3), payload_of(3));
  const auto v = read_population(root.path, 1);
  REQUIRE(v.agents.at(1).size() == 3);
  CHECK(v.agents.at(1).back().wall_seq == 3);
}

TEST_CASE("eight concurrent writer processes") {
  TempRoot root("concurrent");
  constexpr int kAgents = 8;
  constexpr int kRecords = 40;
  std::vector<pid_t> kids;
  for (int a = 0; a < kAgents; ++a) {
    const pid_t pid = ::fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
      int rc = 0;
      try {
        AgentWriter w(root.path, a);
        PopulationReader reader(root.path);
        for (int i = 1; i <= kRecords; ++i) {
          w.publish(make_record(i * 100, a + i * 0.001), payload_of(a));
          if (i % 5 == 0) reader.read(a);
        }
      } catch (...) {
        rc = 1;
      }
      ::_exit(rc);
    }
    kids.push_back(pid);
  }
  for (pid_t pid : kids) {
    int status = 0;
    ::waitpid(pid, &status, 0);
    CHECK(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 0);
  }
  PopulationReader reader(root.path);
  const PopulationView v = reader.read(0);
  CHECK(reader.stats().lines_skipped == 0);
  REQUIRE(v.agents.size() == kAgents);
  for (const auto& [id, recs] : v.agents) {
    REQUIRE(recs.size() == kRecords);
    for (int i = 0; i < kRecords; ++i) {
      CHECK(recs[i].step == (i + 1) * 100);
      CHECK(recs[i].r_meta == doctest::Approx(id + (i + 1) * 0.001));
      CHECK(load_payload(root.path, recs[i].payload_ref) == payload_of(id));
    }
  }
}

TEST_CASE("a half-written record line is skipped") {
  TempRoot root("truncated");
  for (int a = 0; a < 8; ++a) {
    AgentWriter w(root.path, a);
    w.publish(make_record(100, 0.1 * a), payload_of(a));
  }
  const std::string full = encode_record([] {
    CheckpointRecord r = make_record(200, 0.9);
    r.agent_id = 5;
    r.wall_seq = 2;
    r.payload_ref = "agent_005/blobs/5_200_2.bin";
    return r;
  }());
  {
    std::ofstream out(agent_dir(root.path, 5) / "records" / "000000000002.rec");
    out << full.substr(0, full.size() / 2);
  }
  PopulationReader reader(root.path, ReadOptions{.require_payload = false});
  const PopulationView v = reader.read(0);
  CHECK(v.agents.size() == 8);
  CHECK(v.agents.at(5).size() == 1);
  CHECK(reader.stats().lines_skipped == 1);
}

TEST_CASE("records without their blob are hidden") {
  TempRoot root("nopayload");
  AgentWriter w(root.path, 0);
  const auto receipt = w.publish(make_record(1, 0.1), payload_of(1));
  w.publish(make_record(2, 0.2), payload_of(2));
  fs::remove(root.path / receipt.payload_ref);
  PopulationReader reader(root.path);
  CHECK(reader.read(0).agents.at(0).size() == 1);
  CHECK(reader.stats().missing_payloads == 1);
  CHECK(read_population(root.path, 0, ReadOptions{.require_payload = false}).agents.at(0).size() ==
        2);
}

TEST_CASE("an agent directory without records is omitted") {
  TempRoot root("broken");
  for (int a = 0; a < 3; ++a) {
    AgentWriter w(root.path, a);
    w.publish(make_record(10, 0.5), payload_of(a));
  }
  fs::remove_all(agent_dir(root.path, 2) / "records");
  PopulationReader reader(root.path);
  PopulationView v;
  CHECK_NOTHROW(v = reader.read(0));
  CHECK(v.agents.size() == 2);
  CHECK_FALSE(v.agents.count(2));
  CHECK(reader.stats().agents_unreadable == 1);
}

TEST_CASE("directories vanishing during reads never make the reader fail") {
  TempRoot root("vanish");
  for (int a = 0; a < 4; ++a) {
    AgentWriter w(root.path, a);
    for (int i = 1; i <= 20; ++i) w.publish(make_record(i, 0.1), payload_of(a));
  }
  const fs::path victim = agent_dir(root.path, 3);
  const fs::path parked = root.path / "parked";
  std::atomic<bool> done{false};
  std::thread churn([&] {
    for (int i = 0; i < 300; ++i) {
      std::error_code ec;
      fs::rename(victim, parked, ec);
      fs::rename(parked, victim, ec);
    }
    done = true;
  });
  int reads = 0;
  bool threw = false;
  while (!done || reads < 50) {
    try {
      const PopulationView v = read_population(root.path, 0);
      CHECK(v.agents.at(0).size() == 20);
      if (v.agents.count(3)) CHECK(v.agents.at(3).size() <= 20);
    } catch (...) {
      threw = true;
    }
    ++reads;
  }
  churn.join();
  CHECK_FALSE(threw);
}

TEST_CASE("aligned snapshot selection") {
  PopulationView v;
  auto rec = [](AgentId id, std::int64_t step, std::int64_t seq) {
    CheckpointRecord r = make_record(step, 0.1);
    r.agent_id = id;
    r.wall_seq = seq;
    return r;
  };
  v.agents[0] = {rec(0, 50'000'000, 1)};
  v.agents[1] = {rec(1, 20'000'000, 1), rec(1, 40'000'000, 2), rec(1, 60'000'000, 3)};
  v.agents[2] = {rec(2, 80'000'000, 1)};
  v.agents[3] = {rec(3, 30'000'000, 1)};
  const Snapshot s = aligned_snapshot(v, 50'000'000);
  REQUIRE(s.size() == 3);
  CHECK(s[0].first == 0);
  CHECK(s[1].first == 1);
  CHECK(s[1].second.step == 40'000'000);
  CHECK(s[2].first == 3);
  const Snapshot later = aligned_snapshot(v, 100'000'000);
  CHECK(later.back().second.step == 30'000'000);

  v.agents[4] = {rec(4, 10, 1), rec(4, 10, 2)};
  const Snapshot ties = aligned_snapshot(v, 10);
  REQUIRE(ties.size() == 1);
  CHECK(ties[0].second.wall_seq == 2);
}

TEST_CASE("stale agents lag the median newest step") {
  PopulationView v;
  for (int a = 0; a < 5; ++a) {
    CheckpointRecord r = make_record(a == 4 ? 100 : 1000, 0.1);
    v.agents[a] = {r};
  }
  v.agents[5] = {};
  CHECK(stale_agents(v, 600) == std::set<AgentId>{4});
  CHECK(stale_agents(v, 900).empty());
}

TEST_CASE("kill injection at every publish stage leaves no dangling record") {
  const PublishStage stages[] = {PublishStage::kBlobTempWritten,   PublishStage::kBlobSynced,
                                 PublishStage::kBlobRenamed,       PublishStage::kRecordTempWritten,
                                 PublishStage::kRecordSynced,      PublishStage::kRecordRenamed};
  for (PublishStage stage : stages) {
    TempRoot root("kill");
    {
      AgentWriter w(root.path, 0);
      w.publish(make_record(1, 0.1), payload_of(1));
    }
    const pid_t pid = ::fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
      AgentWriter w(root.path, 0);
      w.set_stage_hook([stage](PublishStage s) {
        if (s == stage) ::raise(SIGKILL);
      });
      w.publish(make_record(2, 0.2), payload_of(2));
      ::_exit(0);
    }
    int status = 0;
    ::waitpid(pid, &status, 0);
    REQUIRE(WIFSIGNALED(status));
    CHECK(dangling_records(root.path) == 0);
    const auto v = read_population(root.path, 0);
    const std::size_t expect = stage == PublishStage::kRecordRenamed ? 2 : 1;
    CHECK(v.agents.at(0).size() == expect);

    // The agent can resume, and offline GC clears what the crash left.
    AgentWriter w(root.path, 0);
    w.publish(make_record(3, 0.3), payload_of(3));
    gc_workspace(root.path, GcOptions{.keep_last_k = 10, .stale_lag = 0, .writers_stopped = true});
    for (const auto& dir : {"records", "blobs"}) {
      for (const auto& f : files_in(agent_dir(root.path, 0) / dir))
        CHECK_MESSAGE(f.filename().string().rfind(".tmp.", 0) != 0, f.string());
    }
    CHECK(files_in(agent_dir(root.path, 0) / "blobs").size() == expect + 1);
    CHECK(dangling_records(root.path) == 0);
  }
}

TEST_CASE("gc keeps the newest blobs of a lone agent") {
  TempRoot root("gc_lone");
  AgentWriter w(root.path, 0);
  for (int i = 1; i <= 10; ++i) w.publish(make_record(i * 10, 0.1 * i), payload_of(i));
  CHECK(gc_workspace(root.path, GcOptions{.keep_last_k = 3}) == 7);
  CHECK(files_in(agent_dir(root.path, 0) / "blobs").size() == 3);
  CHECK(files_in(agent_dir(root.path, 0) / "records").size() == 10);
  CHECK(read_population(root.path, 0).agents.at(0).size() == 3);
  CHECK(gc_workspace(root.path, GcOptions{.keep_last_k = 3}) == 0);
  CHECK_THROWS_AS(gc_workspace(root.path, GcOptions{.keep_last_k = 1}), std::invalid_argument);
}

TEST_CASE("gc keeps what the slowest agent will align on") {
  TempRoot root("gc_slow");
  {
    AgentWriter fast(root.path, 0);
    for (int i = 1; i <= 10; ++i) fast.publish(make_record(i * 10, 0.5), payload_of(i));
    AgentWriter slow(root.path, 1);
    for (int i = 1; i <= 4; ++i) slow.publish(make_record(i * 10 + 5, 0.2), payload_of(i));
  }
  const auto before = read_population(root.path, 1);
  const std::int64_t slow_step = before.agents.at(1).back().step;
  const Snapshot snap_before = aligned_snapshot(before, slow_step);
  const int removed = gc_workspace(root.path, GcOptions{.keep_last_k = 2});
  // Fast agent: the slow agent sits at 45, so 40 and everything later stay.
  CHECK(removed == 3 + 2);
  const auto after = read_population(root.path, 1);
  CHECK(aligned_snapshot(after, slow_step) == snap_before);
  for (std::int64_t s = slow_step; s <= 100; s += 10) {
    const Snapshot snap = aligned_snapshot(after, s);
    CHECK(snap.size() == 2);
  }
}

TEST_CASE("gc removes orphans but not publishes in flight") {
  TempRoot root("gc_orphan");
  AgentWriter w(root.path, 0);
  for (int i = 1; i <= 3; ++i) w.publish(make_record(i, 0.1), payload_of(i));
  const fs::path blobs = agent_dir(root.path, 0) / "blobs";
  const fs::path records = agent_dir(root.path, 0) / "records";
  { std::ofstream(blobs / "0_2_2.bin.extra"); }
  { std::ofstream(blobs / "0_9_2.bin") << "orphan"; }
  { std::ofstream(blobs / ".tmp.1.bin") << "old temp"; }
  { std::ofstream(blobs / ".tmp.4.bin") << "in flight"; }
  { std::ofstream(records / ".tmp.4.rec") << "in flight"; }
  { std::ofstream(blobs / "0_9_4.bin") << "in flight"; }
  CHECK(gc_workspace(root.path, GcOptions{.keep_last_k = 3}) == 2);
  CHECK(fs::exists(blobs / ".tmp.4.bin"));
  CHECK(fs::exists(blobs / "0_9_4.bin"));
  CHECK(fs::exists(records / ".tmp.4.rec"));
  CHECK(fs::exists(blobs / "0_2_2.bin.extra"));
  CHECK(gc_workspace(root.path, GcOptions{.keep_last_k = 3, .writers_stopped = true}) == 3);
  CHECK(read_population(root.path, 0).agents.at(0).size() == 3);
}

}  // TEST_SUITE
