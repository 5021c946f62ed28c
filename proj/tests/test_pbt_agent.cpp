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

#include <unistd.h>

#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "dpbt/landscape_trainer.hpp"
#include "dpbt/pbt_agent.hpp"

using namespace dpbt;
namespace fs = std::filesystem;

namespace {

struct TempRoot {
  fs::path path;
  explicit TempRoot(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("dpbt_pbt_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    init_workspace(path);
  }
  ~TempRoot() { fs::remove_all(path); }
};

CheckpointRecord rec(AgentId id, std::int64_t step, double r_meta) {
  CheckpointRecord r;
  r.agent_id = id;
  r.step = step;
  r.r_meta = r_meta;
  r.epsilon = 0.075;
  r.hyperparams = {{"lr_kl", 0.016 * (1 + id)}, {"gamma_like", 0.99}, {"epochs_like", 4}};
  r.payload_ref = "agent_00" + std::to_string(id) + "/blobs/b.bin";
  return r;
}

Snapshot snapshot_of(int n, std::int64_t step = 1000) {
  Snapshot s;
  for (int i = 0; i < n; ++i) s.emplace_back(i, rec(i, step, 0.1 * (n - i)));
  return s;
}

PbtContext small_context() {
  PbtContext ctx;
  ctx.pbt.n_start = 100;
  ctx.pbt.n_adapt = 50;
  ctx.pbt.n_iter = 10;
  ctx.specs = landscape_specs();
  return ctx;
}

AgentState state_for(AgentId id, std::int64_t step) {
  AgentState s;
  s.agent_id = id;
  s.step = step;
  s.hyperparams = {{"lr_kl", 0.02}, {"gamma_like", 0.99}, {"epochs_like", 4}};
  s.rng = make_rng(11, static_cast<std::uint64_t>(id));
  s.tolerance = ToleranceSchedule::standard(0.075, 0.01);
  return s;
}

int count(const std::map<AgentId, Tier>& t, Tier tier) {
  int n = 0;
  for (const auto& [id, v] : t) n += v == tier;
  return n;
}

}  // namespace

TEST_SUITE("pbt_agent") {

TEST_CASE("tier sizes") {
  struct Case {
    int n, top, mid, bottom;
  };
  for (const Case c : {Case{8, 2, 4, 2}, Case{16, 5, 6, 5}, Case{32, 10, 12, 10}, Case{3, 1, 1, 1},
                       Case{4, 1, 2, 1}}) {
    const auto tiers = tier_assignment(snapshot_of(c.n));
    CHECK(count(tiers, Tier::kTop) == c.top);
    CHECK(count(tiers, Tier::kMid) == c.mid);
    CHECK(count(tiers, Tier::kBottom) == c.bottom);
  }
  for (int n : {1, 2}) CHECK(count(tier_assignment(snapshot_of(n)), Tier::kMid) == n);
  CHECK(tier_assignment(snapshot_of(8)).at(0) == Tier::kTop);
  CHECK(tier_assignment(snapshot_of(8)).at(7) == Tier::kBottom);
}

TEST_CASE("ranking ties break by higher step then lower id") {
  Snapshot s;
  s.emplace_back(4, rec(4, 100, 0.5));
  s.emplace_back(2, rec(2, 100, 0.5));
  s.emplace_back(3, rec(3, 200, 0.5));
  s.emplace_back(1, rec(1, 50, 0.9));
  CHECK(rank_snapshot(s) == std::vector<AgentId>{1, 3, 2, 4});
}

TEST_CASE("pbt config validation") {
  PbtConfig c;
  CHECK_NOTHROW(check_pbt_config(c));
  c.n_adapt = c.n_start + 1;
  CHECK_THROWS_AS(check_pbt_config(c), ConfigError);
  c = PbtConfig{};
  c.top_fraction = 0.5;
  CHECK_THROWS_AS(check_pbt_config(c), ConfigError);
  c = PbtConfig{};
  c.n_iter = 0;
  CHECK_THROWS_AS(check_pbt_config(c), ConfigError);
  const PbtConfig s = PbtConfig::scaled(1e4);
  CHECK(s.n_start == 20000);
  CHECK(s.n_adapt == 5000);
  CHECK(s.n_iter == 2000);
}

TEST_CASE("no decisions before the initial delay") {
  const PbtContext ctx = small_context();
  for (AgentId id = 0; id < 8; ++id) {
    AgentState st = state_for(id, 90);
    CHECK(pbt_step(st, snapshot_of(8, 90), ctx).kind == Decision::Kind::kContinue);
  }
}

TEST_CASE("last of eight replaces from the top tier") {
  const PbtContext ctx = small_context();
  std::map<AgentId, int> sources;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    AgentState st = state_for(7, 1000);
    st.rng = make_rng(seed);
    const Decision d = pbt_step(st, snapshot_of(8), ctx);
    REQUIRE(d.kind == Decision::Kind::kReplace);
    CHECK((d.source == 0 || d.source == 1));
    CHECK(d.source_step == 1000);
    CHECK(d.payload_ref == rec(d.source, 1000, 0).payload_ref);
    CHECK(validate(d.new_params, ctx.specs).empty());
    ++sources[d.source];
  }
  CHECK(sources.size() == 2);
}

TEST_CASE("middle tier mutates itself and top tier continues") {
  const PbtContext ctx = small_context();
  AgentState top = state_for(0, 1000);
  CHECK(pbt_step(top, snapshot_of(8), ctx).kind == Decision::Kind::kContinue);
  int mutated = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    AgentState mid = state_for(3, 1000);
    mid.rng = make_rng(seed);
    const Decision d = pbt_step(mid, snapshot_of(8), ctx);
    REQUIRE(d.kind == Decision::Kind::kMutateSelf);
    mutated += d.new_params != mid.hyperparams;
  }
  CHECK(mutated > 0);
}

TEST_CASE("burn-in pauses decisions after a mutation") {
  const PbtContext ctx = small_context();
  AgentState st = state_for(7, 1000);
  st.last_mutation_step = 960;
  CHECK(pbt_step(st, snapshot_of(8), ctx).kind == Decision::Kind::kContinue);
  st.last_mutation_step = 950;
  CHECK(pbt_step(st, snapshot_of(8), ctx).kind == Decision::Kind::kReplace);
}

TEST_CASE("degenerate populations always continue") {
  const PbtContext ctx = small_context();
  AgentState st = state_for(0, 1000);
  CHECK(pbt_step(st, {}, ctx).kind == Decision::Kind::kContinue);
  CHECK(pbt_step(st, snapshot_of(1), ctx).kind == Decision::Kind::kContinue);
  AgentState last = state_for(1, 1000);
  CHECK(pbt_step(last, snapshot_of(2), ctx).kind == Decision::Kind::kContinue);
}

TEST_CASE("stale or self sources are never chosen") {
  const PbtContext ctx = small_context();
  AgentState st = state_for(7, 1000);
  const Decision d = pbt_step(st, snapshot_of(8), ctx, {0});
  REQUIRE(d.kind == Decision::Kind::kReplace);
  CHECK(d.source == 1);
  AgentState st2 = state_for(7, 1000);
  CHECK(pbt_step(st2, snapshot_of(8), ctx, {0, 1}).kind == Decision::Kind::kContinue);
}

TEST_CASE("disabled pbt always continues") {
  PbtContext ctx = small_context();
  ctx.pbt.enabled = false;
  AgentState st = state_for(7, 1000);
  CHECK(pbt_step(st, snapshot_of(8), ctx).kind == Decision::Kind::kContinue);
}

TEST_CASE("apply decision") {
  TempRoot root("apply");
  AgentWriter w(root.path, 0);
  CheckpointRecord src = rec(0, 1000, 0.9);
  const Bytes blob = {1, 2, 3, 250, 0, 7};
  const PublishReceipt receipt = w.publish(src, blob);

  AgentState st = state_for(5, 1000);
  st.trainer_payload = {9, 9};
  SUBCASE("continue leaves the state alone") {
    const AgentState out = apply_decision(st, Decision{}, root.path);
    CHECK(out.hyperparams == st.hyperparams);
    CHECK(out.trainer_payload == st.trainer_payload);
    CHECK(out.last_mutation_step == st.last_mutation_step);
  }
  SUBCASE("mutate sets the burn-in marker") {
    Decision d;
    d.kind = Decision::Kind::kMutateSelf;
    d.new_params = {{"lr_kl", 0.03}, {"epochs_like", 4}};
    const AgentState out = apply_decision(st, d, root.path);
    CHECK(out.hyperparams == d.new_params);
    CHECK(out.last_mutation_step == 1000);
    CHECK(out.trainer_payload == st.trainer_payload);
  }
  SUBCASE("replace copies the blob bytes but not the tolerance") {
    st.tolerance.anneal_steps = 3;
    Decision d;
    d.kind = Decision::Kind::kReplace;
    d.source = 0;
    d.source_step = 1000;
    d.payload_ref = receipt.payload_ref;
    d.new_params = {{"lr_kl", 0.01}, {"epochs_like", 5}};
    ApplyStats stats;
    const AgentState out = apply_decision(st, d, root.path, &stats);
    CHECK(out.trainer_payload == blob);
    CHECK(out.hyperparams == d.new_params);
    CHECK(out.last_mutation_step == 1000);
    CHECK(out.tolerance.anneal_steps == 3);
    CHECK(stats.fallbacks == 0);
  }
  SUBCASE("a collected blob falls back to continue") {
    fs::remove(root.path / receipt.payload_ref);
    Decision d;
    d.kind = Decision::Kind::kReplace;
    d.source = 0;
    d.payload_ref = receipt.payload_ref;
    d.new_params = {{"lr_kl", 0.01}, {"epochs_like", 5}};
    ApplyStats stats;
    AgentState out;
    CHECK_NOTHROW(out = apply_decision(st, d, root.path, &stats));
    CHECK(stats.fallbacks == 1);
    CHECK(out.trainer_payload == st.trainer_payload);
    CHECK(out.hyperparams == st.hyperparams);
  }
}

TEST_CASE("three iterations publish three records") {
  TempRoot root("loop");
  LandscapeTrainer trainer(LandscapeConfig{}, 3);
  AgentOptions opts;
  opts.context = small_context();
  opts.tolerance = ToleranceSchedule::standard(0.075, 0.01);
  opts.workspace.durable = false;
  std::ostringstream log;
  opts.log = &log;
  PbtAgent agent(2, trainer, root.path, 5, opts);
  const AgentState final_state = run_agent(agent, StopCondition{.max_iterations = 3});
  CHECK(final_state.step == 30);
  const auto v = read_population(root.path, 2);
  REQUIRE(v.agents.at(2).size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(v.agents.at(2)[i].step == (i + 1) * 10);
  CHECK(v.agents.at(2)[0].origin == OriginKind::kInitial);
  CHECK(v.agents.at(2)[1].origin == OriginKind::kContinue);

  std::istringstream lines(log.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto t = trace_from_json(line);
    REQUIRE(t);
    CHECK(t->iteration == ++n);
    CHECK(trace_to_json(*t) == line);
  }
  CHECK(n == 3);
}

TEST_CASE("step limit and stop flag") {
  TempRoot root("stop");
  LandscapeTrainer trainer(LandscapeConfig{}, 3);
  AgentOptions opts;
  opts.context = small_context();
  opts.tolerance = ToleranceSchedule::standard(0.075, 0.01);
  opts.workspace.durable = false;
  PbtAgent agent(0, trainer, root.path, 5, opts);
  CHECK(run_agent(agent, StopCondition{.max_steps = 25}).step == 30);
  std::atomic<bool> flag{true};
  CHECK(run_agent(agent, StopCondition{.stop_flag = &flag}).step == 30);
}

TEST_CASE("cooperative population trace is deterministic and gated") {
  auto run = [](const fs::path& root) {
    std::vector<std::unique_ptr<LandscapeTrainer>> trainers;
    std::vector<std::unique_ptr<PbtAgent>> agents;
    AgentOptions opts;
    opts.context = small_context();
    opts.tolerance = ToleranceSchedule::standard(0.075, 0.01);
    opts.workspace.durable = false;
    for (int i = 0; i < 8; ++i) {
      trainers.push_back(std::make_unique<LandscapeTrainer>(LandscapeConfig{}, 100 + i));
      agents.push_back(std::make_unique<PbtAgent>(i, *trainers.back(), root, 100 + i, opts));
    }
    std::vector<IterationTrace> traces;
    for (int round = 0; round < 40; ++round)
      for (auto& a : agents) traces.push_back(a->run_iteration());
    return traces;
  };
  std::vector<IterationTrace> a, b;
  {
    TempRoot root("coop_a");
    a = run(root.path);
  }
  {
    TempRoot root("coop_b");
    b = run(root.path);
  }
  REQUIRE(a.size() == b.size());
  const PbtContext ctx = small_context();
  std::map<AgentId, std::int64_t> last_change;
  int replaces = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(trace_to_json(a[i]) == trace_to_json(b[i]));
    const IterationTrace& t = a[i];
    if (t.decision != Decision::Kind::kContinue) {
      CHECK(t.step >= ctx.pbt.n_start);
      if (last_change.count(t.agent_id)) CHECK(t.step - last_change[t.agent_id] >= ctx.pbt.n_adapt);
      last_change[t.agent_id] = t.step;
    }
    if (t.decision == Decision::Kind::kReplace) {
      ++replaces;
      CHECK(t.source != t.agent_id);
      CHECK(std::find(t.top.begin(), t.top.end(), t.source) != t.top.end());
    }
  }
  CHECK(replaces > 0);
}

}  // TEST_SUITE
