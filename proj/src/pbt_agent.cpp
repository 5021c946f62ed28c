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

#include "dpbt/pbt_agent.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "json.hpp"

namespace dpbt {

using nlohmann::json;

PbtConfig PbtConfig::scaled(double step_scale) {
  if (!(step_scale > 0.0)) throw ConfigError("step_scale must be positive");
  PbtConfig cfg;
  cfg.n_start = std::llround(static_cast<double>(cfg.n_start) / step_scale);
  cfg.n_adapt = std::llround(static_cast<double>(cfg.n_adapt) / step_scale);
  cfg.n_iter = std::llround(static_cast<double>(cfg.n_iter) / step_scale);
  check_pbt_config(cfg);
  return cfg;
}

void check_pbt_config(const PbtConfig& cfg) {
  if (cfg.n_iter <= 0) throw ConfigError("n_iter must be positive");
  if (cfg.n_adapt > cfg.n_start) throw ConfigError("n_adapt must not exceed n_start");
  if (cfg.n_adapt < 0 || cfg.n_start < 0) throw ConfigError("negative PBT delay");
  const double sum = cfg.top_fraction + cfg.mid_fraction + cfg.bottom_fraction;
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("population split must sum to 1");
  if (cfg.population_size < 1) throw ConfigError("population size must be positive");
}

std::string to_string(Tier t) {
  switch (t) {
    case Tier::kTop:
      return "top";
    case Tier::kMid:
      return "mid";
    case Tier::kBottom:
      return "bottom";
  }
  return "unknown";
}

std::string to_string(Decision::Kind k) {
  switch (k) {
    case Decision::Kind::kContinue:
      return "continue";
    case Decision::Kind::kMutateSelf:
      return "mutate";
    case Decision::Kind::kReplace:
      return "replace";
  }
  return "unknown";
}

namespace {

Decision::Kind kind_from_string(const std::string& s) {
  if (s == "mutate") return Decision::Kind::kMutateSelf;
  if (s == "replace") return Decision::Kind::kReplace;
  return Decision::Kind::kContinue;
}

Tier tier_from_string(const std::string& s) {
  if (s == "top") return Tier::kTop;
  if (s == "bottom") return Tier::kBottom;
  return Tier::kMid;
}

}  // namespace

std::vector<AgentId> rank_snapshot(const Snapshot& snapshot) {
  std::vector<const std::pair<AgentId, CheckpointRecord>*> order;
  for (const auto& e : snapshot) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) {
    if (a->second.r_meta != b->second.r_meta) return a->second.r_meta > b->second.r_meta;
    if (a->second.step != b->second.step) return a->second.step > b->second.step;
    return a->first < b->first;
  });
  std::vector<AgentId> ids;
  for (auto* e : order) ids.push_back(e->first);
  return ids;
}

int tier_size(int n, double fraction) {
  return std::max(1, static_cast<int>(std::lround(fraction * n)));
}

std::map<AgentId, Tier> tier_assignment(const Snapshot& snapshot, double top_fraction,
                                        double bottom_fraction) {
  std::map<AgentId, Tier> tiers;
  const auto ranked = rank_snapshot(snapshot);
  const int n = static_cast<int>(ranked.size());
  if (n < 3) {
    for (AgentId id : ranked) tiers[id] = Tier::kMid;
    return tiers;
  }
  const int top = tier_size(n, top_fraction);
  const int bottom = tier_size(n, bottom_fraction);
  for (int i = 0; i < n; ++i) {
    Tier t = Tier::kMid;
    if (i < top) t = Tier::kTop;
    else if (i >= n - bottom) t = Tier::kBottom;
    tiers[ranked[i]] = t;
  }
  return tiers;
}

Decision pbt_step(AgentState& state, const Snapshot& snapshot, const PbtContext& ctx,
                  const std::set<AgentId>& ineligible) {
  Decision d;
  const PbtConfig& cfg = ctx.pbt;
  if (!cfg.enabled || snapshot.size() < 3) return d;
  if (state.step < cfg.n_start) return d;
  if (state.step - state.last_mutation_step < cfg.n_adapt) return d;

  const auto tiers = tier_assignment(snapshot, cfg.top_fraction, cfg.bottom_fraction);
  const auto self = tiers.find(state.agent_id);
  if (self == tiers.end()) return d;

  switch (self->second) {
    case Tier::kTop:
      return d;
    case Tier::kMid:
      d.kind = Decision::Kind::kMutateSelf;
      d.new_params = mutate(state.hyperparams, ctx.specs, ctx.mutation, state.rng);
      return d;
    case Tier::kBottom: {
      std::vector<const CheckpointRecord*> candidates;
      for (const auto& [id, rec] : snapshot) {
        if (id == state.agent_id || ineligible.count(id)) continue;
        if (tiers.at(id) == Tier::kTop) candidates.push_back(&rec);
      }
      if (candidates.empty()) return d;
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      const CheckpointRecord& src = *candidates[pick(state.rng)];
      d.kind = Decision::Kind::kReplace;
      d.source = src.agent_id;
      d.source_step = src.step;
      d.payload_ref = src.payload_ref;
      d.new_params = mutate(src.hyperparams, ctx.specs, ctx.mutation, state.rng);
      return d;
    }
  }
  return d;
}

AgentState apply_decision(AgentState state, const Decision& decision,
                          const std::filesystem::path& root, ApplyStats* stats) {
  switch (decision.kind) {
    case Decision::Kind::kContinue:
      return state;
    case Decision::Kind::kMutateSelf:
      state.hyperparams = decision.new_params;
      state.last_mutation_step = state.step;
      return state;
    case Decision::Kind::kReplace: {
      auto payload = load_payload(root, decision.payload_ref);
      if (!payload) {
        if (stats) ++stats->fallbacks;
        std::cerr << "dpbt: warning: agent " << state.agent_id << " could not load "
                  << decision.payload_ref << "; continuing\n";
        return state;
      }
      state.trainer_payload = std::move(*payload);
      state.hyperparams = decision.new_params;
      state.last_mutation_step = state.step;
      return state;
    }
  }
  return state;
}

std::string trace_to_json(const IterationTrace& t) {
  json snap = json::array();
  for (const auto& [id, step, r] : t.snapshot) snap.push_back(json::array({id, step, r}));
  json j = {
      {"event", "iteration"},
      {"agent", t.agent_id},
      {"iteration", t.iteration},
      {"step", t.step},
      {"r_meta", t.r_meta},
      {"epsilon", t.epsilon},
      {"n_succ", t.n_succ},
      {"ranked", t.ranked},
      {"tier", to_string(t.tier)},
      {"decision", to_string(t.decision)},
      {"applied", to_string(t.applied)},
      {"source", t.source},
      {"source_step", t.source_step},
      {"snapshot", snap},
      {"top", t.top},
      {"stale", t.stale},
  };
  return j.dump();
}

std::optional<IterationTrace> trace_from_json(const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("event", "") != "iteration")
    return std::nullopt;
  try {
    IterationTrace t;
    t.agent_id = j.at("agent").get<AgentId>();
    t.iteration = j.at("iteration").get<int>();
    t.step = j.at("step").get<std::int64_t>();
    t.r_meta = j.at("r_meta").get<double>();
    t.epsilon = j.at("epsilon").get<double>();
    t.n_succ = j.at("n_succ").get<double>();
    t.ranked = j.at("ranked").get<bool>();
    t.tier = tier_from_string(j.at("tier").get<std::string>());
    t.decision = kind_from_string(j.at("decision").get<std::string>());
    t.applied = kind_from_string(j.at("applied").get<std::string>());
    t.source = j.at("source").get<AgentId>();
    t.source_step = j.at("source_step").get<std::int64_t>();
    for (const auto& e : j.at("snapshot"))
      t.snapshot.emplace_back(e.at(0).get<AgentId>(), e.at(1).get<std::int64_t>(),
                              e.at(2).get<double>());
    t.top = j.at("top").get<std::vector<AgentId>>();
    t.stale = j.at("stale").get<std::vector<AgentId>>();
    return t;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

PbtAgent::PbtAgent(AgentId id, Trainer& trainer, std::filesystem::path root,
                   std::uint64_t seed, AgentOptions options)
    : trainer_(trainer),
      root_(std::move(root)),
      options_(std::move(options)),
      writer_(root_, id, options_.workspace),
      reader_(root_),
      seed_(seed) {
  check_pbt_config(options_.context.pbt);
  check_mutation_config(options_.context.mutation);
  check_specs(options_.context.specs);
  check_schedule(options_.tolerance);
  state_.agent_id = id;
  state_.rng = make_rng(seed, 0x5eed0000u + static_cast<std::uint64_t>(id));
  state_.tolerance = options_.tolerance;
  state_.hyperparams = sample_initial(options_.context.specs, options_.jitter, state_.rng);
  trainer_.set_hyperparams(state_.hyperparams);
  state_.trainer_payload = trainer_.snapshot();
}

IterationTrace PbtAgent::run_iteration() {
  const PbtContext& ctx = options_.context;
  IterationTrace trace;
  trace.agent_id = state_.agent_id;
  trace.iteration = ++iterations_;

  trainer_.train(ctx.pbt.n_iter, state_.tolerance.current());
  state_.step += ctx.pbt.n_iter;
  const EvalResult eval = trainer_.evaluate(state_.tolerance);
  const double r_meta = meta_objective(eval, state_.tolerance);
  state_.tolerance = anneal(state_.tolerance, eval);
  state_.trainer_payload = trainer_.snapshot();

  CheckpointRecord rec;
  rec.step = state_.step;
  rec.r_meta = r_meta;
  rec.epsilon = eval.epsilon;
  rec.n_succ = eval.n_succ;
  rec.hyperparams = state_.hyperparams;
  rec.origin = pending_origin_;
  rec.origin_source = pending_source_;
  rec.origin_source_step = pending_source_step_;
  writer_.publish(rec, state_.trainer_payload);
  if (options_.after_publish) options_.after_publish(state_);

  trace.step = state_.step;
  trace.r_meta = r_meta;
  trace.epsilon = eval.epsilon;
  trace.n_succ = eval.n_succ;

  const PopulationView view = reader_.read(state_.agent_id, state_.step);
  const Snapshot snapshot = aligned_snapshot(view, state_.step);
  const auto stale_lag =
      static_cast<std::int64_t>(ctx.pbt.stale_periods * static_cast<double>(ctx.pbt.n_iter));
  const std::set<AgentId> stale = stale_agents(view, stale_lag);
  const auto tiers = tier_assignment(snapshot, ctx.pbt.top_fraction, ctx.pbt.bottom_fraction);
  for (const auto& [id, rec2] : snapshot) {
    trace.snapshot.emplace_back(id, rec2.step, rec2.r_meta);
    if (tiers.count(id) && tiers.at(id) == Tier::kTop) trace.top.push_back(id);
  }
  trace.stale.assign(stale.begin(), stale.end());
  if (auto it = tiers.find(state_.agent_id); it != tiers.end()) {
    trace.tier = it->second;
    trace.ranked = true;
  }

  const Decision decision = pbt_step(state_, snapshot, ctx, stale);
  trace.decision = decision.kind;
  trace.source = decision.source;
  trace.source_step = decision.source_step;

  const int fallbacks_before = apply_stats_.fallbacks;
  state_ = apply_decision(std::move(state_), decision, root_, &apply_stats_);
  const bool fell_back = apply_stats_.fallbacks != fallbacks_before;
  trace.applied = fell_back ? Decision::Kind::kContinue : decision.kind;

  switch (trace.applied) {
    case Decision::Kind::kContinue:
      pending_origin_ = OriginKind::kContinue;
      pending_source_ = -1;
      pending_source_step_ = -1;
      break;
    case Decision::Kind::kMutateSelf:
      pending_origin_ = OriginKind::kMutate;
      pending_source_ = -1;
      pending_source_step_ = -1;
      break;
    case Decision::Kind::kReplace: {
      pending_origin_ = OriginKind::kReplace;
      pending_source_ = decision.source;
      pending_source_step_ = decision.source_step;
      trainer_.restore(state_.trainer_payload);
      std::uniform_int_distribution<std::uint64_t> salt;
      trainer_.reseed(salt(state_.rng));
      break;
    }
  }
  if (trace.applied != Decision::Kind::kContinue) trainer_.set_hyperparams(state_.hyperparams);

  if (options_.log) {
    *options_.log << trace_to_json(trace) << "\n";
    options_.log->flush();
  }
  return trace;
}

AgentState run_agent(PbtAgent& agent, const StopCondition& stop) {
  while (true) {
    if (stop.stop_flag && stop.stop_flag->load()) break;
    if (stop.max_iterations > 0 && agent.iterations() >= stop.max_iterations) break;
    if (stop.max_steps > 0 && agent.state().step >= stop.max_steps) break;
    agent.run_iteration();
  }
  return agent.state();
}

}  // namespace dpbt
