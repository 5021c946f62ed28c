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

#include "dpbt/config.hpp"

#include <fstream>
#include <set>

namespace dpbt {

namespace {

using nlohmann::json;

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

planar::TaskKind task_from_string(const std::string& s) {
  if (s == "position_only") return planar::TaskKind::kPositionOnly;
  if (s == "reorientation") return planar::TaskKind::kReorientation;
  throw ConfigError("unknown task '" + s + "'");
}

const char* task_name(planar::TaskKind t) {
  return t == planar::TaskKind::kReorientation ? "reorientation" : "position_only";
}

FaultAction::Kind fault_kind_from_string(const std::string& s) {
  if (s == "kill-at-step") return FaultAction::Kind::kKillAtStep;
  if (s == "start-delay-steps") return FaultAction::Kind::kStartDelaySteps;
  throw ConfigError("unknown fault action '" + s + "'");
}

}  // namespace

std::string to_string(TrainerKind k) {
  return k == TrainerKind::kLandscape ? "landscape" : "planar";
}

TrainerKind trainer_kind_from_string(const std::string& s) {
  if (s == "landscape") return TrainerKind::kLandscape;
  if (s == "planar" || s == "planar-env") return TrainerKind::kPlanar;
  throw ConfigError("unknown trainer '" + s + "'");
}

std::string to_string(FaultAction::Kind k) {
  return k == FaultAction::Kind::kKillAtStep ? "kill-at-step" : "start-delay-steps";
}

std::vector<ParamSpec> effective_specs(const ExperimentConfig& cfg) {
  if (!cfg.specs.empty()) return cfg.specs;
  return cfg.trainer == TrainerKind::kLandscape ? landscape_specs() : cem_specs();
}

std::uint64_t agent_seed(const ExperimentConfig& cfg, AgentId id) {
  if (!cfg.seeds.empty()) return cfg.seeds.at(static_cast<std::size_t>(id));
  return cfg.seed + static_cast<std::uint64_t>(id);
}

LandscapeConfig effective_landscape(const ExperimentConfig& cfg) {
  LandscapeConfig l = cfg.landscape;
  if (l.steps_per_update == 0) l.steps_per_update = cfg.pbt.n_iter;
  return l;
}

void check_experiment_config(const ExperimentConfig& cfg) {
  if (cfg.population_size < 1) throw ConfigError("population_size must be at least 1");
  if (cfg.pbt.population_size != cfg.population_size)
    throw ConfigError("pbt.population_size disagrees with population_size");
  if (cfg.total_steps <= 0) throw ConfigError("total_steps must be positive");
  check_pbt_config(cfg.pbt);
  check_mutation_config(cfg.mutation);
  check_specs(effective_specs(cfg));
  try {
    check_schedule(cfg.tolerance);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(cfg.jitter.lo > 0.0) || !(cfg.jitter.lo <= cfg.jitter.hi))
    throw ConfigError("jitter range must satisfy 0 < lo <= hi");
  if (!cfg.seeds.empty()) {
    if (cfg.seeds.size() != static_cast<std::size_t>(cfg.population_size))
      throw ConfigError("seeds must list one seed per agent");
    if (std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() != cfg.seeds.size())
      throw ConfigError("seeds must be unique per agent");
  }
  for (const FaultAction& f : cfg.faults) {
    if (f.agent < 0 || f.agent >= cfg.population_size)
      throw ConfigError("fault plan references agent " + std::to_string(f.agent) +
                        " outside the population");
    if (f.value < 0) throw ConfigError("fault step must be non-negative");
  }
  if (cfg.trainer == TrainerKind::kLandscape) {
    if (cfg.landscape.steps_per_update < 0) throw ConfigError("steps_per_update must be >= 0");
  } else {
    // Every candidate population PBT may reach must fit into one period.
    for (const ParamSpec& s : effective_specs(cfg)) {
      if (s.name != "cem_population") continue;
      const auto worst = static_cast<std::int64_t>(s.hi) * cfg.cem.episodes_per_candidate *
                         cfg.cem.env.attempt_steps;
      if (cfg.pbt.n_iter < worst)
        throw ConfigError("n_iter " + std::to_string(cfg.pbt.n_iter) +
                          " is smaller than one CEM generation at the largest population (" +
                          std::to_string(worst) + ")");
    }
  }
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  try {
    if (j.contains("trainer")) cfg.trainer = trainer_kind_from_string(j.at("trainer"));
    read_opt(j, "population_size", cfg.population_size);
    read_opt(j, "step_scale", cfg.step_scale);
    cfg.pbt = PbtConfig::scaled(cfg.step_scale);
    cfg.pbt.population_size = cfg.population_size;
    if (j.contains("pbt")) {
      const json& p = j.at("pbt");
      read_opt(p, "n_start", cfg.pbt.n_start);
      read_opt(p, "n_adapt", cfg.pbt.n_adapt);
      read_opt(p, "n_iter", cfg.pbt.n_iter);
      read_opt(p, "stale_periods", cfg.pbt.stale_periods);
      read_opt(p, "top_fraction", cfg.pbt.top_fraction);
      read_opt(p, "mid_fraction", cfg.pbt.mid_fraction);
      read_opt(p, "bottom_fraction", cfg.pbt.bottom_fraction);
      read_opt(p, "enabled", cfg.pbt.enabled);
    }
    read_opt(j, "total_steps", cfg.total_steps);
    if (j.contains("mutation")) {
      const json& m = j.at("mutation");
      read_opt(m, "beta_mut", cfg.mutation.beta_mut);
      read_opt(m, "mu_min", cfg.mutation.mu_min);
      read_opt(m, "mu_max", cfg.mutation.mu_max);
    }
    if (j.contains("params")) cfg.specs = specs_from_json(j);
    if (j.contains("tolerance")) {
      const json& t = j.at("tolerance");
      double eps0 = cfg.tolerance.eps0;
      double eps_star = cfg.tolerance.eps_star;
      read_opt(t, "eps0", eps0);
      read_opt(t, "eps_star", eps_star);
      ToleranceSchedule s = ToleranceSchedule::standard(eps0, eps_star);
      read_opt(t, "anneal_factor", s.anneal_factor);
      read_opt(t, "trigger_threshold", s.trigger_threshold);
      cfg.tolerance = s;
    }
    if (j.contains("jitter")) {
      read_opt(j.at("jitter"), "lo", cfg.jitter.lo);
      read_opt(j.at("jitter"), "hi", cfg.jitter.hi);
    }
    if (j.contains("faults")) {
      for (const json& f : j.at("faults")) {
        FaultAction a;
        a.agent = f.at("agent").get<AgentId>();
        a.kind = fault_kind_from_string(f.at("action").get<std::string>());
        a.value = f.at("step").get<std::int64_t>();
        cfg.faults.push_back(a);
      }
    }
    read_opt(j, "seed", cfg.seed);
    read_opt(j, "seeds", cfg.seeds);
    if (j.contains("workspace")) cfg.workspace = j.at("workspace").get<std::string>();
    read_opt(j, "durable", cfg.durable);
    if (j.contains("landscape")) {
      const json& l = j.at("landscape");
      read_opt(l, "rho0", cfg.landscape.rho0);
      read_opt(l, "drift_period", cfg.landscape.drift_period);
      read_opt(l, "kl_width", cfg.landscape.kl_width);
      read_opt(l, "epochs_center", cfg.landscape.epochs_center);
      read_opt(l, "epochs_width", cfg.landscape.epochs_width);
      read_opt(l, "noise_std", cfg.landscape.noise_std);
      read_opt(l, "saturation_k", cfg.landscape.saturation_k);
      read_opt(l, "steps_per_update", cfg.landscape.steps_per_update);
    }
    if (j.contains("cem")) {
      const json& c = j.at("cem");
      read_opt(c, "episodes_per_candidate", cfg.cem.episodes_per_candidate);
      read_opt(c, "init_std", cfg.cem.init_std);
      if (c.contains("task")) cfg.cem.env.task = task_from_string(c.at("task"));
      read_opt(c, "attempt_steps", cfg.cem.env.attempt_steps);
      read_opt(c, "hold_steps", cfg.cem.env.hold_steps);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
  check_experiment_config(cfg);
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json faults = json::array();
  for (const FaultAction& f : cfg.faults)
    faults.push_back({{"agent", f.agent}, {"action", to_string(f.kind)}, {"step", f.value}});
  json j = {
      {"trainer", to_string(cfg.trainer)},
      {"population_size", cfg.population_size},
      {"step_scale", cfg.step_scale},
      {"total_steps", cfg.total_steps},
      {"pbt",
       {{"n_start", cfg.pbt.n_start},
        {"n_adapt", cfg.pbt.n_adapt},
        {"n_iter", cfg.pbt.n_iter},
        {"stale_periods", cfg.pbt.stale_periods},
        {"top_fraction", cfg.pbt.top_fraction},
        {"mid_fraction", cfg.pbt.mid_fraction},
        {"bottom_fraction", cfg.pbt.bottom_fraction},
        {"enabled", cfg.pbt.enabled}}},
      {"mutation",
       {{"beta_mut", cfg.mutation.beta_mut},
        {"mu_min", cfg.mutation.mu_min},
        {"mu_max", cfg.mutation.mu_max}}},
      {"tolerance",
       {{"eps0", cfg.tolerance.eps0},
        {"eps_star", cfg.tolerance.eps_star},
        {"anneal_factor", cfg.tolerance.anneal_factor},
        {"trigger_threshold", cfg.tolerance.trigger_threshold}}},
      {"jitter", {{"lo", cfg.jitter.lo}, {"hi", cfg.jitter.hi}}},
      {"faults", faults},
      {"seed", cfg.seed},
      {"seeds", cfg.seeds},
      {"workspace", cfg.workspace.string()},
      {"durable", cfg.durable},
      {"landscape",
       {{"rho0", cfg.landscape.rho0},
        {"drift_period", cfg.landscape.drift_period},
        {"kl_width", cfg.landscape.kl_width},
        {"epochs_center", cfg.landscape.epochs_center},
        {"epochs_width", cfg.landscape.epochs_width},
        {"noise_std", cfg.landscape.noise_std},
        {"saturation_k", cfg.landscape.saturation_k},
        {"steps_per_update", cfg.landscape.steps_per_update}}},
      {"cem",
       {{"episodes_per_candidate", cfg.cem.episodes_per_candidate},
        {"init_std", cfg.cem.init_std},
        {"task", task_name(cfg.cem.env.task)},
        {"attempt_steps", cfg.cem.env.attempt_steps},
        {"hold_steps", cfg.cem.env.hold_steps}}},
  };
  if (!cfg.specs.empty()) j["params"] = specs_to_json(cfg.specs).at("params");
  return j;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace dpbt
