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

#include "dpbt/experiment.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <csignal>
#include <fstream>
#include <optional>
#include <system_error>
#include <thread>

#include "dpbt/cem_trainer.hpp"
#include "dpbt/landscape_trainer.hpp"

extern char** environ;

namespace dpbt {

namespace fs = std::filesystem;

namespace {

struct AgentKilled {};

std::optional<std::int64_t> fault_value(const ExperimentConfig& cfg, AgentId id,
                                        FaultAction::Kind kind) {
  std::optional<std::int64_t> v;
  for (const FaultAction& f : cfg.faults) {
    if (f.agent == id && f.kind == kind) v = v ? std::min(*v, f.value) : f.value;
  }
  return v;
}

void note(std::ostream* out, const std::string& msg) {
  if (out) *out << msg << "\n" << std::flush;
}

}  // namespace

ExperimentConfig baseline_config(ExperimentConfig cfg) {
  cfg.pbt.enabled = false;
  return cfg;
}

std::unique_ptr<Trainer> make_trainer(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.trainer == TrainerKind::kLandscape)
    return std::make_unique<LandscapeTrainer>(effective_landscape(cfg), seed);
  return std::make_unique<CemTrainer>(cfg.cem, seed);
}

AgentOptions make_agent_options(const ExperimentConfig& cfg, std::ostream* log) {
  AgentOptions o;
  o.context.pbt = cfg.pbt;
  o.context.mutation = cfg.mutation;
  o.context.specs = effective_specs(cfg);
  o.tolerance = cfg.tolerance;
  o.jitter = cfg.jitter;
  o.workspace.durable = cfg.durable;
  o.log = log;
  return o;
}

void prepare_workspace(const fs::path& root, bool force) {
  std::error_code ec;
  if (fs::exists(root, ec)) {
    if (!fs::is_directory(root)) throw WorkspaceError(root.string() + " is not a directory");
    if (!fs::is_empty(root)) {
      if (!force)
        throw WorkspaceError("workspace " + root.string() +
                             " is not empty (pass --force to reuse it)");
      if (!fs::exists(root / "FORMAT_VERSION"))
        throw WorkspaceError("refusing to clear " + root.string() +
                             ": it does not look like a workspace");
      for (const auto& entry : fs::directory_iterator(root)) fs::remove_all(entry.path());
    }
  }
  init_workspace(root);
}

int run_agent_process(const ExperimentConfig& cfg, AgentId id, std::ostream& log,
                      const std::atomic<bool>* stop_flag) {
  const std::uint64_t seed = agent_seed(cfg, id);
  std::unique_ptr<Trainer> trainer = make_trainer(cfg, seed);
  AgentOptions opts = make_agent_options(cfg, &log);
  if (auto kill_at = fault_value(cfg, id, FaultAction::Kind::kKillAtStep)) {
    const std::int64_t at = *kill_at;
    opts.after_publish = [at, &log](const AgentState& s) {
      if (s.step < at) return;
      log.flush();
      std::raise(SIGKILL);
    };
  }
  PbtAgent agent(id, *trainer, cfg.workspace, seed, std::move(opts));
  StopCondition stop;
  stop.max_steps = cfg.total_steps;
  stop.stop_flag = stop_flag;
  run_agent(agent, stop);
  return kExitOk;
}

LaunchResult launch(const ExperimentConfig& cfg_in, const LaunchOptions& opts) {
  ExperimentConfig cfg = cfg_in;
  check_experiment_config(cfg);
  cfg.workspace = fs::absolute(cfg.workspace);
  prepare_workspace(cfg.workspace, opts.force);
  const fs::path logs = cfg.workspace / "logs";
  fs::create_directories(logs);
  const fs::path config_path = cfg.workspace / kConfigFileName;
  {
    std::ofstream out(config_path);
    out << config_to_json(cfg).dump(2) << "\n";
    if (!out.flush()) throw WorkspaceError("cannot write " + config_path.string());
  }

  LaunchResult result;
  std::map<AgentId, pid_t> running;
  std::map<AgentId, std::int64_t> pending;
  for (AgentId id = 0; id < cfg.population_size; ++id) {
    result.wait_status[id] = -1;
    if (auto d = fault_value(cfg, id, FaultAction::Kind::kStartDelaySteps)) pending[id] = *d;
  }

  auto kill_all = [&](int sig) {
    for (const auto& [id, pid] : running) ::kill(pid, sig);
  };
  auto spawn = [&](AgentId id) {
    char log_name[32];
    std::snprintf(log_name, sizeof log_name, "agent_%03d.log", id);
    const std::string log_path = (logs / log_name).string();
    const std::string exe = opts.exe.string();
    const std::string cfg_arg = config_path.string();
    const std::string id_arg = std::to_string(id);
    std::vector<char*> argv = {const_cast<char*>(exe.c_str()), const_cast<char*>("agent"),
                               const_cast<char*>("--config"), const_cast<char*>(cfg_arg.c_str()),
                               const_cast<char*>("--id"), const_cast<char*>(id_arg.c_str()),
                               nullptr};
    posix_spawn_file_actions_t fa;
    posix_spawn_file_actions_init(&fa);
    posix_spawn_file_actions_addopen(&fa, STDOUT_FILENO, log_path.c_str(),
                                     O_WRONLY | O_CREAT | O_TRUNC, 0644);
    pid_t pid = 0;
    const int rc = posix_spawn(&pid, exe.c_str(), &fa, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&fa);
    if (rc != 0) {
      kill_all(SIGKILL);
      for (const auto& [other, opid] : running) ::waitpid(opid, nullptr, 0);
      throw std::system_error(rc, std::generic_category(), "cannot spawn agent " + id_arg);
    }
    running[id] = pid;
    note(opts.progress, "spawned agent " + id_arg + " (pid " + std::to_string(pid) + ")");
  };

  for (AgentId id = 0; id < cfg.population_size; ++id) {
    if (!pending.count(id)) spawn(id);
  }

  ReadOptions ro;
  ro.require_payload = false;
  PopulationReader reader(cfg.workspace, ro);
  bool interrupted = false;
  while (!running.empty() || !pending.empty()) {
    if (opts.interrupt && opts.interrupt->load() && !interrupted) {
      interrupted = true;
      kill_all(SIGTERM);
      pending.clear();
    }
    for (auto it = running.begin(); it != running.end();) {
      int status = 0;
      const pid_t r = ::waitpid(it->second, &status, WNOHANG);
      if (r == it->second) {
        result.wait_status[it->first] = status;
        const bool planned = fault_value(cfg, it->first, FaultAction::Kind::kKillAtStep) &&
                             WIFSIGNALED(status) && WTERMSIG(status) == SIGKILL;
        if (planned) result.killed_by_plan.push_back(it->first);
        note(opts.progress, "agent " + std::to_string(it->first) +
                                (planned ? " killed by fault plan"
                                         : " exited with status " + std::to_string(status)));
        it = running.erase(it);
      } else {
        ++it;
      }
    }
    if (!pending.empty()) {
      const PopulationView view = reader.read(-1);
      for (auto it = pending.begin(); it != pending.end();) {
        bool ready = true;
        for (const auto& [other, pid] : running) {
          auto v = view.agents.find(other);
          const std::int64_t newest =
              (v == view.agents.end() || v->second.empty()) ? 0 : v->second.back().step;
          if (newest < it->second) ready = false;
        }
        if (ready) {
          const AgentId id = it->first;
          it = pending.erase(it);
          spawn(id);
        } else {
          ++it;
        }
      }
    }
    if (!running.empty() || !pending.empty())
      std::this_thread::sleep_for(std::chrono::duration<double>(opts.poll_seconds));
  }

  result.report = build_report(cfg.workspace, cfg.total_steps);
  write_report(result.report, cfg.workspace / "report");
  const int finished = result.report.finished_count();
  result.exit_code = 2 * finished < cfg.population_size ? kExitTooFewFinished : kExitOk;
  note(opts.progress, std::to_string(finished) + " of " + std::to_string(cfg.population_size) +
                          " agents finished");
  return result;
}

CooperativeResult run_cooperative(const ExperimentConfig& cfg, bool force) {
  check_experiment_config(cfg);
  prepare_workspace(cfg.workspace, force);

  struct Slot {
    AgentId id = 0;
    std::unique_ptr<Trainer> trainer;
    std::unique_ptr<PbtAgent> agent;
    std::optional<std::int64_t> delay;
    std::optional<std::int64_t> kill_at;
    bool done = false;
    bool dead = false;
  };
  std::vector<Slot> slots(cfg.population_size);
  for (AgentId id = 0; id < cfg.population_size; ++id) {
    slots[id].id = id;
    slots[id].delay = fault_value(cfg, id, FaultAction::Kind::kStartDelaySteps);
    slots[id].kill_at = fault_value(cfg, id, FaultAction::Kind::kKillAtStep);
  }
  auto start = [&](Slot& s) {
    const std::uint64_t seed = agent_seed(cfg, s.id);
    s.trainer = make_trainer(cfg, seed);
    AgentOptions opts = make_agent_options(cfg, nullptr);
    if (s.kill_at) {
      const std::int64_t at = *s.kill_at;
      opts.after_publish = [at](const AgentState& st) {
        if (st.step >= at) throw AgentKilled{};
      };
    }
    s.agent = std::make_unique<PbtAgent>(s.id, *s.trainer, cfg.workspace, seed, std::move(opts));
  };

  CooperativeResult result;
  while (true) {
    bool active = false;
    for (Slot& s : slots) {
      if (s.done || s.dead) continue;
      active = true;
      if (!s.agent) {
        bool ready = true;
        for (const Slot& o : slots) {
          if (o.id == s.id || o.done || o.dead || !o.agent) continue;
          if (o.agent->state().step < *s.delay) ready = false;
        }
        if (!ready) continue;
        start(s);
      }
      try {
        result.traces[s.id].push_back(s.agent->run_iteration());
      } catch (const AgentKilled&) {
        s.dead = true;
        result.killed_by_plan.push_back(s.id);
        continue;
      }
      if (s.agent->state().step >= cfg.total_steps) s.done = true;
    }
    if (!active) break;
  }
  result.report = build_report(cfg.workspace, cfg.total_steps);
  return result;
}

}  // namespace dpbt
