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

// dpbt: decentralized population-based training from the command line.
//
// Exit codes: 0 success, 1 bad configuration or usage, 2 workspace error,
// 3 fewer than half of the agents finished, 4 an agent could not be spawned.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "CLI11.hpp"
#include "dpbt/cem_trainer.hpp"
#include "dpbt/config.hpp"
#include "dpbt/experiment.hpp"
#include "dpbt/report.hpp"
#include "dpbt/workspace.hpp"
#include "json.hpp"

namespace {

using namespace dpbt;
using nlohmann::json;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

void install_stop_handlers() {
  struct sigaction sa {};
  sa.sa_handler = on_signal;
  sigemptyset(&sa.sa_mask);
  sigaction(SIGINT, &sa, nullptr);
  sigaction(SIGTERM, &sa, nullptr);
}

struct RunFlags {
  std::string config;
  std::string workspace;
  std::vector<std::string> faults;
  std::uint64_t seed = 0;
  double step_scale = 0.0;
  int population = 0;
  std::int64_t total_steps = 0;
  bool force = false;
  bool quiet = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("-c,--config", f.config, "Experiment config (JSON)");
  cmd->add_option("-w,--workspace", f.workspace,
                  "Workspace directory (default: $DPBT_WORKSPACE, then the config)");
  cmd->add_option("--seed", f.seed, "Base seed; agent i uses seed + i");
  cmd->add_option("--step-scale", f.step_scale, "Divide the reference PBT step constants");
  cmd->add_option("--population", f.population, "Population size");
  cmd->add_option("--total-steps", f.total_steps, "Steps per agent");
  cmd->add_option("--fault", f.faults,
                  "AGENT:kill-at-step:STEP or AGENT:start-delay-steps:STEPS (repeatable)");
  cmd->add_flag("--force", f.force, "Clear an existing workspace first");
  cmd->add_flag("-q,--quiet", f.quiet, "No progress messages");
}

json read_json(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
}

json parse_fault(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream in(text);
  for (std::string p; std::getline(in, p, ':');) parts.push_back(p);
  if (parts.size() != 3) throw ConfigError("fault '" + text + "' is not AGENT:ACTION:STEP");
  try {
    return {{"agent", std::stoi(parts[0])}, {"action", parts[1]}, {"step", std::stoll(parts[2])}};
  } catch (const std::exception&) {
    throw ConfigError("fault '" + text + "' has a non-numeric field");
  }
}

ExperimentConfig resolve_config(const RunFlags& f) {
  json j = read_json(f.config);
  if (f.seed) j["seed"] = f.seed;
  if (f.step_scale > 0.0) j["step_scale"] = f.step_scale;
  if (f.population > 0) j["population_size"] = f.population;
  if (f.total_steps > 0) j["total_steps"] = f.total_steps;
  if (!f.faults.empty()) {
    json faults = json::array();
    for (const auto& s : f.faults) faults.push_back(parse_fault(s));
    j["faults"] = faults;
  }
  if (!f.workspace.empty()) {
    j["workspace"] = f.workspace;
  } else if (const char* env = std::getenv("DPBT_WORKSPACE"); env && *env) {
    j["workspace"] = env;
  }
  return config_from_json(j);
}

int do_launch(const RunFlags& f, bool baseline) {
  ExperimentConfig cfg = resolve_config(f);
  if (baseline) cfg = baseline_config(cfg);
  install_stop_handlers();
  LaunchOptions opts;
  opts.force = f.force;
  opts.progress = f.quiet ? nullptr : &std::cerr;
  opts.interrupt = &g_stop;
  const LaunchResult r = launch(cfg, opts);
  std::cout << summary_text(r.report) << "report written to "
            << (std::filesystem::absolute(cfg.workspace) / "report").string() << "\n";
  return r.exit_code;
}

int do_agent(const std::string& config, int id) {
  install_stop_handlers();
  const ExperimentConfig cfg = dpbt::load_experiment_config(config);
  if (id < 0 || id >= cfg.population_size) throw ConfigError("agent id out of range");
  return run_agent_process(cfg, id, std::cout, &g_stop);
}

int do_report(const std::string& workspace, const std::string& out, std::int64_t target) {
  const std::filesystem::path root = workspace;
  // Without an explicit target, use the budget the launcher recorded.
  if (target == 0 && std::filesystem::exists(root / kConfigFileName)) {
    try {
      target = load_experiment_config(root / kConfigFileName).total_steps;
    } catch (const ConfigError& e) {
      std::cerr << "dpbt: warning: ignoring " << (root / kConfigFileName).string() << ": "
                << e.what() << "\n";
    }
  }
  const RunReport rep = build_report(root, target);
  const std::filesystem::path dir = out.empty() ? root / "report" : std::filesystem::path(out);
  write_report(rep, dir);
  std::cout << summary_text(rep);
  return kExitOk;
}

int do_gc(const std::string& workspace, int keep, std::int64_t stale_lag, bool offline) {
  GcOptions o;
  o.keep_last_k = keep;
  o.stale_lag = stale_lag;
  o.writers_stopped = offline;
  const int removed = gc_workspace(workspace, o);
  std::cout << "removed " << removed << " files\n";
  return kExitOk;
}

int do_trace(const std::string& config, std::uint64_t seed, std::int64_t budget,
             double epsilon, const std::string& out) {
  const ExperimentConfig cfg = dpbt::load_experiment_config(config);
  HyperParams p = initial_values(effective_specs(cfg));
  const CemResult learned = cem_learn(cfg.cem, p, budget, seed, epsilon);
  std::ofstream file;
  std::ostream* sink = &std::cout;
  if (!out.empty()) {
    file.open(out);
    if (!file) throw WorkspaceError("cannot write " + out);
    sink = &file;
  }
  const EpisodeResult ep =
      run_episode(cfg.cem, learned.policy, reward_coeffs_from(p), epsilon, seed, sink);
  std::cerr << "generations " << learned.generations << " n_succ " << ep.n_succ << " return "
            << ep.episode_return << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized population-based training"};
  app.require_subcommand(1);

  RunFlags launch_flags;
  CLI::App* launch_cmd = app.add_subcommand("launch", "Run a PBT population as processes");
  add_run_flags(launch_cmd, launch_flags);

  RunFlags baseline_flags;
  CLI::App* baseline_cmd =
      app.add_subcommand("baseline", "Run the same population with PBT disabled");
  add_run_flags(baseline_cmd, baseline_flags);

  std::string report_ws, report_out;
  std::int64_t report_target = 0;
  CLI::App* report_cmd = app.add_subcommand("report", "Write series files for a workspace");
  report_cmd->add_option("-w,--workspace", report_ws, "Workspace directory")
      ->envname("DPBT_WORKSPACE")
      ->required();
  report_cmd->add_option("-o,--out", report_out, "Output directory (default <workspace>/report)");
  report_cmd->add_option("--target-step", report_target,
                         "Agents below this step are reported as dead (default: the recorded budget)");

  std::string gc_ws;
  int gc_keep = 3;
  std::int64_t gc_lag = 0;
  bool gc_offline = false;
  CLI::App* gc_cmd = app.add_subcommand("gc", "Delete unreferenced checkpoint blobs");
  gc_cmd->add_option("-w,--workspace", gc_ws, "Workspace directory")
      ->envname("DPBT_WORKSPACE")
      ->required();
  gc_cmd->add_option("--keep", gc_keep, "Newest checkpoints whose blobs every agent keeps")
      ->check(CLI::Range(2, 1 << 20));
  gc_cmd->add_option("--stale-lag", gc_lag, "Agents lagging more than this are not waited for");
  gc_cmd->add_flag("--offline", gc_offline,
                   "No agent is running: also delete leftovers of interrupted publishes");

  std::string trace_cfg, trace_out;
  std::uint64_t trace_seed = 1;
  std::int64_t trace_budget = 0;
  double trace_eps = 0.075;
  CLI::App* trace_cmd =
      app.add_subcommand("trace", "Train a CEM policy and dump one rollout as JSON lines");
  trace_cmd->add_option("-c,--config", trace_cfg, "Experiment config")->required();
  trace_cmd->add_option("--seed", trace_seed, "Seed");
  trace_cmd->add_option("--budget", trace_budget, "Training steps before the rollout");
  trace_cmd->add_option("--epsilon", trace_eps, "Success tolerance");
  trace_cmd->add_option("-o,--out", trace_out, "Output file (default stdout)");

  std::string agent_cfg;
  int agent_id = -1;
  CLI::App* agent_cmd = app.add_subcommand("agent", "Run one agent (used by launch)");
  agent_cmd->group("");
  agent_cmd->add_option("--config", agent_cfg)->required();
  agent_cmd->add_option("--id", agent_id)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*launch_cmd) return do_launch(launch_flags, false);
    if (*baseline_cmd) return do_launch(baseline_flags, true);
    if (*report_cmd) return do_report(report_ws, report_out, report_target);
    if (*gc_cmd) return do_gc(gc_ws, gc_keep, gc_lag, gc_offline);
    if (*trace_cmd) return do_trace(trace_cfg, trace_seed, trace_budget, trace_eps, trace_out);
    if (*agent_cmd) return do_agent(agent_cfg, agent_id);
  } catch (const ConfigError& e) {
    std::cerr << "dpbt: " << e.what() << "\n";
    return kExitConfig;
  } catch (const WorkspaceError& e) {
    std::cerr << "dpbt: " << e.what() << "\n";
    return kExitWorkspace;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "dpbt: " << e.what() << "\n";
    return kExitWorkspace;
  } catch (const std::system_error& e) {
    std::cerr << "dpbt: " << e.what() << "\n";
    return kExitSpawn;
  } catch (const std::exception& e) {
    std::cerr << "dpbt: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
