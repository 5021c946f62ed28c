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

#include "dpbt/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace dpbt {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::string agent_name(AgentId id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "agent_%03d", id);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw WorkspaceError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw WorkspaceError("cannot write " + path.string());
}

// Record at exactly `step` for one agent; the latest publish wins.
const CheckpointRecord* at_step(const std::vector<CheckpointRecord>& recs, std::int64_t step) {
  const CheckpointRecord* hit = nullptr;
  for (const auto& r : recs) {
    if (r.step == step) hit = &r;
  }
  return hit;
}

}  // namespace

bool RunReport::finished(AgentId id) const {
  auto it = records.find(id);
  if (it == records.end() || it->second.empty()) return false;
  return target_step == 0 || it->second.back().step >= target_step;
}

int RunReport::finished_count() const {
  int n = 0;
  for (const auto& [id, recs] : records) n += finished(id) ? 1 : 0;
  return n;
}

double RunReport::final_best_r_meta() const {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& [id, recs] : records) {
    if (!recs.empty()) best = std::max(best, recs.back().r_meta);
  }
  return best;
}

RunReport build_report(const fs::path& root, std::int64_t target_step) {
  check_workspace(root);
  ReadOptions opts;
  opts.require_payload = false;
  PopulationView view = read_population(root, -1, opts);
  RunReport rep;
  rep.target_step = target_step;
  std::set<std::int64_t> steps;
  for (auto& [id, recs] : view.agents) {
    if (recs.empty()) continue;
    for (const auto& r : recs) steps.insert(r.step);
    rep.records[id] = std::move(recs);
  }
  if (rep.records.empty()) throw WorkspaceError("workspace " + root.string() + " has no records");

  for (const auto& [id, recs] : rep.records) {
    DecisionSummary& d = rep.decisions[id];
    for (const auto& r : recs) {
      switch (r.origin) {
        case OriginKind::kInitial: ++d.initial; break;
        case OriginKind::kContinue: ++d.cont; break;
        case OriginKind::kMutate: ++d.mutate; break;
        case OriginKind::kReplace: ++d.replace; break;
      }
    }
  }

  for (std::int64_t step : steps) {
    double best = -std::numeric_limits<double>::infinity();
    std::map<std::string, HpStat> stats;
    for (const auto& [id, recs] : rep.records) {
      const CheckpointRecord* r = at_step(recs, step);
      if (!r) continue;
      best = std::max(best, r->r_meta);
      for (const auto& [name, v] : r->hyperparams) {
        HpStat& s = stats[name];
        if (s.count == 0) {
          s.min = s.max = v;
        } else {
          s.min = std::min(s.min, v);
          s.max = std::max(s.max, v);
        }
        s.mean += v;
        ++s.count;
      }
    }
    rep.best_curve.emplace_back(step, best);
    for (auto& [name, s] : stats) {
      s.step = step;
      s.mean /= s.count;
      // Rounding in the sum can push the mean a hair outside [min, max].
      s.mean = std::clamp(s.mean, s.min, s.max);
      rep.hp_stats[name].push_back(s);
    }
  }
  return rep;
}

std::string summary_text(const RunReport& rep) {
  std::ostringstream out;
  out << "agents: " << rep.records.size() << "\n";
  out << "finished: " << rep.finished_count();
  if (rep.target_step > 0) out << " (target step " << rep.target_step << ")";
  out << "\n";
  out << "final best r_meta: " << fmt(rep.final_best_r_meta()) << "\n";
  for (const auto& [id, recs] : rep.records) {
    const CheckpointRecord& last = recs.back();
    const DecisionSummary& d = rep.decisions.at(id);
    out << agent_name(id) << ": " << (rep.finished(id) ? "finished" : "dead") << " records "
        << recs.size() << " last_step " << last.step << " r_meta " << fmt(last.r_meta)
        << " epsilon " << fmt(last.epsilon) << " continue " << d.cont << " mutate "
        << d.mutate << " replace " << d.replace << "\n";
  }
  return out.str();
}

void write_report(const RunReport& rep, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw WorkspaceError("cannot create " + out_dir.string() + ": " + ec.message());

  std::set<std::int64_t> steps;
  for (const auto& [step, best] : rep.best_curve) steps.insert(step);

  {
    std::ostringstream out;
    out << "step";
    for (const auto& [id, recs] : rep.records) out << "\t" << agent_name(id);
    out << "\n";
    for (std::int64_t step : steps) {
      out << step;
      for (const auto& [id, recs] : rep.records) {
        out << "\t";
        if (const CheckpointRecord* r = at_step(recs, step)) out << fmt(r->r_meta);
      }
      out << "\n";
    }
    write_file(out_dir / "r_meta.tsv", out.str());
  }
  {
    std::ostringstream out;
    out << "step\tbest_r_meta\n";
    for (const auto& [step, best] : rep.best_curve) out << step << "\t" << fmt(best) << "\n";
    write_file(out_dir / "best_r_meta.tsv", out.str());
  }
  for (const auto& [name, series] : rep.hp_stats) {
    std::ostringstream out;
    out << "step\tmin\tmean\tmax\tcount\n";
    for (const HpStat& s : series)
      out << s.step << "\t" << fmt(s.min) << "\t" << fmt(s.mean) << "\t" << fmt(s.max) << "\t"
          << s.count << "\n";
    write_file(out_dir / ("hp_" + name + ".tsv"), out.str());
  }
  for (const auto& [id, recs] : rep.records) {
    std::set<std::string> names;
    for (const auto& r : recs) {
      for (const auto& [name, v] : r.hyperparams) names.insert(name);
    }
    std::ostringstream out;
    out << "step\tr_meta\tepsilon\tn_succ\torigin\tsource";
    for (const auto& n : names) out << "\t" << n;
    out << "\n";
    for (const auto& r : recs) {
      out << r.step << "\t" << fmt(r.r_meta) << "\t" << fmt(r.epsilon) << "\t" << fmt(r.n_succ)
          << "\t" << to_string(r.origin) << "\t";
      if (r.origin == OriginKind::kReplace) out << r.origin_source << "@" << r.origin_source_step;
      for (const auto& n : names) {
        out << "\t";
        if (auto it = r.hyperparams.find(n); it != r.hyperparams.end()) out << fmt(it->second);
      }
      out << "\n";
    }
    write_file(out_dir / ("hparams_" + agent_name(id) + ".tsv"), out.str());
  }
  {
    std::ostringstream out;
    out << "agent\tstatus\trecords\tlast_step\tinitial\tcontinue\tmutate\treplace\n";
    for (const auto& [id, recs] : rep.records) {
      const DecisionSummary& d = rep.decisions.at(id);
      out << id << "\t" << (rep.finished(id) ? "finished" : "dead") << "\t" << recs.size()
          << "\t" << recs.back().step << "\t" << d.initial << "\t" << d.cont << "\t" << d.mutate
          << "\t" << d.replace << "\n";
    }
    write_file(out_dir / "decisions.tsv", out.str());
  }
  write_file(out_dir / "summary.txt", summary_text(rep));
}

}  // namespace dpbt
