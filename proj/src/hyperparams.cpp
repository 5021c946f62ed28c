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

#include "dpbt/hyperparams.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dpbt {

std::string to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::kPositiveContinuous:
      return "positive_continuous";
    case ParamKind::kUnitInterval:
      return "unit_interval";
    case ParamKind::kIntegerRange:
      return "integer_range";
  }
  return "unknown";
}

ParamKind param_kind_from_string(const std::string& s) {
  if (s == "positive_continuous") return ParamKind::kPositiveContinuous;
  if (s == "unit_interval") return ParamKind::kUnitInterval;
  if (s == "integer_range") return ParamKind::kIntegerRange;
  throw ConfigError("unknown parameter kind '" + s + "'");
}

ParamSpec make_spec(std::string name, ParamKind kind, double initial,
                    bool is_mutable) {
  ParamSpec s;
  s.name = std::move(name);
  s.kind = kind;
  s.initial = initial;
  s.is_mutable = is_mutable;
  switch (kind) {
    case ParamKind::kPositiveContinuous:
      s.lo = initial / 10.0;
      s.hi = initial * 10.0;
      break;
    case ParamKind::kUnitInterval:
      s.lo = 0.8;
      s.hi = 0.9999;
      break;
    case ParamKind::kIntegerRange:
      s.lo = 1.0;
      s.hi = 8.0;
      break;
  }
  return s;
}

void check_specs(const std::vector<ParamSpec>& specs) {
  std::set<std::string> names;
  for (const auto& s : specs) {
    if (s.name.empty()) throw ConfigError("parameter with empty name");
    if (!names.insert(s.name).second)
      throw ConfigError("duplicate parameter '" + s.name + "'");
    if (!(s.lo < s.hi))
      throw ConfigError("parameter '" + s.name + "': lo must be below hi");
    if (s.initial < s.lo || s.initial > s.hi)
      throw ConfigError("parameter '" + s.name + "': initial out of bounds");
    if (s.kind == ParamKind::kUnitInterval && (s.lo <= 0.0 || s.hi >= 1.0))
      throw ConfigError("parameter '" + s.name +
                        "': unit-interval bounds must lie inside (0,1)");
    if (s.kind == ParamKind::kPositiveContinuous && s.lo <= 0.0)
      throw ConfigError("parameter '" + s.name + "': lower bound must be > 0");
    if (s.kind == ParamKind::kIntegerRange &&
        (s.lo != std::floor(s.lo) || s.hi != std::floor(s.hi) ||
         s.initial != std::floor(s.initial)))
      throw ConfigError("parameter '" + s.name + "': integer range expected");
  }
}

void check_mutation_config(const MutationConfig& cfg) {
  if (!(cfg.beta_mut >= 0.0 && cfg.beta_mut <= 1.0))
    throw ConfigError("beta_mut must lie in [0, 1]");
  if (!(cfg.mu_min > 1.0 && cfg.mu_min <= cfg.mu_max))
    throw ConfigError("need 1 < mu_min <= mu_max");
}

namespace {

double clamp_to(const ParamSpec& s, double v) { return std::clamp(v, s.lo, s.hi); }

}  // namespace

double mutate_value(const ParamSpec& s, double v, double mu, bool up) {
  switch (s.kind) {
    case ParamKind::kPositiveContinuous:
      v = up ? v * mu : v / mu;
      break;
    case ParamKind::kUnitInterval: {
      const double complement = 1.0 - v;
      v = 1.0 - (up ? complement * mu : complement / mu);
      break;
    }
    case ParamKind::kIntegerRange:
      v = up ? v + 1.0 : v - 1.0;
      break;
  }
  return clamp_to(s, v);
}

HyperParams mutate(const HyperParams& p, const std::vector<ParamSpec>& specs,
                   const MutationConfig& cfg, Rng& rng) {
  HyperParams out = p;
  for (const auto& s : specs) {
    if (!s.is_mutable) continue;
    auto it = out.find(s.name);
    if (it == out.end()) continue;
    if (!(uniform01(rng) < cfg.beta_mut)) continue;
    const double mu = uniform(rng, cfg.mu_min, cfg.mu_max);
    const bool up = uniform01(rng) < 0.5;
    it->second = mutate_value(s, it->second, mu, up);
  }
  return out;
}

HyperParams initial_values(const std::vector<ParamSpec>& specs) {
  HyperParams p;
  for (const auto& s : specs) p[s.name] = s.initial;
  return p;
}

HyperParams sample_initial(const std::vector<ParamSpec>& specs,
                           const Jitter& jitter, Rng& rng) {
  if (!(jitter.lo > 0.0 && jitter.lo <= jitter.hi))
    throw ConfigError("jitter range must satisfy 0 < lo <= hi");
  HyperParams p;
  for (const auto& s : specs) {
    if (!s.is_mutable) {
      p[s.name] = s.initial;
      continue;
    }
    const double factor =
        jitter.lo == jitter.hi
            ? jitter.lo
            : std::exp(uniform(rng, std::log(jitter.lo), std::log(jitter.hi)));
    if (factor == 1.0) {
      p[s.name] = s.initial;
      continue;
    }
    double v = s.initial;
    switch (s.kind) {
      case ParamKind::kPositiveContinuous:
        v *= factor;
        break;
      case ParamKind::kUnitInterval:
        v = 1.0 - (1.0 - v) * factor;
        break;
      case ParamKind::kIntegerRange:
        v = std::round(v * factor);
        break;
    }
    p[s.name] = clamp_to(s, v);
  }
  return p;
}

std::vector<Violation> validate(const HyperParams& p,
                                const std::vector<ParamSpec>& specs) {
  std::vector<Violation> out;
  for (const auto& s : specs) {
    auto it = p.find(s.name);
    if (it == p.end()) {
      if (s.is_mutable) out.push_back({s.name, "missing"});
      continue;
    }
    const double v = it->second;
    std::ostringstream msg;
    if (!std::isfinite(v)) {
      msg << "not finite";
    } else if (v < s.lo || v > s.hi) {
      msg << "value " << v << " outside [" << s.lo << ", " << s.hi << "]";
    } else if (s.kind == ParamKind::kIntegerRange && v != std::floor(v)) {
      msg << "value " << v << " is not an integer";
    }
    if (!msg.str().empty()) out.push_back({s.name, msg.str()});
  }
  return out;
}

std::vector<ParamSpec> ppo_reference_specs() {
  using K = ParamKind;
  std::vector<ParamSpec> specs = {
      make_spec("gamma", K::kUnitInterval, 0.99),
      make_spec("gae_lambda", K::kUnitInterval, 0.95, false),
      make_spec("learning_rate", K::kPositiveContinuous, 3e-4, false),
      make_spec("kl_threshold", K::kPositiveContinuous, 0.016),
      make_spec("grad_norm", K::kPositiveContinuous, 1.0),
      make_spec("ppo_clip", K::kPositiveContinuous, 0.1),
      make_spec("critic_coeff", K::kPositiveContinuous, 4.0),
      make_spec("ppo_epochs", K::kIntegerRange, 2),
      make_spec("alpha_reach", K::kPositiveContinuous, 50),
      make_spec("alpha_pick", K::kPositiveContinuous, 20),
      make_spec("r_picked", K::kPositiveContinuous, 300),
      make_spec("alpha_targ", K::kPositiveContinuous, 200),
      make_spec("r_success", K::kPositiveContinuous, 1000),
  };
  // GAE lambda shares gamma's kind but sits below its default lower bound.
  specs[1].lo = 0.5;
  return specs;
}

nlohmann::json specs_to_json(const std::vector<ParamSpec>& specs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : specs) {
    arr.push_back({{"name", s.name},
                   {"kind", to_string(s.kind)},
                   {"initial", s.initial},
                   {"lo", s.lo},
                   {"hi", s.hi},
                   {"mutable", s.is_mutable}});
  }
  return {{"params", arr}};
}

std::vector<ParamSpec> specs_from_json(const nlohmann::json& j) {
  const nlohmann::json& arr = j.is_array() ? j : j.at("params");
  std::vector<ParamSpec> specs;
  try {
    for (const auto& e : arr) {
      ParamSpec s = make_spec(e.at("name").get<std::string>(),
                              param_kind_from_string(e.at("kind")),
                              e.at("initial").get<double>(),
                              e.value("mutable", true));
      if (e.contains("lo")) s.lo = e.at("lo").get<double>();
      if (e.contains("hi")) s.hi = e.at("hi").get<double>();
      specs.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad parameter spec: ") + e.what());
  }
  check_specs(specs);
  return specs;
}

std::vector<ParamSpec> load_specs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open parameter file " + path);
  try {
    return specs_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace dpbt
