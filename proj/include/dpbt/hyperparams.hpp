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

#ifndef DPBT_HYPERPARAMS_HPP_
#define DPBT_HYPERPARAMS_HPP_

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpbt/random.hpp"
#include "json.hpp"

namespace dpbt {

enum class ParamKind {
  kPositiveContinuous,
  /// Values strictly inside (0, 1), e.g. a discount factor. Mutation acts on
  /// the complement 1 - v.
  kUnitInterval,
  kIntegerRange,
};

std::string to_string(ParamKind kind);
ParamKind param_kind_from_string(const std::string& s);

struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::kPositiveContinuous;
  double initial = 1.0;
  double lo = 0.1;
  double hi = 10.0;
  bool is_mutable = true;
};

/// Builds a spec with the default hard bounds for its kind:
/// [initial/10, initial*10] for positive-continuous, [1, 8] for integers,
/// (0.8, 0.9999) for unit-interval values.
ParamSpec make_spec(std::string name, ParamKind kind, double initial,
                    bool is_mutable = true);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws ConfigError if the spec list is malformed (lo >= hi, initial out of
/// bounds, duplicate names, unit-interval bounds outside (0,1)).
void check_specs(const std::vector<ParamSpec>& specs);

/// The hyperparameter vector p. Integer-range values are stored as doubles
/// holding integral values.
using HyperParams = std::map<std::string, double>;

struct MutationConfig {
  double beta_mut = 0.2;
  double mu_min = 1.1;
  double mu_max = 1.5;
};

void check_mutation_config(const MutationConfig& cfg);

/// One mutation of a single value with factor mu. For unit-interval values
/// the factor applies to 1 - v, so "up" moves v towards 0.
double mutate_value(const ParamSpec& spec, double v, double mu, bool up);

/// Per-parameter coin flip with probability beta_mut; selected values are
/// multiplied or divided (50/50) by mu ~ U(mu_min, mu_max) and clamped.
/// Integer parameters step by +-1 instead.
HyperParams mutate(const HyperParams& p, const std::vector<ParamSpec>& specs,
                   const MutationConfig& cfg, Rng& rng);

struct Jitter {
  double lo = 1.0 / 1.3;
  double hi = 1.3;
};

/// Initial population member: each mutable value is initial times a
/// log-uniform factor from the jitter range, clamped.
HyperParams sample_initial(const std::vector<ParamSpec>& specs,
                           const Jitter& jitter, Rng& rng);

HyperParams initial_values(const std::vector<ParamSpec>& specs);

struct Violation {
  std::string name;
  std::string what;
};

/// Lists every problem with p against specs; empty iff p is valid.
std::vector<Violation> validate(const HyperParams& p,
                                const std::vector<ParamSpec>& specs);

/// RL settings and reward coefficients with their usual starting values.
/// Learning rate and GAE lambda are present but immutable.
std::vector<ParamSpec> ppo_reference_specs();

nlohmann::json specs_to_json(const std::vector<ParamSpec>& specs);
std::vector<ParamSpec> specs_from_json(const nlohmann::json& j);
std::vector<ParamSpec> load_specs(const std::string& path);

}  // namespace dpbt

#endif  // DPBT_HYPERPARAMS_HPP_
