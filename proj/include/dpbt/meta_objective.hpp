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

#ifndef DPBT_META_OBJECTIVE_HPP_
#define DPBT_META_OBJECTIVE_HPP_

namespace dpbt {

inline constexpr double kMaxConsecutiveSuccesses = 50.0;

/// Success tolerance curriculum. The current tolerance is kept as
/// start * factor^k so that k annealing steps reproduce max(factor^k * start,
/// eps_star) without accumulated rounding.
struct ToleranceSchedule {
  double eps0 = 0.075;
  double eps_star = 0.01;
  double anneal_factor = 0.9;
  /// Annealing fires when the evaluated success count strictly exceeds this.
  double trigger_threshold = 3.0;
  double start = 0.075;
  int anneal_steps = 0;

  static ToleranceSchedule standard(double eps0, double eps_star);
  /// Schedule positioned at an arbitrary tolerance inside [eps_star, eps0].
  static ToleranceSchedule at(double eps0, double eps_star, double current);

  double current() const;
  /// True once the tolerance equals eps_star (relative tolerance 1e-9).
  bool at_final() const;
};

/// Throws std::invalid_argument on a malformed schedule.
void check_schedule(const ToleranceSchedule& s);

struct EvalResult {
  /// Mean consecutive successes over the evaluation window.
  double n_succ = 0.0;
  /// Tolerance in force during the evaluation.
  double epsilon = 0.075;
};

/// Tolerance-aware ranking score:
///   (eps0 - eps) / (eps0 - eps_star) + 0.01 * n_succ   while eps > eps_star
///   1 + n_succ                                         once eps == eps_star
/// Throws std::domain_error if eval.epsilon lies outside [eps_star, eps0].
double meta_objective(const EvalResult& eval, const ToleranceSchedule& sched);

/// One curriculum check: tightens the tolerance by anneal_factor (floored at
/// eps_star) when eval.n_succ exceeds the trigger threshold.
ToleranceSchedule anneal(const ToleranceSchedule& sched, const EvalResult& eval);

bool same_tolerance(double a, double b);

}  // namespace dpbt

#endif  // DPBT_META_OBJECTIVE_HPP_
