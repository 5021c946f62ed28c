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

#include "dpbt/meta_objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dpbt {

namespace {
constexpr double kRelTol = 1e-9;
}  // namespace

bool same_tolerance(double a, double b) {
  return std::abs(a - b) <= kRelTol * std::max(std::abs(a), std::abs(b));
}

ToleranceSchedule ToleranceSchedule::standard(double eps0, double eps_star) {
  return at(eps0, eps_star, eps0);
}

ToleranceSchedule ToleranceSchedule::at(double eps0, double eps_star,
                                        double current) {
  ToleranceSchedule s;
  s.eps0 = eps0;
  s.eps_star = eps_star;
  s.start = current;
  check_schedule(s);
  return s;
}

double ToleranceSchedule::current() const {
  if (anneal_steps == 0) return start;
  return std::max(std::pow(anneal_factor, anneal_steps) * start, eps_star);
}

bool ToleranceSchedule::at_final() const {
  return same_tolerance(current(), eps_star) || current() < eps_star;
}

void check_schedule(const ToleranceSchedule& s) {
  if (!(s.eps_star > 0.0 && s.eps_star <= s.eps0))
    throw std::invalid_argument("tolerance schedule needs 0 < eps_star <= eps0");
  if (!(s.anneal_factor > 0.0 && s.anneal_factor < 1.0))
    throw std::invalid_argument("anneal_factor must lie in (0, 1)");
  if (s.start < s.eps_star * (1 - kRelTol) || s.start > s.eps0 * (1 + kRelTol))
    throw std::invalid_argument("current tolerance outside [eps_star, eps0]");
}

double meta_objective(const EvalResult& eval, const ToleranceSchedule& sched) {
  const double eps = eval.epsilon;
  const bool final_tol = same_tolerance(eps, sched.eps_star);
  if (!final_tol && (eps < sched.eps_star || eps > sched.eps0) &&
      !same_tolerance(eps, sched.eps0)) {
    throw std::domain_error("epsilon " + std::to_string(eps) +
                            " outside [eps_star, eps0]");
  }
  if (final_tol) return 1.0 + eval.n_succ;
  return (sched.eps0 - eps) / (sched.eps0 - sched.eps_star) +
         0.01 * eval.n_succ;
}

ToleranceSchedule anneal(const ToleranceSchedule& sched,
                         const EvalResult& eval) {
  ToleranceSchedule next = sched;
  if (eval.n_succ > sched.trigger_threshold && !sched.at_final()) {
    ++next.anneal_steps;
  }
  return next;
}

}  // namespace dpbt
