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

#ifndef DPBT_LANDSCAPE_TRAINER_HPP_
#define DPBT_LANDSCAPE_TRAINER_HPP_

/// \file
/// Synthetic stand-in for an RL learner. Skill accumulates at a rate that
/// depends on how close the hyperparameters sit to a drifting optimum, and
/// is mapped onto a saturating consecutive-success count. Runs in
/// microseconds, which makes population-level experiments cheap enough for
/// statistical tests.

#include <cstdint>
#include <vector>

#include "dpbt/random.hpp"
#include "dpbt/trainer.hpp"

namespace dpbt {

struct LandscapeConfig {
  /// Optimal lr_kl at t = 0.
  double rho0 = 0.016;
  /// Period of the optimum drift, in internal iterations.
  double drift_period = 120.0;
  /// Denominator of the log-distance exponent.
  double kl_width = 0.5;
  /// Peak and width of the epochs_like bump.
  double epochs_center = 5.0;
  double epochs_width = 1.5;
  double noise_std = 0.05;
  /// n_succ = n_max * skill / (skill + saturation_k).
  double saturation_k = 25.0;
  double n_max = kMaxConsecutiveSuccesses;
  /// Environment steps per internal iteration.
  std::int64_t steps_per_update = 1;
};

struct LandscapeTrainerState {
  double skill = 0.0;
  std::int64_t t = 0;
  std::int64_t step_carry = 0;
  std::uint64_t seed = 0;
};

/// Parameter specs the landscape consumes: lr_kl, gamma_like, epochs_like.
std::vector<ParamSpec> landscape_specs();

/// exp(-(ln lr_kl - ln rho(t))^2 / kl_width) * h(epochs_like).
double landscape_gain(const LandscapeConfig& cfg, const HyperParams& p, double t);

/// rho0 * exp(sin(2 pi t / drift_period)).
double landscape_optimum(const LandscapeConfig& cfg, double t);

/// Unimodal bump over the integer range, 1 at epochs_center.
double epochs_bump(const LandscapeConfig& cfg, double epochs);

class LandscapeTrainer final : public Trainer {
 public:
  LandscapeTrainer(LandscapeConfig cfg, std::uint64_t seed);

  void set_hyperparams(const HyperParams& p) override;
  void train(std::int64_t n_steps, double epsilon) override;
  EvalResult evaluate(const ToleranceSchedule& sched) override;
  Bytes snapshot() const override;
  void restore(std::span<const std::uint8_t> payload) override;
  void reseed(std::uint64_t seed) override;

  const LandscapeTrainerState& state() const { return state_; }
  const LandscapeConfig& config() const { return cfg_; }
  /// Deterministic gain of the most recent internal iteration, before noise.
  double last_gain() const { return last_gain_; }

 private:
  LandscapeConfig cfg_;
  LandscapeTrainerState state_;
  HyperParams params_;
  Rng rng_;
  double last_gain_ = 0.0;
};

}  // namespace dpbt

#endif  // DPBT_LANDSCAPE_TRAINER_HPP_
