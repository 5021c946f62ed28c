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

#ifndef DPBT_CEM_TRAINER_HPP_
#define DPBT_CEM_TRAINER_HPP_

/// \file
/// Cross-entropy-method policy search on the planar environment. The policy
/// is linear in a small set of phase-gated features; CEM keeps a diagonal
/// Gaussian over its weights. Population size, elite fraction, exploration
/// noise and the reward coefficients all come from the hyperparameter vector,
/// so PBT can tune them.

#include <cstdint>
#include <ostream>
#include <vector>

#include "dpbt/planar_env.hpp"
#include "dpbt/random.hpp"
#include "dpbt/trainer.hpp"

namespace dpbt {

struct CemConfig {
  planar::EnvConfig env;
  int episodes_per_candidate = 2;
  /// Initial standard deviation of every policy weight.
  double init_std = 2.0;
};

/// Phase-gated features: hand-to-object offset while free, object-to-target
/// offset while holding, phase indicators and the free-hand distance.
/// Reorientation adds the heading error while holding.
std::vector<double> policy_features(const planar::EnvConfig& cfg, const planar::EnvState& s);
int feature_count(const planar::EnvConfig& cfg);
/// vx, vy, grip, and turn rate for reorientation.
int output_count(const planar::EnvConfig& cfg);

/// Which weights of the row-major output x feature matrix CEM searches over.
/// Velocity reads the two gated offsets, grip reads the phase indicators and
/// the free-hand distance, turn reads the heading error and the held flag.
/// The remaining weights stay zero.
std::vector<bool> policy_mask(const planar::EnvConfig& cfg);

struct LinearPolicy {
  int n_features = 0;
  int n_outputs = 0;
  /// Row-major n_outputs x n_features.
  std::vector<double> weights;

  planar::Action act(const planar::EnvConfig& cfg, const planar::EnvState& s) const;
};

/// CEM settings plus the five reward coefficients.
std::vector<ParamSpec> cem_specs();

planar::RewardCoeffs reward_coeffs_from(const HyperParams& p);

struct EpisodeResult {
  double episode_return = 0.0;
  int n_succ = 0;
  std::int64_t steps = 0;
};

EpisodeResult run_episode(const CemConfig& cfg, const LinearPolicy& policy,
                          const planar::RewardCoeffs& coeffs, double epsilon,
                          std::uint64_t episode_seed, std::ostream* trace = nullptr);

class CemTrainer final : public Trainer {
 public:
  CemTrainer(CemConfig cfg, std::uint64_t seed);

  void set_hyperparams(const HyperParams& p) override;
  /// Runs whole generations until the requested steps are consumed (overshoot
  /// is credited to the next call). Throws ConfigError if n_steps cannot pay
  /// for a single generation of timed-out episodes.
  void train(std::int64_t n_steps, double epsilon) override;
  /// Mean successes of the mean policy's episodes within the last train call.
  EvalResult evaluate(const ToleranceSchedule& sched) override;
  Bytes snapshot() const override;
  void restore(std::span<const std::uint8_t> payload) override;
  void reseed(std::uint64_t seed) override;

  LinearPolicy mean_policy() const;
  int generations() const { return generations_; }
  std::int64_t steps_consumed() const { return consumed_; }
  /// Steps one generation costs when every episode times out.
  std::int64_t nominal_generation_cost() const;

 private:
  void run_generation(double epsilon);

  CemConfig cfg_;
  HyperParams params_;
  std::vector<double> mean_;
  std::vector<double> std_;
  std::vector<bool> mask_;
  Rng rng_;
  int generations_ = 0;
  std::int64_t consumed_ = 0;
  std::int64_t credited_ = 0;
  double window_succ_ = 0.0;
  int window_count_ = 0;
  double last_n_succ_ = 0.0;
};

struct CemResult {
  LinearPolicy policy;
  EvalResult eval;
  int generations = 0;
  std::int64_t steps = 0;
};

/// Trains a fresh CEM learner for budget_steps (0 returns the initial,
/// all-zero mean policy) and evaluates the resulting mean policy on
/// eval_episodes episodes at epsilon.
CemResult cem_learn(const CemConfig& cfg, const HyperParams& p, std::int64_t budget_steps,
                    std::uint64_t seed, double epsilon = 0.075, int eval_episodes = 10);

}  // namespace dpbt

#endif  // DPBT_CEM_TRAINER_HPP_
