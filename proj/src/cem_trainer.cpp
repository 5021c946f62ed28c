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

#include "dpbt/cem_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace dpbt {

namespace {

constexpr std::uint32_t kPayloadMagic = 0x43454d50;  // "CEMP"
constexpr std::uint32_t kPayloadVersion = 1;

const char* const kRequired[] = {"cem_population", "cem_elite_frac", "cem_noise",
                                 "alpha_reach",    "alpha_pick",     "r_picked",
                                 "alpha_targ",     "r_success"};

double wrap_angle(double a) {
  return std::remainder(a, 2.0 * std::numbers::pi);
}

int population_of(const HyperParams& p) {
  return std::max(2, static_cast<int>(std::lround(p.at("cem_population"))));
}

}  // namespace

int feature_count(const planar::EnvConfig& cfg) {
  return cfg.task == planar::TaskKind::kReorientation ? 8 : 7;
}

int output_count(const planar::EnvConfig& cfg) {
  return cfg.task == planar::TaskKind::kReorientation ? 4 : 3;
}

std::vector<bool> policy_mask(const planar::EnvConfig& cfg) {
  const int nf = feature_count(cfg);
  const int no = output_count(cfg);
  std::vector<bool> m(static_cast<std::size_t>(nf) * no, false);
  auto on = [&](int o, int f) { m[o * nf + f] = true; };
  for (int o = 0; o < 2; ++o) {
    for (int f = 0; f < 4; ++f) on(o, f);
  }
  on(2, 4);
  on(2, 5);
  on(2, 6);
  if (no > 3) {
    on(3, 5);
    on(3, 7);
  }
  return m;
}

std::vector<double> policy_features(const planar::EnvConfig& cfg, const planar::EnvState& s) {
  const double held = s.held ? 1.0 : 0.0;
  const double free = 1.0 - held;
  const planar::Vec2 to_obj = s.object.position - s.hand_pos;
  const planar::Vec2 to_targ = s.target.position - s.object.position;
  std::vector<double> f = {free * to_obj.x, free * to_obj.y, held * to_targ.x,
                           held * to_targ.y, free, held, free * to_obj.norm()};
  if (cfg.task == planar::TaskKind::kReorientation)
    f.push_back(held * wrap_angle(s.target.heading - s.object.heading));
  return f;
}

planar::Action LinearPolicy::act(const planar::EnvConfig& cfg, const planar::EnvState& s) const {
  const std::vector<double> f = policy_features(cfg, s);
  std::vector<double> out(n_outputs, 0.0);
  for (int o = 0; o < n_outputs; ++o) {
    for (int i = 0; i < n_features; ++i) out[o] += weights[o * n_features + i] * f[i];
  }
  planar::Action a;
  a.velocity = {out[0], out[1]};
  a.grip = out[2];
  if (n_outputs > 3) a.turn_rate = out[3];
  return a;
}

std::vector<ParamSpec> cem_specs() {
  ParamSpec pop = make_spec("cem_population", ParamKind::kIntegerRange, 24);
  pop.lo = 8;
  pop.hi = 64;
  ParamSpec elite = make_spec("cem_elite_frac", ParamKind::kPositiveContinuous, 0.25);
  elite.lo = 0.05;
  elite.hi = 0.5;
  return {
      pop,
      elite,
      make_spec("cem_noise", ParamKind::kPositiveContinuous, 1.0),
      make_spec("alpha_reach", ParamKind::kPositiveContinuous, 50),
      make_spec("alpha_pick", ParamKind::kPositiveContinuous, 20),
      make_spec("r_picked", ParamKind::kPositiveContinuous, 300),
      make_spec("alpha_targ", ParamKind::kPositiveContinuous, 200),
      make_spec("r_success", ParamKind::kPositiveContinuous, 1000),
  };
}

planar::RewardCoeffs reward_coeffs_from(const HyperParams& p) {
  planar::RewardCoeffs c;
  c.alpha_reach = p.at("alpha_reach");
  c.alpha_pick = p.at("alpha_pick");
  c.r_picked = p.at("r_picked");
  c.alpha_targ = p.at("alpha_targ");
  c.r_success = p.at("r_success");
  return c;
}

EpisodeResult run_episode(const CemConfig& cfg, const LinearPolicy& policy,
                          const planar::RewardCoeffs& coeffs, double epsilon,
                          std::uint64_t episode_seed, std::ostream* trace) {
  Rng rng = make_rng(episode_seed, 0xe9);
  planar::EnvState s = planar::env_reset(cfg.env, rng);
  planar::RewardState rs = planar::fresh_reward_state(cfg.env, s);
  EpisodeResult out;
  int t = 0;
  while (!s.done) {
    const planar::Action a = policy.act(cfg.env, s);
    const planar::EnvState next = planar::env_step(cfg.env, s, a, epsilon, rng);
    const planar::RewardTerms r = planar::staged_reward(cfg.env, s, next, a, rs, coeffs);
    out.episode_return += r.total;
    if (trace) planar::write_trace_line(*trace, t, next, a, r);
    s = next;
    ++t;
  }
  out.n_succ = s.consecutive_successes;
  out.steps = t;
  return out;
}

CemTrainer::CemTrainer(CemConfig cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(make_rng(seed, 0xce3)) {
  if (cfg_.episodes_per_candidate <= 0)
    throw ConfigError("episodes_per_candidate must be positive");
  if (!(cfg_.init_std > 0.0)) throw ConfigError("init_std must be positive");
  mask_ = policy_mask(cfg_.env);
  const std::size_t n = mask_.size();
  mean_.assign(n, 0.0);
  std_.assign(n, 0.0);
  for (std::size_t d = 0; d < n; ++d) {
    if (mask_[d]) std_[d] = cfg_.init_std;
  }
}

void CemTrainer::set_hyperparams(const HyperParams& p) {
  for (const char* name : kRequired) {
    if (!p.count(name))
      throw ConfigError(std::string("CEM trainer needs parameter '") + name + "'");
  }
  params_ = p;
}

std::int64_t CemTrainer::nominal_generation_cost() const {
  if (params_.empty()) throw ConfigError("CEM trainer has no hyperparameters");
  return static_cast<std::int64_t>(population_of(params_)) * cfg_.episodes_per_candidate *
         cfg_.env.attempt_steps;
}

LinearPolicy CemTrainer::mean_policy() const {
  return {feature_count(cfg_.env), output_count(cfg_.env), mean_};
}

void CemTrainer::run_generation(double epsilon) {
  const int pop = population_of(params_);
  const int n_elite =
      std::clamp(static_cast<int>(std::lround(params_.at("cem_elite_frac") * pop)), 2, pop);
  const double noise = params_.at("cem_noise");
  const planar::RewardCoeffs coeffs = reward_coeffs_from(params_);

  // Every candidate sees the same episode seeds within a generation.
  std::vector<std::uint64_t> seeds(cfg_.episodes_per_candidate);
  for (auto& s : seeds) s = rng_();

  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t dim = mean_.size();
  std::vector<std::vector<double>> cand(pop, std::vector<double>(dim));
  std::vector<double> score(pop, 0.0);
  LinearPolicy policy = mean_policy();
  for (int i = 0; i < pop; ++i) {
    for (std::size_t d = 0; d < dim; ++d) cand[i][d] = mean_[d] + std_[d] * gauss(rng_);
    policy.weights = cand[i];
    for (std::uint64_t seed : seeds) {
      const EpisodeResult r = run_episode(cfg_, policy, coeffs, epsilon, seed);
      score[i] += r.episode_return;
      consumed_ += r.steps;
    }
  }

  std::vector<int> order(pop);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return score[a] > score[b]; });
  for (std::size_t d = 0; d < dim; ++d) {
    if (!mask_[d]) continue;
    double m = 0.0;
    for (int e = 0; e < n_elite; ++e) m += cand[order[e]][d];
    m /= n_elite;
    double var = 0.0;
    for (int e = 0; e < n_elite; ++e) var += (cand[order[e]][d] - m) * (cand[order[e]][d] - m);
    var /= n_elite;
    mean_[d] = m;
    std_[d] = std::sqrt(var + noise * noise);
  }

  const EpisodeResult probe = run_episode(cfg_, mean_policy(), coeffs, epsilon, rng_());
  consumed_ += probe.steps;
  window_succ_ += probe.n_succ;
  ++window_count_;
  ++generations_;
}

void CemTrainer::train(std::int64_t n_steps, double epsilon) {
  if (n_steps < 0) throw ConfigError("negative step budget");
  if (n_steps == 0) return;
  const std::int64_t cost = nominal_generation_cost();
  if (n_steps < cost) {
    throw ConfigError("step budget " + std::to_string(n_steps) +
                      " cannot pay for one CEM generation (" + std::to_string(cost) + ")");
  }
  window_succ_ = 0.0;
  window_count_ = 0;
  std::int64_t remaining = n_steps - credited_;
  while (remaining > 0) {
    const std::int64_t before = consumed_;
    run_generation(epsilon);
    remaining -= consumed_ - before;
  }
  credited_ = -remaining;
  if (window_count_ > 0) last_n_succ_ = window_succ_ / window_count_;
}

EvalResult CemTrainer::evaluate(const ToleranceSchedule& sched) {
  return {last_n_succ_, sched.current()};
}

Bytes CemTrainer::snapshot() const {
  ByteWriter w;
  w.put(kPayloadMagic);
  w.put(kPayloadVersion);
  w.put_doubles(mean_);
  w.put_doubles(std_);
  w.put<std::int32_t>(generations_);
  w.put(consumed_);
  w.put(credited_);
  w.put(window_succ_);
  w.put<std::int32_t>(window_count_);
  w.put(last_n_succ_);
  w.put_string(rng_state(rng_));
  return w.take();
}

void CemTrainer::restore(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  if (r.get<std::uint32_t>() != kPayloadMagic) throw std::runtime_error("not a CEM payload");
  if (r.get<std::uint32_t>() != kPayloadVersion)
    throw std::runtime_error("unsupported CEM payload version");
  std::vector<double> mean = r.get_doubles();
  std::vector<double> sd = r.get_doubles();
  if (mean.size() != mean_.size() || sd.size() != std_.size())
    throw std::runtime_error("CEM payload has the wrong policy shape");
  const int generations = r.get<std::int32_t>();
  const auto consumed = r.get<std::int64_t>();
  const auto credited = r.get<std::int64_t>();
  const double window_succ = r.get<double>();
  const int window_count = r.get<std::int32_t>();
  const double last = r.get<double>();
  const std::string rng_text = r.get_string();
  mean_ = std::move(mean);
  std_ = std::move(sd);
  generations_ = generations;
  consumed_ = consumed;
  credited_ = credited;
  window_succ_ = window_succ;
  window_count_ = window_count;
  last_n_succ_ = last;
  set_rng_state(rng_, rng_text);
}

void CemTrainer::reseed(std::uint64_t seed) { rng_ = make_rng(seed, 0xce3); }

CemResult cem_learn(const CemConfig& cfg, const HyperParams& p, std::int64_t budget_steps,
                    std::uint64_t seed, double epsilon, int eval_episodes) {
  if (eval_episodes <= 0) throw ConfigError("eval_episodes must be positive");
  CemTrainer trainer(cfg, seed);
  trainer.set_hyperparams(p);
  trainer.train(budget_steps, epsilon);
  CemResult out;
  out.policy = trainer.mean_policy();
  out.generations = trainer.generations();
  out.steps = trainer.steps_consumed();
  const planar::RewardCoeffs coeffs = reward_coeffs_from(p);
  Rng eval_rng = make_rng(seed, 0xe7a1);
  double total = 0.0;
  for (int i = 0; i < eval_episodes; ++i)
    total += run_episode(cfg, out.policy, coeffs, epsilon, eval_rng()).n_succ;
  out.eval = {total / eval_episodes, epsilon};
  return out;
}

}  // namespace dpbt
