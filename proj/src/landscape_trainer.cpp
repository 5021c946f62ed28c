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

#include "dpbt/landscape_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dpbt {

namespace {

constexpr std::uint32_t kPayloadMagic = 0x4c534350;  // "LSCP"
constexpr std::uint32_t kPayloadVersion = 1;

const char* const kRequired[] = {"lr_kl", "gamma_like", "epochs_like"};

}  // namespace

std::vector<ParamSpec> landscape_specs() {
  return {
      make_spec("lr_kl", ParamKind::kPositiveContinuous, 0.016),
      make_spec("gamma_like", ParamKind::kUnitInterval, 0.99),
      make_spec("epochs_like", ParamKind::kIntegerRange, 2),
  };
}

double landscape_optimum(const LandscapeConfig& cfg, double t) {
  return cfg.rho0 * std::exp(std::sin(2.0 * std::numbers::pi * t / cfg.drift_period));
}

double epochs_bump(const LandscapeConfig& cfg, double epochs) {
  const double z = (epochs - cfg.epochs_center) / cfg.epochs_width;
  return std::exp(-0.5 * z * z);
}

double landscape_gain(const LandscapeConfig& cfg, const HyperParams& p, double t) {
  const double diff = std::log(p.at("lr_kl")) - std::log(landscape_optimum(cfg, t));
  return std::exp(-diff * diff / cfg.kl_width) * epochs_bump(cfg, p.at("epochs_like"));
}

LandscapeTrainer::LandscapeTrainer(LandscapeConfig cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(make_rng(seed, 0x1a9d)) {
  if (cfg_.steps_per_update <= 0) throw ConfigError("steps_per_update must be positive");
  if (cfg_.saturation_k <= 0.0) throw ConfigError("saturation_k must be positive");
  state_.seed = seed;
}

void LandscapeTrainer::set_hyperparams(const HyperParams& p) {
  for (const char* name : kRequired) {
    if (!p.count(name))
      throw ConfigError(std::string("landscape trainer needs parameter '") + name + "'");
  }
  params_ = p;
}

void LandscapeTrainer::train(std::int64_t n_steps, double /*epsilon*/) {
  if (params_.empty()) throw ConfigError("landscape trainer has no hyperparameters");
  std::normal_distribution<double> noise(0.0, cfg_.noise_std);
  state_.step_carry += n_steps;
  while (state_.step_carry >= cfg_.steps_per_update) {
    state_.step_carry -= cfg_.steps_per_update;
    last_gain_ = landscape_gain(cfg_, params_, static_cast<double>(state_.t));
    state_.skill = std::max(0.0, state_.skill + last_gain_ + noise(rng_));
    ++state_.t;
  }
}

EvalResult LandscapeTrainer::evaluate(const ToleranceSchedule& sched) {
  EvalResult r;
  r.n_succ = cfg_.n_max * state_.skill / (state_.skill + cfg_.saturation_k);
  r.epsilon = sched.current();
  return r;
}

Bytes LandscapeTrainer::snapshot() const {
  ByteWriter w;
  w.put(kPayloadMagic);
  w.put(kPayloadVersion);
  w.put(state_.skill);
  w.put(state_.t);
  w.put(state_.step_carry);
  w.put(state_.seed);
  w.put(last_gain_);
  w.put_string(rng_state(rng_));
  return w.take();
}

void LandscapeTrainer::restore(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  if (r.get<std::uint32_t>() != kPayloadMagic) throw std::runtime_error("not a landscape payload");
  if (r.get<std::uint32_t>() != kPayloadVersion)
    throw std::runtime_error("unsupported landscape payload version");
  LandscapeTrainerState s;
  s.skill = r.get<double>();
  s.t = r.get<std::int64_t>();
  s.step_carry = r.get<std::int64_t>();
  s.seed = r.get<std::uint64_t>();
  const double gain = r.get<double>();
  const std::string rng_text = r.get_string();
  state_ = s;
  last_gain_ = gain;
  set_rng_state(rng_, rng_text);
}

void LandscapeTrainer::reseed(std::uint64_t seed) {
  state_.seed = seed;
  rng_ = make_rng(seed, 0x1a9d);
}

}  // namespace dpbt
