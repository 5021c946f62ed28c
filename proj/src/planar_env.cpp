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

#include "dpbt/planar_env.hpp"

#include <algorithm>
#include <numbers>

#include "json.hpp"

namespace dpbt::planar {

namespace {

Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

Vec2 clamp_norm(Vec2 v, double max_norm) {
  const double n = v.norm();
  if (!(n > max_norm)) return v;
  return v * (max_norm / n);
}

double finite_or_zero(double v) { return std::isfinite(v) ? v : 0.0; }

void place_on_table(const EnvConfig& cfg, EnvState& s, Rng& rng) {
  s.object.heading = 0.0;
  s.object.position = {uniform(rng, -cfg.spawn_x, cfg.spawn_x), 0.0};
  s.object.position.y = rest_height(s.object, s.dims);
  s.object_vy = 0.0;
  s.held = false;
}

void sample_target(const EnvConfig& cfg, EnvState& s, Rng& rng) {
  s.target.heading = cfg.task == TaskKind::kReorientation
                         ? uniform(rng, -std::numbers::pi / 2, std::numbers::pi / 2)
                         : s.object.heading;
  Pose probe = s.target;
  const double base = rest_height(probe, s.dims);
  s.target.position = {uniform(rng, -cfg.target_x, cfg.target_x),
                       base + uniform(rng, cfg.target_y_min, cfg.target_y_max)};
}

void start_attempt(const EnvConfig& cfg, EnvState& s, Rng& rng) {
  if (cfg.task == TaskKind::kPositionOnly) place_on_table(cfg, s, rng);
  sample_target(cfg, s, rng);
  s.lifted = s.held && object_height(s) > cfg.lift_threshold;
  s.attempt_timer = cfg.attempt_steps;
  s.hold_timer = cfg.hold_steps;
  s.attempt_succeeded = false;
  ++s.attempt_index;
}

}  // namespace

Keypoints keypoints_of(const Pose& pose, const Dims& dims) {
  const double hw = dims.width / 2;
  const double hh = dims.height / 2;
  const Vec2 body[4] = {{hw, hh}, {-hw, hh}, {-hw, -hh}, {hw, -hh}};
  Keypoints kp;
  for (int i = 0; i < 4; ++i) kp[i] = pose.position + rotate(body[i], pose.heading);
  return kp;
}

double max_keypoint_distance(const Keypoints& a, const Keypoints& b) {
  double m = 0.0;
  for (int i = 0; i < 4; ++i) m = std::max(m, distance(a[i], b[i]));
  return m;
}

bool success_check(const Keypoints& kp, const Keypoints& target, double epsilon) {
  return max_keypoint_distance(kp, target) <= epsilon;
}

double rest_height(const Pose& pose, const Dims& dims) {
  return std::abs(dims.width / 2 * std::sin(pose.heading)) +
         std::abs(dims.height / 2 * std::cos(pose.heading));
}

double object_height(const EnvState& s) {
  return std::max(0.0, s.object.position.y - rest_height(s.object, s.dims));
}

double hand_object_distance(const EnvState& s) {
  return distance(s.hand_pos, s.object.position);
}

double target_distance(const EnvConfig& cfg, const EnvState& s) {
  if (cfg.task == TaskKind::kReorientation) {
    return max_keypoint_distance(keypoints_of(s.object, s.dims), keypoints_of(s.target, s.dims));
  }
  return distance(s.object.position, s.target.position);
}

EnvState env_reset(const EnvConfig& cfg, Rng& rng) {
  EnvState s;
  s.dims = {uniform(rng, cfg.dims_min, cfg.dims_max), uniform(rng, cfg.dims_min, cfg.dims_max)};
  place_on_table(cfg, s, rng);
  s.hand_pos = {uniform(rng, cfg.x_min, cfg.x_max), uniform(rng, 0.2, 0.5)};
  sample_target(cfg, s, rng);
  s.attempt_timer = cfg.attempt_steps;
  s.hold_timer = cfg.hold_steps;
  return s;
}

EnvState env_step(const EnvConfig& cfg, const EnvState& state, const Action& action,
                  double epsilon, Rng& rng, StepEvents* events) {
  StepEvents ev;
  EnvState s = state;
  if (s.done) {
    ev.episode_done = true;
    if (events) *events = ev;
    return s;
  }
  if (s.attempt_succeeded) {
    start_attempt(cfg, s, rng);
    ev.new_attempt = true;
    if (events) *events = ev;
    return s;
  }

  const Vec2 v = clamp_norm({finite_or_zero(action.velocity.x), finite_or_zero(action.velocity.y)},
                            cfg.max_speed);
  s.hand_pos = s.hand_pos + v * cfg.dt;
  s.hand_pos.x = std::clamp(s.hand_pos.x, cfg.x_min, cfg.x_max);
  s.hand_pos.y = std::clamp(s.hand_pos.y, 0.0, cfg.y_max);
  s.hand_vel = v;

  const bool close = finite_or_zero(action.grip) > 0.0;
  if (s.held && !close) {
    s.held = false;
    s.object_vy = 0.0;
    ev.released = true;
  }
  if (!s.held && close && hand_object_distance(s) <= cfg.grasp_radius) {
    s.held = true;
    s.hand_pos = s.object.position;
    s.object_vy = 0.0;
    ev.grasped = true;
  }
  s.grip = close;

  const bool was_lifted = s.lifted;
  if (s.held) {
    if (cfg.task == TaskKind::kReorientation) {
      const double w = std::clamp(finite_or_zero(action.turn_rate), -cfg.max_turn_rate,
                                  cfg.max_turn_rate);
      s.object.heading += w * cfg.dt;
    }
    s.object.position = s.hand_pos;
    const double floor = rest_height(s.object, s.dims);
    if (s.object.position.y < floor) {
      s.hand_pos.y += floor - s.object.position.y;
      s.object.position.y = floor;
    }
  } else {
    const double floor = rest_height(s.object, s.dims);
    if (s.object.position.y > floor) {
      s.object_vy -= cfg.gravity * cfg.dt;
      s.object.position.y += s.object_vy * cfg.dt;
      if (s.object.position.y <= floor) {
        s.object.position.y = floor;
        s.object_vy = 0.0;
        ev.landed = true;
      }
    }
  }
  if (object_height(s) > cfg.lift_threshold) s.lifted = true;

  if (ev.landed && was_lifted) {
    ev.dropped = true;
    s.done = true;
  }

  if (!s.done) {
    const bool in_tol = s.held && s.lifted && target_distance(cfg, s) <= epsilon;
    s.hold_timer = in_tol ? s.hold_timer - 1 : cfg.hold_steps;
    if (s.hold_timer <= 0) {
      ev.success = true;
      s.attempt_succeeded = true;
      ++s.consecutive_successes;
      if (s.consecutive_successes >= cfg.max_successes) s.done = true;
    }
  }
  if (!s.done && !ev.success) {
    if (--s.attempt_timer <= 0) {
      ev.timeout = true;
      s.done = true;
    }
  }
  ev.episode_done = s.done;
  if (events) *events = ev;
  return s;
}

RewardState fresh_reward_state(const EnvConfig& cfg, const EnvState& s) {
  RewardState rs;
  rs.d_closest = hand_object_distance(s);
  rs.dhat_closest = target_distance(cfg, s);
  rs.picked = s.lifted;
  rs.h_threshold = cfg.lift_threshold;
  return rs;
}

RewardTerms staged_reward(const EnvConfig& cfg, const EnvState& prev, const EnvState& next,
                          const Action& action, RewardState& rs, const RewardCoeffs& c) {
  RewardTerms r;
  if (next.attempt_index != prev.attempt_index) {
    rs = fresh_reward_state(cfg, next);
    return r;
  }
  if (prev.done) return r;

  const double d = hand_object_distance(next);
  const double dhat = target_distance(cfg, next);
  const double h = object_height(next);
  const bool picked = rs.picked || h > rs.h_threshold;

  r.reach = c.alpha_reach * std::max(rs.d_closest - d, 0.0);
  r.pick_dense = picked ? 0.0 : c.alpha_pick * h;
  r.picked_bonus = (picked && !rs.picked) ? c.r_picked : 0.0;
  r.targ_dense = picked ? c.alpha_targ * std::max(rs.dhat_closest - dhat, 0.0) : 0.0;
  r.success_bonus = (next.attempt_succeeded && !prev.attempt_succeeded) ? c.r_success : 0.0;
  const Vec2 v = clamp_norm(action.velocity, cfg.max_speed);
  r.vel_penalty = c.vel_penalty_weight * v.squared_norm();
  r.total = r.reach + r.pick_dense + r.picked_bonus + r.targ_dense + r.success_bonus -
            r.vel_penalty;

  rs.d_closest = std::min(rs.d_closest, d);
  rs.dhat_closest = std::min(rs.dhat_closest, dhat);
  rs.picked = picked;
  return r;
}

void write_trace_line(std::ostream& out, int t, const EnvState& s, const Action& a,
                      const RewardTerms& r) {
  nlohmann::json j = {
      {"t", t},
      {"hand", {s.hand_pos.x, s.hand_pos.y}},
      {"object", {s.object.position.x, s.object.position.y, s.object.heading}},
      {"target", {s.target.position.x, s.target.position.y, s.target.heading}},
      {"held", s.held},
      {"grip", s.grip},
      {"n_succ", s.consecutive_successes},
      {"attempt", s.attempt_index},
      {"action", {a.velocity.x, a.velocity.y, a.turn_rate, a.grip}},
      {"reward",
       {{"reach", r.reach},
        {"pick", r.pick_dense},
        {"picked", r.picked_bonus},
        {"targ", r.targ_dense},
        {"success", r.success_bonus},
        {"vel", r.vel_penalty},
        {"total", r.total}}},
  };
  out << j.dump() << "\n";
}

}  // namespace dpbt::planar
