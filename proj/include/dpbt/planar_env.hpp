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

#ifndef DPBT_PLANAR_ENV_HPP_
#define DPBT_PLANAR_ENV_HPP_

/// \file
/// Planar pick-and-place in a vertical x/y plane with the table along y = 0.
/// A point hand moves with commanded velocity. Closing the gripper within the
/// grasp radius of the object center snaps the hand onto the center and
/// attaches the object kinematically. Released objects fall straight down onto the table.
///
/// Episodes consist of consecutive attempts. An attempt succeeds when the
/// held object stays within tolerance of the target for hold_steps steps; it
/// fails when the object is dropped after having been lifted or when the
/// attempt timer runs out. The episode ends at the first failure or after
/// max_successes successes.

#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>

#include "dpbt/random.hpp"

namespace dpbt::planar {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

struct Pose {
  Vec2 position;
  double heading = 0.0;
};

struct Dims {
  double width = 0.1;
  double height = 0.1;
};

/// Corners of the oriented rectangle in a fixed order: (+w,+h), (-w,+h),
/// (-w,-h), (+w,-h) in the body frame.
using Keypoints = std::array<Vec2, 4>;

Keypoints keypoints_of(const Pose& pose, const Dims& dims);

/// Largest distance between corresponding keypoints (no permutation).
double max_keypoint_distance(const Keypoints& a, const Keypoints& b);

bool success_check(const Keypoints& kp, const Keypoints& target, double epsilon);

enum class TaskKind {
  /// Object center must match the target position (regrasping analog).
  kPositionOnly,
  /// All keypoints must match the target keypoints.
  kReorientation,
};

struct EnvConfig {
  TaskKind task = TaskKind::kPositionOnly;
  double dt = 0.05;
  double max_speed = 1.0;
  double max_turn_rate = 2.0;
  double grasp_radius = 0.03;
  double gravity = 9.81;
  /// Attempt time limit in steps.
  int attempt_steps = 300;
  /// Steps the object must stay in tolerance for a success.
  int hold_steps = 20;
  int max_successes = 50;
  double lift_threshold = 0.15;
  double x_min = -0.4;
  double x_max = 0.4;
  double y_max = 0.6;
  double spawn_x = 0.3;
  double target_x = 0.3;
  double target_y_min = 0.25;
  double target_y_max = 0.40;
  double dims_min = 0.03;
  double dims_max = 0.30;
};

struct EnvState {
  Vec2 hand_pos;
  Vec2 hand_vel;
  bool grip = false;
  Pose object;
  Dims dims;
  bool held = false;
  double object_vy = 0.0;
  Pose target;
  /// Object exceeded the lift threshold during this attempt.
  bool lifted = false;
  int attempt_timer = 0;
  int hold_timer = 0;
  int consecutive_successes = 0;
  int attempt_index = 0;
  /// The current attempt succeeded; the next step starts a new attempt.
  bool attempt_succeeded = false;
  bool done = false;
};

struct Action {
  Vec2 velocity;
  /// Angular rate applied to a held object (used by reorientation).
  double turn_rate = 0.0;
  /// Positive closes the gripper, otherwise open.
  double grip = -1.0;
};

struct StepEvents {
  bool grasped = false;
  bool released = false;
  bool landed = false;
  bool dropped = false;
  bool success = false;
  bool timeout = false;
  bool new_attempt = false;
  bool episode_done = false;
};

/// Resting center height of the object for its heading.
double rest_height(const Pose& pose, const Dims& dims);

/// Height of the object above its resting position.
double object_height(const EnvState& s);

/// Hand to object-center distance.
double hand_object_distance(const EnvState& s);

/// Object-to-target distance for the task: center distance for
/// position-only, max keypoint distance for reorientation.
double target_distance(const EnvConfig& cfg, const EnvState& s);

EnvState env_reset(const EnvConfig& cfg, Rng& rng);

/// Advances one step. A step taken right after a successful attempt starts
/// the next attempt (new target, object back on the table for position-only
/// tasks) and ignores the action.
EnvState env_step(const EnvConfig& cfg, const EnvState& state, const Action& action,
                  double epsilon, Rng& rng, StepEvents* events = nullptr);

struct RewardCoeffs {
  double alpha_reach = 50.0;
  double alpha_pick = 20.0;
  double r_picked = 300.0;
  double alpha_targ = 200.0;
  double r_success = 1000.0;
  double vel_penalty_weight = 0.01;
};

struct RewardState {
  double d_closest = 0.0;
  double dhat_closest = 0.0;
  bool picked = false;
  double h_threshold = 0.15;
};

struct RewardTerms {
  double reach = 0.0;
  double pick_dense = 0.0;
  double picked_bonus = 0.0;
  double targ_dense = 0.0;
  double success_bonus = 0.0;
  double vel_penalty = 0.0;
  double total = 0.0;
};

/// Reward bookkeeping for the attempt that `s` is in.
RewardState fresh_reward_state(const EnvConfig& cfg, const EnvState& s);

/// Staged reward r_reach + r_pick + r_targ - r_vel for the transition
/// prev -> next, updating the per-attempt bookkeeping in rs.
RewardTerms staged_reward(const EnvConfig& cfg, const EnvState& prev, const EnvState& next,
                          const Action& action, RewardState& rs, const RewardCoeffs& c);

/// One line of a rollout trace.
void write_trace_line(std::ostream& out, int t, const EnvState& s, const Action& a,
                      const RewardTerms& r);

}  // namespace dpbt::planar

#endif  // DPBT_PLANAR_ENV_HPP_
