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

#ifndef DPBT_TRAINER_HPP_
#define DPBT_TRAINER_HPP_

#include <cstdint>
#include <span>

#include "dpbt/bytes.hpp"
#include "dpbt/hyperparams.hpp"
#include "dpbt/meta_objective.hpp"

namespace dpbt {

/// What the PBT loop needs from a learner.
///
/// restore(snapshot()) must reproduce the complete learner state, including
/// its random stream, so that training continues identically afterwards.
class Trainer {
 public:
  virtual ~Trainer() = default;

  /// Throws ConfigError if a required parameter is missing.
  virtual void set_hyperparams(const HyperParams& p) = 0;

  /// Advances training by n_steps environment transitions; epsilon is the
  /// success tolerance currently in force.
  virtual void train(std::int64_t n_steps, double epsilon) = 0;

  /// Success statistics for the most recent training window.
  virtual EvalResult evaluate(const ToleranceSchedule& sched) = 0;

  virtual Bytes snapshot() const = 0;
  virtual void restore(std::span<const std::uint8_t> payload) = 0;

  /// Re-keys the random stream after adopting another agent's state, so the
  /// copy explores independently of its source. The default keeps the
  /// restored stream.
  virtual void reseed(std::uint64_t /*seed*/) {}
};

}  // namespace dpbt

#endif  // DPBT_TRAINER_HPP_
