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

#include "dpbt/adaptive_lr.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dpbt {

AdaptiveLr adaptive_lr_update(const AdaptiveLr& state, double measured_kl) {
  if (!std::isfinite(measured_kl) || measured_kl < 0.0)
    throw std::invalid_argument("measured KL must be finite and nonnegative");
  AdaptiveLr next = state;
  if (measured_kl > state.kl_threshold) {
    next.lr = state.lr / state.factor;
  } else if (measured_kl < state.kl_threshold) {
    next.lr = state.lr * state.factor;
  }
  next.lr = std::clamp(next.lr, state.lr_min, state.lr_max);
  return next;
}

}  // namespace dpbt
