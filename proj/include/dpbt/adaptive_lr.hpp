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

#ifndef DPBT_ADAPTIVE_LR_HPP_
#define DPBT_ADAPTIVE_LR_HPP_

namespace dpbt {

/// KL-targeting learning-rate controller.
struct AdaptiveLr {
  double lr = 3e-4;
  double kl_threshold = 0.016;
  double lr_min = 1e-6;
  double lr_max = 1e-2;
  double factor = 1.5;
};

/// Divides lr by the factor when the measured KL exceeds the threshold and
/// multiplies it when the KL falls below; the result is clamped to
/// [lr_min, lr_max].
AdaptiveLr adaptive_lr_update(const AdaptiveLr& state, double measured_kl);

}  // namespace dpbt

#endif  // DPBT_ADAPTIVE_LR_HPP_
