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

#ifndef DPBT_TESTS_META_GRID_HPP_
#define DPBT_TESTS_META_GRID_HPP_

namespace dpbt::testing {

struct GridPoint {
  double epsilon;
  double n_succ;
  double expected;
};

// Expected values computed with exact rational arithmetic on the binary
// inputs, then rounded once to double.
inline constexpr GridPoint kGrid[] = {
    {0.075, 0, 0.0},
    {0.0425, 2, 0.5199999999999999},
    {0.01, 10, 11.0},
    {0.075, 50, 0.5},
    {0.07, 1, 0.08692307692307678},
    {0.0675, 4, 0.1553846153846153},
    {0.06075, 3.5, 0.2542307692307692},
    {0.05, 7, 0.45461538461538453},
    {0.04, 0.25, 0.5409615384615384},
    {0.03, 12, 0.8123076923076923},
    {0.025, 20, 0.9692307692307692},
    {0.02, 33.3, 1.1791538461538462},
    {0.015, 40, 1.323076923076923},
    {0.0108, 5, 1.0376923076923077},
    {0.0101, 49.5, 1.4934615384615384},
    {0.01, 0, 1.0},
    {0.01, 1, 2.0},
    {0.01, 25.5, 26.5},
    {0.01, 50, 51.0},
    {0.0123, 0.1, 0.9656153846153847},
};


}  // namespace dpbt::testing

#endif  // DPBT_TESTS_META_GRID_HPP_
