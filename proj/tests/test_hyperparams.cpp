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

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dpbt/hyperparams.hpp"

using namespace dpbt;

namespace {

const ParamSpec& find_spec(const std::vector<ParamSpec>& specs, const std::string& name) {
  for (const auto& s : specs) {
    if (s.name == name) return s;
  }
  throw std::out_of_range(name);
}

}  // namespace

TEST_SUITE("hyperparams") {

TEST_CASE("default hard bounds per kind") {
  const ParamSpec c = make_spec("c", ParamKind::kPositiveContinuous, 0.016);
  CHECK(c.lo == doctest::Approx(0.0016));
  CHECK(c.hi == doctest::Approx(0.16));
  const ParamSpec u = make_spec("u", ParamKind::kUnitInterval, 0.99);
  CHECK(u.lo == 0.8);
  CHECK(u.hi == 0.9999);
  const ParamSpec i = make_spec("i", ParamKind::kIntegerRange, 2);
  CHECK(i.lo == 1);
  CHECK(i.hi == 8);
}

TEST_CASE("check_specs rejects malformed lists") {
  auto specs = ppo_reference_specs();
  CHECK_NOTHROW(check_specs(specs));
  auto dup = specs;
  dup.push_back(dup.front());
  CHECK_THROWS_AS(check_specs(dup), ConfigError);
  auto inverted = specs;
  std::swap(inverted[3].lo, inverted[3].hi);
  CHECK_THROWS_AS(check_specs(inverted), ConfigError);
  auto unit = specs;
  unit[0].hi = 1.0;
  CHECK_THROWS_AS(check_specs(unit), ConfigError);
  auto outside = specs;
  outside[3].initial = 1.0;
  CHECK_THROWS_AS(check_specs(outside), ConfigError);
}

TEST_CASE("zero mutation probability is the identity") {
  const auto specs = ppo_reference_specs();
  MutationConfig cfg;
  cfg.beta_mut = 0.0;
  Rng rng = make_rng(3);
  const HyperParams p = sample_initial(specs, Jitter{}, rng);
  for (int i = 0; i < 100; ++i) CHECK(mutate(p, specs, cfg, rng) == p);
}

TEST_CASE("hand-evaluated single mutation") {
  const ParamSpec kl = make_spec("kl_threshold", ParamKind::kPositiveContinuous, 0.016);
  CHECK(mutate_value(kl, 0.016, 1.25, false) == doctest::Approx(0.0128).epsilon(1e-15));
  CHECK(mutate_value(kl, 0.016, 1.25, true) == doctest::Approx(0.02).epsilon(1e-15));
  const ParamSpec gamma = make_spec("gamma", ParamKind::kUnitInterval, 0.99);
  CHECK(mutate_value(gamma, 0.99, 1.5, false) == doctest::Approx(1.0 - 0.01 / 1.5));
  CHECK(mutate_value(gamma, 0.99, 1.5, true) == doctest::Approx(0.985));
  const ParamSpec epochs = make_spec("ppo_epochs", ParamKind::kIntegerRange, 2);
  CHECK(mutate_value(epochs, 2, 1.3, true) == 3);
  CHECK(mutate_value(epochs, 1, 1.3, false) == 1);
  CHECK(mutate_value(kl, 0.15, 1.5, true) == kl.hi);
}

TEST_CASE("mutation frequency and direction statistics") {
  const auto specs = ppo_reference_specs();
  const MutationConfig cfg;
  Rng rng = make_rng(41);
  const HyperParams p = initial_values(specs);
  std::map<std::string, int> changed, increased;
  const int trials = 100000;
  for (int t = 0; t < trials; ++t) {
    const HyperParams q = mutate(p, specs, cfg, rng);
    CHECK_MESSAGE(validate(q, specs).empty(), "mutation left the bounds");
    for (const auto& s : specs) {
      if (q.at(s.name) != p.at(s.name)) ++changed[s.name];
      if (q.at(s.name) > p.at(s.name)) ++increased[s.name];
    }
  }
  for (const auto& s : specs) {
    if (!s.is_mutable) {
      CHECK(changed[s.name] == 0);
      continue;
    }
    if (s.kind == ParamKind::kPositiveContinuous) {
      const double freq = static_cast<double>(changed[s.name]) / trials;
      CHECK_MESSAGE(freq >= 0.19, s.name);
      CHECK_MESSAGE(freq <= 0.21, s.name);
      const double up = static_cast<double>(increased[s.name]) / changed[s.name];
      CHECK_MESSAGE(up >= 0.49, s.name);
      CHECK_MESSAGE(up <= 0.51, s.name);
    }
  }
  // ppo_epochs at 2 can always move by one in either direction.
  const double epochs_freq = static_cast<double>(changed["ppo_epochs"]) / trials;
  CHECK(epochs_freq == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("mutation chains stay inside the bounds") {
  const auto specs = ppo_reference_specs();
  MutationConfig cfg;
  cfg.beta_mut = 0.9;
  Rng rng = make_rng(5);
  HyperParams p = initial_values(specs);
  for (int i = 0; i < 10000; ++i) {
    p = mutate(p, specs, cfg, rng);
    REQUIRE(validate(p, specs).empty());
  }
}

TEST_CASE("mutation is deterministic per seed") {
  const auto specs = ppo_reference_specs();
  Rng a = make_rng(9), b = make_rng(9);
  HyperParams p = initial_values(specs), q = p;
  for (int i = 0; i < 50; ++i) {
    p = mutate(p, specs, MutationConfig{}, a);
    q = mutate(q, specs, MutationConfig{}, b);
  }
  CHECK(p == q);
}

TEST_CASE("unit jitter reproduces the initial values exactly") {
  const auto specs = ppo_reference_specs();
  Rng rng = make_rng(1);
  const HyperParams p = sample_initial(specs, Jitter{1.0, 1.0}, rng);
  CHECK(p.at("gamma") == 0.99);
  CHECK(p.at("gae_lambda") == 0.95);
  CHECK(p.at("learning_rate") == 3e-4);
  CHECK(p.at("kl_threshold") == 0.016);
  CHECK(p.at("grad_norm") == 1.0);
  CHECK(p.at("ppo_clip") == 0.1);
  CHECK(p.at("critic_coeff") == 4.0);
  CHECK(p.at("ppo_epochs") == 2);
  CHECK(p.at("alpha_reach") == 50);
  CHECK(p.at("alpha_pick") == 20);
  CHECK(p.at("r_picked") == 300);
  CHECK(p.at("alpha_targ") == 200);
  CHECK(p.at("r_success") == 1000);
  CHECK(p == initial_values(specs));
}

TEST_CASE("jittered samples stay in bounds and differ across seeds") {
  const auto specs = ppo_reference_specs();
  Rng rng = make_rng(77);
  for (int i = 0; i < 10000; ++i) REQUIRE(validate(sample_initial(specs, Jitter{}, rng), specs).empty());
  Rng a = make_rng(1), b = make_rng(2);
  CHECK(sample_initial(specs, Jitter{}, a) != sample_initial(specs, Jitter{}, b));
  Rng c = make_rng(1);
  CHECK_THROWS_AS(sample_initial(specs, Jitter{2.0, 1.0}, c), ConfigError);
}

TEST_CASE("validate names the offending parameter") {
  const auto specs = ppo_reference_specs();
  HyperParams p = initial_values(specs);
  CHECK(validate(p, specs).empty());
  p["gamma"] = 1.2;
  auto v = validate(p, specs);
  REQUIRE(v.size() == 1);
  CHECK(v[0].name == "gamma");
  p["gamma"] = 0.99;
  p["ppo_epochs"] = 2.5;
  p.erase("alpha_pick");
  p["grad_norm"] = std::nan("");
  v = validate(p, specs);
  CHECK(v.size() == 3);
}

TEST_CASE("spec JSON round trip") {
  const auto specs = ppo_reference_specs();
  const auto back = specs_from_json(specs_to_json(specs));
  REQUIRE(back.size() == specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    CHECK(back[i].name == specs[i].name);
    CHECK(back[i].kind == specs[i].kind);
    CHECK(back[i].initial == specs[i].initial);
    CHECK(back[i].lo == specs[i].lo);
    CHECK(back[i].hi == specs[i].hi);
    CHECK(back[i].is_mutable == specs[i].is_mutable);
  }
  CHECK(find_spec(back, "gae_lambda").lo == 0.5);
  const auto path = std::filesystem::temp_directory_path() / "dpbt_specs_test.json";
  {
    std::ofstream out(path);
    out << R"({"params": [{"name": "x", "kind": "sideways", "initial": 1}]})";
  }
  CHECK_THROWS_AS(load_specs(path.string()), ConfigError);
  std::filesystem::remove(path);
}

}  // TEST_SUITE
