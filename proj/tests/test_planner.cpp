// Copyright 2026 The mdshare Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "mdl/planner.hpp"
#include "mdl/presets.hpp"
#include "test_support.hpp"

using namespace mdl;
using namespace mdl::planner;
using archspec::ArchitectureSpec;
namespace fs = std::filesystem;

namespace {

std::set<std::pair<int, int>> as_pairs(const SharingPlan& plan) {
  std::set<std::pair<int, int>> pairs;
  for (const auto& [layer, filters] : plan.selection)
    for (int f : filters) pairs.emplace(layer, f);
  return pairs;
}

std::int64_t max_filter_cost(const ArchitectureSpec& arch) {
  std::int64_t m = 0;
  for (const auto& l : arch.layers)
    m = std::max(m, archspec::per_filter_params(l));
  return m;
}

}  // namespace

TEST_CASE("bottom_specific 20% on the toy backbone") {
  const ArchitectureSpec arch = archspec::presets::toy_t();
  const SharingPlan plan =
      build_plan(arch, Strategy::kBottomSpecific, 0.2);
  // target 21.2; L0 filters cost 9 each, first L1 filter (cost 18) overshoots
  CHECK(plan.achieved_params == 18);
  REQUIRE(plan.selection.size() == 1);
  CHECK(plan.selection.at(0) == std::vector<int>{0, 1});
  CHECK(plan_param_count(plan, arch) == 18);
}

TEST_CASE("top_specific 20% on the toy backbone") {
  const ArchitectureSpec arch = archspec::presets::toy_t();
  const SharingPlan plan = build_plan(arch, Strategy::kTopSpecific, 0.2);
  // all four cost-4 filters of L2, then an 18-cost L1 filter is excluded
  CHECK(plan.achieved_params == 16);
  REQUIRE(plan.selection.size() == 1);
  CHECK(plan.selection.at(2) == std::vector<int>{0, 1, 2, 3});
  CHECK(plan_param_count(plan, arch) == 16);
}

TEST_CASE("fraction 0 and fraction 1 boundaries") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const ArchitectureSpec arch = mdltest::random_arch(rng, trial);
    for (Strategy s : {Strategy::kTopSpecific, Strategy::kBottomSpecific,
                       Strategy::kRandom}) {
      const SharingPlan zero = build_plan(arch, s, 0.0, 9);
      CHECK(zero.selection.empty());
      CHECK(zero.achieved_params == 0);

      const SharingPlan full = build_plan(arch, s, 1.0, 9);
      CHECK(full.achieved_params == archspec::count_conv_params(arch));
      for (const auto& l : arch.layers) {
        REQUIRE(full.selected_in(l.layer_id) != nullptr);
        CHECK(static_cast<int>(full.selected_in(l.layer_id)->size()) ==
              l.out_channels);
      }
    }
  }
}

TEST_CASE("build_plan rejects bad inputs") {
  const ArchitectureSpec arch = archspec::presets::toy_t();
  CHECK_THROWS_AS(build_plan(arch, Strategy::kRandom, -0.1), SpecError);
  CHECK_THROWS_AS(build_plan(arch, Strategy::kRandom, 1.3), SpecError);
  ArchitectureSpec empty;
  empty.name = "empty";
  CHECK_THROWS_AS(build_plan(empty, Strategy::kRandom, 0.5), SpecError);
}

TEST_CASE("plan_param_count on empty plan and corrupted plans") {
  const ArchitectureSpec arch = archspec::presets::toy_t();
  SharingPlan plan = build_plan(arch, Strategy::kBottomSpecific, 0.0);
  CHECK(plan_param_count(plan, arch) == 0);

  plan = build_plan(arch, Strategy::kBottomSpecific, 0.2);
  plan.achieved_params = 999;  // corrupted
  CHECK_THROWS_AS(validate_plan(plan, arch), SpecError);

  plan = build_plan(arch, Strategy::kBottomSpecific, 0.2);
  plan.selection[1].push_back(17);  // filter out of range
  CHECK_THROWS_AS(plan_param_count(plan, arch), SpecError);

  plan = build_plan(arch, Strategy::kBottomSpecific, 0.2);
  plan.selection[7] = {0};  // unknown layer
  CHECK_THROWS_AS(plan_param_count(plan, arch), SpecError);
}

TEST_CASE("budget tightness across 200 random triples") {
  Rng rng(2024);
  const Strategy strategies[] = {Strategy::kTopSpecific,
                                 Strategy::kBottomSpecific, Strategy::kRandom};
  for (int trial = 0; trial < 200; ++trial) {
    const ArchitectureSpec arch = mdltest::random_arch(rng, 3000 + trial);
    const Strategy s = strategies[rng.next_below(3)];
    const double fraction = rng.next_double();
    const SharingPlan plan = build_plan(arch, s, fraction, trial);
    const double target =
        fraction * static_cast<double>(archspec::count_conv_params(arch));
    const double deviation =
        std::abs(static_cast<double>(plan.achieved_params) - target);
    CHECK(deviation <= static_cast<double>(max_filter_cost(arch)));
  }
}

TEST_CASE("deterministic strategies nest across increasing fractions") {
  Rng rng(77);
  const double fractions[] = {0.0, 0.1, 0.25, 0.4, 0.55, 0.7, 0.85, 1.0};
  for (int trial = 0; trial < 30; ++trial) {
    const ArchitectureSpec arch = mdltest::random_arch(rng, 4000 + trial);
    for (Strategy s : {Strategy::kTopSpecific, Strategy::kBottomSpecific}) {
      std::set<std::pair<int, int>> prev;
      for (double f : fractions) {
        const auto cur = as_pairs(build_plan(arch, s, f));
        CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
        prev = cur;
      }
    }
  }
}

TEST_CASE("top and bottom selections are disjoint at fractions <= 1/2") {
  Rng rng(88);
  int tested = 0;
  for (int trial = 0; tested < 40 && trial < 400; ++trial) {
    const ArchitectureSpec arch = mdltest::random_arch(rng, 5000 + trial);
    const std::int64_t total = archspec::count_conv_params(arch);
    bool dominated = false;
    for (const auto& l : arch.layers)
      if (2 * archspec::layer_total_params(l) > total) dominated = true;
    if (dominated) continue;  // property asserted only without a >50% layer
    ++tested;
    for (double f : {0.1, 0.3, 0.5}) {
      const auto top = as_pairs(build_plan(arch, Strategy::kTopSpecific, f));
      const auto bottom =
          as_pairs(build_plan(arch, Strategy::kBottomSpecific, f));
      std::vector<std::pair<int, int>> overlap;
      std::set_intersection(top.begin(), top.end(), bottom.begin(),
                            bottom.end(), std::back_inserter(overlap));
      CHECK(overlap.empty());
    }
  }
  CHECK(tested == 40);
}

TEST_CASE("random plans are seed-deterministic and seed-sensitive") {
  // 128 filters so collisions across seeds are essentially impossible.
  ArchitectureSpec arch;
  arch.name = "wide";
  arch.input = {4, 8, 8};
  archspec::ConvLayerSpec l;
  l.layer_id = 0; l.in_channels = 4; l.out_channels = 128;
  l.kernel_h = 3; l.kernel_w = 3; l.padding = 1;
  arch.layers = {l};
  arch.head_in_features = 128;
  arch.validate();

  const SharingPlan a = build_plan(arch, Strategy::kRandom, 0.5, 123);
  const SharingPlan b = build_plan(arch, Strategy::kRandom, 0.5, 123);
  CHECK(as_pairs(a) == as_pairs(b));
  CHECK(a.achieved_params == b.achieved_params);

  std::set<std::set<std::pair<int, int>>> distinct;
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    distinct.insert(as_pairs(build_plan(arch, Strategy::kRandom, 0.5, seed)));
  CHECK(distinct.size() == 20);
}

TEST_CASE("random permutation does not depend on the fraction") {
  Rng rng(31);
  const ArchitectureSpec arch = mdltest::random_arch(rng, 6000);
  const auto small = as_pairs(build_plan(arch, Strategy::kRandom, 0.25, 5));
  const auto large = as_pairs(build_plan(arch, Strategy::kRandom, 0.75, 5));
  CHECK(std::includes(large.begin(), large.end(), small.begin(), small.end()));
}

TEST_CASE("plan files round-trip losslessly") {
  const ArchitectureSpec arch = archspec::presets::desk8();
  const SharingPlan plan = build_plan(arch, Strategy::kRandom, 0.37, 99);
  const fs::path path = fs::temp_directory_path() / "mdshare_plan_rt.json";
  save_plan(plan, path);
  const SharingPlan back = load_plan(path);
  fs::remove(path);

  CHECK(back.arch_name == plan.arch_name);
  CHECK(back.strategy == plan.strategy);
  CHECK(back.fraction == plan.fraction);
  CHECK(back.seed == plan.seed);
  CHECK(back.achieved_params == plan.achieved_params);
  CHECK(back.selection == plan.selection);
  CHECK(plan_to_json_text(back) == plan_to_json_text(plan));
  CHECK(back.digest() == plan.digest());
  validate_plan(back, arch);
}

TEST_CASE("strategy names parse and print") {
  CHECK(strategy_from_string("top_specific") == Strategy::kTopSpecific);
  CHECK(strategy_from_string("bottom_specific") == Strategy::kBottomSpecific);
  CHECK(strategy_from_string("random") == Strategy::kRandom);
  CHECK(to_string(Strategy::kRandom) == "random");
  CHECK_THROWS_AS(strategy_from_string("middle_out"), SpecError);
}
