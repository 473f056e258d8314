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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mdl/archspec.hpp"
#include "mdl/common.hpp"

namespace mdl::planner {

// Which filters become domain-specific:
//   kTopSpecific    - filters nearest the output (the conventional practice)
//   kBottomSpecific - filters nearest the input
//   kRandom         - a seeded uniform draw over all conv layers
enum class Strategy { kTopSpecific, kBottomSpecific, kRandom };

Strategy strategy_from_string(std::string_view s);
std::string to_string(Strategy s);

// The exact set of (layer, filter) pairs marked domain-specific for one
// strategy and budget fraction. Every domain instantiates its own copy of
// the selected filters; the rest of the backbone is shared.
struct SharingPlan {
  std::string arch_name;
  Strategy strategy = Strategy::kBottomSpecific;
  double fraction = 0.0;
  std::uint64_t seed = 0;  // meaningful for the random strategy only
  std::map<int, std::vector<int>> selection;  // layer_id -> sorted filters
  std::int64_t achieved_params = 0;

  bool selects(int layer_id, int filter) const;
  const std::vector<int>* selected_in(int layer_id) const;
  std::int64_t selected_filter_count() const;
  bool selection_empty() const { return selection.empty(); }

  // Digest over the canonical serialized form; recorded in checkpoints so a
  // checkpoint and a plan file can be cross-validated.
  std::string digest() const;
};

// Builds the plan for `fraction` of the architecture's conv parameters.
//
// Filters are walked in a strategy-specific enumeration order and included
// greedily: a filter joins the selection iff doing so strictly reduces
// |achieved - target|, and the walk stops at the first exclusion. The
// absolute budget deviation is therefore bounded by one per-filter cost.
// bottom_specific walks layer 0 upward; top_specific walks the exact
// reverse, so for fractions <= 1/2 the two selections are provably
// disjoint; random walks a uniform permutation determined solely by `seed`.
SharingPlan build_plan(const archspec::ArchitectureSpec& arch,
                       Strategy strategy, double fraction,
                       std::uint64_t seed = 0);

// Recomputes the selection's parameter cost from the architecture. Throws
// SpecError if the plan references filters the architecture does not have.
std::int64_t plan_param_count(const SharingPlan& plan,
                              const archspec::ArchitectureSpec& arch);

// plan_param_count plus the stored-vs-recomputed consistency check that
// catches corrupted plan files.
void validate_plan(const SharingPlan& plan,
                   const archspec::ArchitectureSpec& arch);

std::string plan_to_json_text(const SharingPlan& plan);
SharingPlan plan_from_json_text(const std::string& text);
SharingPlan load_plan(const std::filesystem::path& path);
void save_plan(const SharingPlan& plan, const std::filesystem::path& path);

}  // namespace mdl::planner
