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

#include "mdl/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mdl/rng.hpp"

namespace mdl::planner {

using nlohmann::json;

namespace {
constexpr int kSchemaVersion = 1;
}

Strategy strategy_from_string(std::string_view s) {
  if (s == "top_specific") return Strategy::kTopSpecific;
  if (s == "bottom_specific") return Strategy::kBottomSpecific;
  if (s == "random") return Strategy::kRandom;
  throw SpecError("unknown sharing strategy '" + std::string(s) +
                  "' (expected top_specific, bottom_specific, or random)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kTopSpecific: return "top_specific";
    case Strategy::kBottomSpecific: return "bottom_specific";
    case Strategy::kRandom: return "random";
  }
  return "?";
}

bool SharingPlan::selects(int layer_id, int filter) const {
  auto it = selection.find(layer_id);
  if (it == selection.end()) return false;
  return std::binary_search(it->second.begin(), it->second.end(), filter);
}

const std::vector<int>* SharingPlan::selected_in(int layer_id) const {
  auto it = selection.find(layer_id);
  return it == selection.end() ? nullptr : &it->second;
}

std::int64_t SharingPlan::selected_filter_count() const {
  std::int64_t count = 0;
  for (const auto& [_, filters] : selection) count += filters.size();
  return count;
}

std::string SharingPlan::digest() const {
  return to_hex(fnv1a64(plan_to_json_text(*this)));
}

namespace {

struct FilterRef {
  int layer_id;
  int filter;
  std::int64_t cost;
};

std::vector<FilterRef> enumerate(const archspec::ArchitectureSpec& arch,
                                 Strategy strategy, std::uint64_t seed) {
  std::vector<FilterRef> order;
  for (const auto& layer : arch.layers) {
    const std::int64_t cost = archspec::per_filter_params(layer);
    for (int f = 0; f < layer.out_channels; ++f)
      order.push_back({layer.layer_id, f, cost});
  }
  switch (strategy) {
    case Strategy::kBottomSpecific:
      break;  // layer 0 upward, filters ascending
    case Strategy::kTopSpecific:
      // Exact reverse of the bottom walk. Filters within a layer are
      // exchangeable at initialization, and mirroring the enumeration is
      // what makes the two deterministic strategies complementary: at any
      // fraction <= 1/2 their selections cannot intersect.
      std::reverse(order.begin(), order.end());
      break;
    case Strategy::kRandom: {
      Rng rng = derive_rng(seed, "plan/random");
      rng.shuffle(order);
      break;
    }
  }
  return order;
}

}  // namespace

SharingPlan build_plan(const archspec::ArchitectureSpec& arch,
                       Strategy strategy, double fraction,
                       std::uint64_t seed) {
  arch.validate();
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw SpecError("fraction must be in [0, 1], got " +
                    format_double(fraction));

  SharingPlan plan;
  plan.arch_name = arch.name;
  plan.strategy = strategy;
  plan.fraction = fraction;
  plan.seed = strategy == Strategy::kRandom ? seed : 0;

  const double target =
      fraction * static_cast<double>(archspec::count_conv_params(arch));
  std::int64_t achieved = 0;
  for (const FilterRef& ref : enumerate(arch, strategy, seed)) {
    const double with = std::abs(static_cast<double>(achieved + ref.cost) - target);
    const double without = std::abs(static_cast<double>(achieved) - target);
    if (!(with < without)) break;
    plan.selection[ref.layer_id].push_back(ref.filter);
    achieved += ref.cost;
  }
  for (auto& [_, filters] : plan.selection)
    std::sort(filters.begin(), filters.end());
  plan.achieved_params = achieved;
  return plan;
}

std::int64_t plan_param_count(const SharingPlan& plan,
                              const archspec::ArchitectureSpec& arch) {
  if (plan.arch_name != arch.name)
    throw SpecError("plan names architecture '" + plan.arch_name +
                    "' but was applied to '" + arch.name + "'");
  std::int64_t total = 0;
  for (const auto& [layer_id, filters] : plan.selection) {
    if (layer_id < 0 || layer_id >= static_cast<int>(arch.layers.size()))
      throw SpecError("plan selects unknown layer " + std::to_string(layer_id));
    const auto& layer = arch.layers[layer_id];
    int prev = -1;
    for (int f : filters) {
      if (f < 0 || f >= layer.out_channels)
        throw SpecError("plan selects filter " + std::to_string(f) +
                        " of layer " + std::to_string(layer_id) +
                        " which has only " +
                        std::to_string(layer.out_channels) + " filters");
      if (f <= prev)
        throw SpecError("plan selection for layer " + std::to_string(layer_id) +
                        " is not sorted and unique");
      prev = f;
    }
    total += static_cast<std::int64_t>(filters.size()) *
             archspec::per_filter_params(layer);
  }
  return total;
}

void validate_plan(const SharingPlan& plan,
                   const archspec::ArchitectureSpec& arch) {
  const std::int64_t recomputed = plan_param_count(plan, arch);
  if (recomputed != plan.achieved_params)
    throw SpecError("corrupted plan: stored achieved_params " +
                    std::to_string(plan.achieved_params) +
                    " but selection costs " + std::to_string(recomputed));
  if (plan.fraction == 0.0 && !plan.selection.empty())
    throw SpecError("corrupted plan: fraction 0 but selection is nonempty");
  if (plan.fraction == 1.0) {
    for (const auto& layer : arch.layers) {
      const auto* sel = plan.selected_in(layer.layer_id);
      if (!sel || static_cast<int>(sel->size()) != layer.out_channels)
        throw SpecError("corrupted plan: fraction 1 must select every filter");
    }
  }
}

std::string plan_to_json_text(const SharingPlan& plan) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["arch_name"] = plan.arch_name;
  j["strategy"] = to_string(plan.strategy);
  j["fraction"] = plan.fraction;
  j["seed"] = plan.seed;
  j["achieved_params"] = plan.achieved_params;
  json sel = json::object();
  for (const auto& [layer_id, filters] : plan.selection)
    sel[std::to_string(layer_id)] = filters;
  j["selection"] = sel;
  return j.dump(2) + "\n";
}

SharingPlan plan_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SpecError(std::string("plan file is not valid JSON: ") + e.what());
  }
  try {
    if (!j.contains("schema_version"))
      throw SpecError("plan file is missing schema_version");
    if (j["schema_version"].get<int>() != kSchemaVersion)
      throw SpecError("unsupported plan schema_version " +
                      j["schema_version"].dump());
    SharingPlan plan;
    plan.arch_name = j.at("arch_name").get<std::string>();
    plan.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    plan.fraction = j.at("fraction").get<double>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.achieved_params = j.at("achieved_params").get<std::int64_t>();
    for (const auto& [key, filters] : j.at("selection").items()) {
      auto& dst = plan.selection[std::stoi(key)];
      for (const auto& f : filters) dst.push_back(f.get<int>());
    }
    return plan;
  } catch (const json::exception& e) {
    throw SpecError(std::string("bad plan document: ") + e.what());
  }
}

SharingPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open plan file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return plan_from_json_text(ss.str());
}

void save_plan(const SharingPlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write plan file: " + path.string());
  out << plan_to_json_text(plan);
}

}  // namespace mdl::planner
