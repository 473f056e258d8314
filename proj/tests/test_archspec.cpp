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

#include <filesystem>

#include "mdl/archspec.hpp"
#include "mdl/planner.hpp"
#include "mdl/presets.hpp"
#include "test_support.hpp"

using namespace mdl;
using namespace mdl::archspec;
namespace fs = std::filesystem;

namespace {

ArchitectureSpec headless_toy() {
  // toy_t without BN, for the single-domain accounting example.
  ArchitectureSpec arch = presets::toy_t();
  arch.bn_sites.clear();
  return arch;
}

}  // namespace

TEST_CASE("per_filter_params on plain, depthwise and 1x1 layers") {
  ConvLayerSpec l;
  l.in_channels = 2; l.out_channels = 4; l.kernel_h = 3; l.kernel_w = 3;
  CHECK(per_filter_params(l) == 18);

  ConvLayerSpec dw;
  dw.in_channels = 8; dw.out_channels = 8; dw.groups = 8;
  dw.kernel_h = 3; dw.kernel_w = 3; dw.has_bias = true;
  CHECK(per_filter_params(dw) == 10);

  ConvLayerSpec pw;
  pw.in_channels = 4; pw.out_channels = 4; pw.kernel_h = 1; pw.kernel_w = 1;
  CHECK(per_filter_params(pw) == 4);
}

TEST_CASE("count_conv_params on the toy backbone") {
  const ArchitectureSpec arch = presets::toy_t();
  CHECK(count_conv_params(arch) == 106);

  ArchitectureSpec empty;
  CHECK(count_conv_params(empty) == 0);
}

TEST_CASE("count matches per-layer identity and brute force on random archs") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const ArchitectureSpec arch = mdltest::random_arch(rng, trial);
    std::int64_t by_layers = 0;
    for (const auto& l : arch.layers)
      by_layers += static_cast<std::int64_t>(l.out_channels) *
                   per_filter_params(l);
    CHECK(count_conv_params(arch) == by_layers);
    CHECK(count_conv_params(arch) == mdltest::brute_force_conv_elements(arch));
  }
}

TEST_CASE("count matches brute force on the mobilenet-like descriptor") {
  const ArchitectureSpec arch = presets::mobilenet_v2_like();
  CHECK(count_conv_params(arch) == mdltest::brute_force_conv_elements(arch));
  CHECK(count_conv_params(arch) > 1'000'000);  // full-size, not a toy
}

TEST_CASE("total_model_params single-domain degenerate case") {
  const ArchitectureSpec arch = headless_toy();
  const auto plan =
      planner::build_plan(arch, planner::Strategy::kBottomSpecific, 0.0);
  const HeadSpec head{"solo", 10};
  // head on 4 features: 4*10 weights + 10 biases
  CHECK(total_model_params(arch, plan, std::span(&head, 1)) ==
        count_conv_params(arch) + (4 * 10 + 10));
}

TEST_CASE("total_model_params two-domain toy example") {
  const ArchitectureSpec arch = presets::toy_t();  // one bn site, 4 features
  const auto plan =
      planner::build_plan(arch, planner::Strategy::kBottomSpecific, 0.0);
  const std::vector<HeadSpec> heads{{"a", 10}, {"b", 5}};
  CHECK(total_model_params(arch, plan, heads) == 197);
}

TEST_CASE("plan at 100% accounts as independent per-domain models") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const ArchitectureSpec arch = mdltest::random_arch(rng, 1000 + trial);
    const auto plan =
        planner::build_plan(arch, planner::Strategy::kTopSpecific, 1.0);
    const std::vector<HeadSpec> heads{{"a", 3}, {"b", 5}, {"c", 2}};
    std::int64_t independent = 0;
    for (const auto& h : heads)
      independent += count_conv_params(arch) + bn_params_per_domain(arch) +
                     head_params(arch, h);
    CHECK(total_model_params(arch, plan, heads) == independent);
  }
}

TEST_CASE("total_model_params rejects a plan for another architecture") {
  const ArchitectureSpec toy = presets::toy_t();
  const ArchitectureSpec desk = presets::desk8();
  const auto plan =
      planner::build_plan(desk, planner::Strategy::kBottomSpecific, 0.5);
  const HeadSpec head{"a", 4};
  CHECK_THROWS_AS(total_model_params(toy, plan, std::span(&head, 1)),
                  SpecError);
}

TEST_CASE("validation rejects malformed architectures") {
  ArchitectureSpec arch = presets::toy_t();
  arch.layers[1].layer_id = 5;  // non-consecutive ids
  CHECK_THROWS_AS(arch.validate(), SpecError);

  arch = presets::toy_t();
  arch.layers[1].groups = 3;  // does not divide channels
  CHECK_THROWS_AS(arch.validate(), SpecError);

  arch = presets::toy_t();
  arch.bn_sites = {{1, 7}};  // wrong num_features
  CHECK_THROWS_AS(arch.validate(), SpecError);

  arch = presets::toy_t();
  arch.bn_sites = {{9, 4}};  // unknown layer
  CHECK_THROWS_AS(arch.validate(), SpecError);

  arch = presets::toy_t();
  arch.head_in_features = 3;  // must match final width
  CHECK_THROWS_AS(arch.validate(), SpecError);

  arch = presets::toy_t();
  arch.layers.clear();
  CHECK_THROWS_AS(arch.validate(), SpecError);
}

TEST_CASE("architecture files round-trip and require a schema version") {
  const ArchitectureSpec arch = presets::desk8();
  const fs::path path = fs::temp_directory_path() / "mdshare_arch_rt.json";
  save_arch(arch, path);
  const ArchitectureSpec back = load_arch(path);
  CHECK(back.name == arch.name);
  CHECK(back.layers.size() == arch.layers.size());
  CHECK(count_conv_params(back) == count_conv_params(arch));
  CHECK(back.bn_sites.size() == arch.bn_sites.size());
  CHECK(arch_to_json_text(back) == arch_to_json_text(arch));
  fs::remove(path);

  CHECK_THROWS_AS(arch_from_json_text("{\"name\":\"x\"}"), SpecError);
  CHECK_THROWS_AS(arch_from_json_text("not json"), SpecError);
  CHECK_THROWS_AS(load_arch("/nonexistent/arch.json"), IoError);
}

TEST_CASE("feature shapes follow conv and pooling glue") {
  const ArchitectureSpec arch = presets::desk8();
  const FeatureShape in = feature_shape_after(arch, -1);
  CHECK(in.channels == 3);
  CHECK(in.height == 16);
  const FeatureShape last =
      feature_shape_after(arch, static_cast<int>(arch.layers.size()) - 1);
  CHECK(last.channels == arch.head_in_features);
  CHECK(last.height == 4);
  CHECK(last.width == 4);
}
