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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdl/common.hpp"

namespace mdl::planner {
struct SharingPlan;
}

namespace mdl::archspec {

// One convolution layer. A "filter" is one output-channel slice of the
// weight tensor plus its bias entry when present; it is the atomic unit
// that sharing plans select.
struct ConvLayerSpec {
  int layer_id = 0;  // 0 is closest to the input
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int groups = 1;
  bool has_bias = false;
  // Structural glue, carried through to model assembly.
  int stride = 1;
  int padding = 0;
  std::string activation = "relu";  // "relu" | "none"
  std::string post_pool = "none";   // "none" | "avg2"
  std::optional<int> residual_from;  // adds that layer's block output
};

struct BatchNormSite {
  int layer_id = 0;
  int num_features = 0;
};

struct InputSpec {
  int channels = 0;
  int height = 0;
  int width = 0;
};

// Declarative backbone description. Plans and parameter budgets are computed
// from this without ever materializing weight tensors.
struct ArchitectureSpec {
  std::string name;
  InputSpec input;
  std::vector<ConvLayerSpec> layers;
  std::vector<BatchNormSite> bn_sites;
  int head_in_features = 0;

  const BatchNormSite* bn_for_layer(int layer_id) const;
  bool has_bn(int layer_id) const { return bn_for_layer(layer_id) != nullptr; }

  // Throws SpecError unless every structural invariant holds: consecutive
  // layer ids, positive dims, group divisibility, channel chaining, valid
  // bn sites, spatial sizes that stay >= 1, and a head width matching the
  // final layer.
  void validate() const;
};

struct HeadSpec {
  std::string domain_id;
  int num_classes = 0;
};

// Spatial output size of one layer given its input size.
int conv_out_extent(int in_extent, int kernel, int stride, int padding);

struct FeatureShape {
  int channels, height, width;
};
// Shape after layer `layer_id`'s full block (conv + glue). Pass -1 for the
// network input.
FeatureShape feature_shape_after(const ArchitectureSpec& arch, int layer_id);

std::int64_t per_filter_params(const ConvLayerSpec& layer);
std::int64_t layer_total_params(const ConvLayerSpec& layer);

// Conv weights and conv biases only; BN and classifier parameters are
// excluded. This is the budget base that plan fractions refer to.
std::int64_t count_conv_params(const ArchitectureSpec& arch);

// 2 * num_features per site (scale and bias). Running statistics are
// buffers, not learned parameters, and are excluded here.
std::int64_t bn_params_per_domain(const ArchitectureSpec& arch);
std::int64_t head_params(const ArchitectureSpec& arch, const HeadSpec& head);

// shared conv + per-domain (specific conv + BN + head), one head per domain.
std::int64_t total_model_params(const ArchitectureSpec& arch,
                                const planner::SharingPlan& plan,
                                std::span<const HeadSpec> heads);

// File form: one JSON document per backbone, schema_version required.
ArchitectureSpec arch_from_json_text(const std::string& text);
std::string arch_to_json_text(const ArchitectureSpec& arch);
ArchitectureSpec load_arch(const std::filesystem::path& path);
void save_arch(const ArchitectureSpec& arch, const std::filesystem::path& path);

}  // namespace mdl::archspec
