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

#include "mdl/archspec.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mdl/planner.hpp"

namespace mdl::archspec {

using nlohmann::json;

namespace {
constexpr int kSchemaVersion = 1;

void check(bool ok, const std::string& msg) {
  if (!ok) throw SpecError("architecture: " + msg);
}
}  // namespace

const BatchNormSite* ArchitectureSpec::bn_for_layer(int layer_id) const {
  for (const auto& site : bn_sites)
    if (site.layer_id == layer_id) return &site;
  return nullptr;
}

int conv_out_extent(int in_extent, int kernel, int stride, int padding) {
  return (in_extent + 2 * padding - kernel) / stride + 1;
}

FeatureShape feature_shape_after(const ArchitectureSpec& arch, int layer_id) {
  FeatureShape s{arch.input.channels, arch.input.height, arch.input.width};
  for (const auto& layer : arch.layers) {
    if (layer.layer_id > layer_id) break;
    s.channels = layer.out_channels;
    s.height = conv_out_extent(s.height, layer.kernel_h, layer.stride,
                               layer.padding);
    s.width = conv_out_extent(s.width, layer.kernel_w, layer.stride,
                              layer.padding);
    if (layer.post_pool == "avg2") {
      s.height /= 2;
      s.width /= 2;
    }
  }
  return s;
}

void ArchitectureSpec::validate() const {
  check(!name.empty(), "name must be nonempty");
  check(input.channels > 0 && input.height > 0 && input.width > 0,
        "input dims must be positive");
  check(!layers.empty(), "'" + name + "' has no conv layers");
  check(head_in_features > 0, "head_in_features must be positive");

  int prev_channels = input.channels;
  FeatureShape shape{input.channels, input.height, input.width};
  std::vector<FeatureShape> block_shapes;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string at = "layer " + std::to_string(l.layer_id);
    check(l.layer_id == static_cast<int>(i),
          "layer ids must be consecutive 0..N-1; found " +
              std::to_string(l.layer_id) + " at position " +
              std::to_string(i));
    check(l.in_channels > 0 && l.out_channels > 0, at + ": channel counts must be positive");
    check(l.kernel_h > 0 && l.kernel_w > 0, at + ": kernel dims must be positive");
    check(l.stride >= 1, at + ": stride must be >= 1");
    check(l.padding >= 0, at + ": padding must be >= 0");
    check(l.groups >= 1, at + ": groups must be >= 1");
    check(l.in_channels % l.groups == 0 && l.out_channels % l.groups == 0,
          at + ": groups must divide both channel counts");
    check(l.in_channels == prev_channels,
          at + ": in_channels " + std::to_string(l.in_channels) +
              " does not chain from previous width " +
              std::to_string(prev_channels));
    check(l.activation == "relu" || l.activation == "none",
          at + ": unknown activation '" + l.activation + "'");
    check(l.post_pool == "none" || l.post_pool == "avg2",
          at + ": unknown post_pool '" + l.post_pool + "'");

    shape.channels = l.out_channels;
    shape.height = conv_out_extent(shape.height, l.kernel_h, l.stride, l.padding);
    shape.width = conv_out_extent(shape.width, l.kernel_w, l.stride, l.padding);
    check(shape.height >= 1 && shape.width >= 1,
          at + ": feature map collapses below 1x1");
    if (l.residual_from) {
      check(*l.residual_from >= 0 && *l.residual_from < l.layer_id,
            at + ": residual_from must name an earlier layer");
      const FeatureShape& src = block_shapes[*l.residual_from];
      check(src.channels == shape.channels && src.height == shape.height &&
                src.width == shape.width,
            at + ": residual source shape differs");
    }
    if (l.post_pool == "avg2") {
      check(shape.height % 2 == 0 && shape.width % 2 == 0,
            at + ": avg2 pooling needs even spatial dims");
      shape.height /= 2;
      shape.width /= 2;
    }
    block_shapes.push_back(shape);
    prev_channels = l.out_channels;
  }

  std::set<int> bn_layers;
  for (const auto& site : bn_sites) {
    check(site.layer_id >= 0 &&
              site.layer_id < static_cast<int>(layers.size()),
          "bn site references unknown layer " + std::to_string(site.layer_id));
    check(bn_layers.insert(site.layer_id).second,
          "duplicate bn site for layer " + std::to_string(site.layer_id));
    check(site.num_features == layers[site.layer_id].out_channels,
          "bn site on layer " + std::to_string(site.layer_id) +
              " has num_features " + std::to_string(site.num_features) +
              ", expected " +
              std::to_string(layers[site.layer_id].out_channels));
  }

  check(head_in_features == layers.back().out_channels,
        "head_in_features " + std::to_string(head_in_features) +
            " must equal the final layer width " +
            std::to_string(layers.back().out_channels));
}

std::int64_t per_filter_params(const ConvLayerSpec& layer) {
  const std::int64_t weights = static_cast<std::int64_t>(
      layer.in_channels / layer.groups) * layer.kernel_h * layer.kernel_w;
  return weights + (layer.has_bias ? 1 : 0);
}

std::int64_t layer_total_params(const ConvLayerSpec& layer) {
  return static_cast<std::int64_t>(layer.out_channels) *
         per_filter_params(layer);
}

std::int64_t count_conv_params(const ArchitectureSpec& arch) {
  std::int64_t total = 0;
  for (const auto& layer : arch.layers) total += layer_total_params(layer);
  return total;
}

std::int64_t bn_params_per_domain(const ArchitectureSpec& arch) {
  std::int64_t total = 0;
  for (const auto& site : arch.bn_sites) total += 2 * site.num_features;
  return total;
}

std::int64_t head_params(const ArchitectureSpec& arch, const HeadSpec& head) {
  if (head.num_classes < 2)
    throw SpecError("head '" + head.domain_id + "': num_classes must be >= 2");
  return static_cast<std::int64_t>(arch.head_in_features) * head.num_classes +
         head.num_classes;
}

std::int64_t total_model_params(const ArchitectureSpec& arch,
                                const planner::SharingPlan& plan,
                                std::span<const HeadSpec> heads) {
  if (heads.empty()) throw SpecError("total_model_params: no heads given");
  if (plan.arch_name != arch.name)
    throw SpecError("plan was built for architecture '" + plan.arch_name +
                    "', not '" + arch.name + "'");
  const std::int64_t specific = planner::plan_param_count(plan, arch);
  const std::int64_t shared = count_conv_params(arch) - specific;
  std::int64_t total = shared;
  for (const auto& head : heads) {
    total += specific + bn_params_per_domain(arch) + head_params(arch, head);
  }
  return total;
}

namespace {

json layer_to_json(const ConvLayerSpec& l) {
  json j{{"id", l.layer_id},
         {"in_channels", l.in_channels},
         {"out_channels", l.out_channels},
         {"kernel", {l.kernel_h, l.kernel_w}},
         {"groups", l.groups},
         {"bias", l.has_bias},
         {"stride", l.stride},
         {"padding", l.padding},
         {"activation", l.activation},
         {"post_pool", l.post_pool}};
  if (l.residual_from) j["residual_from"] = *l.residual_from;
  return j;
}

ConvLayerSpec layer_from_json(const json& j) {
  ConvLayerSpec l;
  l.layer_id = j.at("id").get<int>();
  l.in_channels = j.at("in_channels").get<int>();
  l.out_channels = j.at("out_channels").get<int>();
  const auto& k = j.at("kernel");
  if (!k.is_array() || k.size() != 2)
    throw SpecError("layer kernel must be [h, w]");
  l.kernel_h = k[0].get<int>();
  l.kernel_w = k[1].get<int>();
  l.groups = j.value("groups", 1);
  l.has_bias = j.value("bias", false);
  l.stride = j.value("stride", 1);
  l.padding = j.value("padding", 0);
  l.activation = j.value("activation", "relu");
  l.post_pool = j.value("post_pool", "none");
  if (j.contains("residual_from") && !j["residual_from"].is_null())
    l.residual_from = j["residual_from"].get<int>();
  return l;
}

}  // namespace

ArchitectureSpec arch_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SpecError(std::string("architecture file is not valid JSON: ") +
                    e.what());
  }
  try {
    if (!j.contains("schema_version"))
      throw SpecError("architecture file is missing schema_version");
    if (j["schema_version"].get<int>() != kSchemaVersion)
      throw SpecError("unsupported architecture schema_version " +
                      j["schema_version"].dump());
    ArchitectureSpec arch;
    arch.name = j.at("name").get<std::string>();
    const auto& in = j.at("input");
    arch.input = {in.at("channels").get<int>(), in.at("height").get<int>(),
                  in.at("width").get<int>()};
    for (const auto& lj : j.at("layers"))
      arch.layers.push_back(layer_from_json(lj));
    if (j.contains("bn_sites")) {
      for (const auto& bj : j["bn_sites"]) {
        arch.bn_sites.push_back(
            {bj.at("layer").get<int>(), bj.at("num_features").get<int>()});
      }
    }
    arch.head_in_features = j.at("head_in_features").get<int>();
    arch.validate();
    return arch;
  } catch (const json::exception& e) {
    throw SpecError(std::string("bad architecture document: ") + e.what());
  }
}

std::string arch_to_json_text(const ArchitectureSpec& arch) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["name"] = arch.name;
  j["input"] = {{"channels", arch.input.channels},
                {"height", arch.input.height},
                {"width", arch.input.width}};
  j["layers"] = json::array();
  for (const auto& l : arch.layers) j["layers"].push_back(layer_to_json(l));
  j["bn_sites"] = json::array();
  for (const auto& site : arch.bn_sites) {
    j["bn_sites"].push_back(
        {{"layer", site.layer_id}, {"num_features", site.num_features}});
  }
  j["head_in_features"] = arch.head_in_features;
  return j.dump(2) + "\n";
}

ArchitectureSpec load_arch(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open architecture file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return arch_from_json_text(ss.str());
}

void save_arch(const ArchitectureSpec& arch,
               const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write architecture file: " + path.string());
  out << arch_to_json_text(arch);
}

}  // namespace mdl::archspec
