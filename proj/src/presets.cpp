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

#include "mdl/presets.hpp"

namespace mdl::archspec::presets {

namespace {

ConvLayerSpec conv(int id, int in, int out, int k, int stride, int pad,
                   int groups = 1, bool bias = false,
                   const std::string& act = "relu") {
  ConvLayerSpec l;
  l.layer_id = id;
  l.in_channels = in;
  l.out_channels = out;
  l.kernel_h = k;
  l.kernel_w = k;
  l.stride = stride;
  l.padding = pad;
  l.groups = groups;
  l.has_bias = bias;
  l.activation = act;
  return l;
}

}  // namespace

ArchitectureSpec toy_t() {
  ArchitectureSpec arch;
  arch.name = "toy_t";
  arch.input = {1, 8, 8};
  arch.layers = {
      conv(0, 1, 2, 3, 1, 1),
      conv(1, 2, 4, 3, 1, 1),
      conv(2, 4, 4, 1, 1, 0),
  };
  arch.bn_sites = {{2, 4}};
  arch.head_in_features = 4;
  arch.validate();
  return arch;
}

ArchitectureSpec desk8() {
  ArchitectureSpec arch;
  arch.name = "desk8";
  arch.input = {3, 16, 16};
  arch.layers = {
      conv(0, 3, 16, 3, 1, 1),
      conv(1, 16, 16, 3, 2, 1),
      conv(2, 16, 32, 3, 2, 1),
      conv(3, 32, 32, 3, 1, 1, /*groups=*/32),  // depthwise
      conv(4, 32, 64, 1, 1, 0),
  };
  arch.bn_sites = {{0, 16}, {1, 16}, {2, 32}, {3, 32}, {4, 64}};
  arch.head_in_features = 64;
  arch.validate();
  return arch;
}

ArchitectureSpec mobilenet_v2_like() {
  ArchitectureSpec arch;
  arch.name = "mobilenet_v2_like";
  arch.input = {3, 224, 224};

  int id = 0;
  int channels = 32;
  auto add = [&](ConvLayerSpec l) {
    arch.bn_sites.push_back({l.layer_id, l.out_channels});
    arch.layers.push_back(std::move(l));
  };

  add(conv(id++, 3, 32, 3, 2, 1));

  // Inverted residual stacks as (expansion, out_channels, repeats, stride).
  struct Block { int t, c, n, s; };
  const Block blocks[] = {{1, 16, 1, 1},  {6, 24, 2, 2},  {6, 32, 3, 2},
                          {6, 64, 4, 2},  {6, 96, 3, 1},  {6, 160, 3, 2},
                          {6, 320, 1, 1}};
  for (const Block& b : blocks) {
    for (int rep = 0; rep < b.n; ++rep) {
      const int stride = rep == 0 ? b.s : 1;
      const int in = channels;
      const int expanded = in * b.t;
      int project_id;
      if (b.t != 1) {
        add(conv(id++, in, expanded, 1, 1, 0));
      }
      add(conv(id++, expanded, expanded, 3, stride, 1, /*groups=*/expanded));
      // Projection is linear; repeats keep the residual shape.
      ConvLayerSpec project =
          conv(id++, expanded, b.c, 1, 1, 0, 1, false, "none");
      project_id = project.layer_id;
      if (rep > 0) {
        // Skip from the previous block's projection output.
        project.residual_from = project_id - (b.t != 1 ? 3 : 2);
      }
      add(std::move(project));
      channels = b.c;
    }
  }

  add(conv(id++, channels, 1280, 1, 1, 0));
  arch.head_in_features = 1280;
  arch.validate();
  return arch;
}

}  // namespace mdl::archspec::presets
