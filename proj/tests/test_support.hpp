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

// Test-only helpers: a random architecture generator and brute-force
// oracles that instantiate real tensors instead of using the accounting
// formulas. These deliberately avoid the library's counting/forward code
// paths so they can act as independent checks.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdl/archspec.hpp"
#include "mdl/rng.hpp"
#include "mdl/tensor.hpp"

namespace mdltest {

using mdl::Rng;
using mdl::Tensor;
namespace as = mdl::archspec;

// Random small architecture: 1-6 layers, mixed kernel sizes, occasional
// depthwise/grouped layers, biases, bn sites, strides and padding.
inline as::ArchitectureSpec random_arch(Rng& rng, std::uint64_t tag) {
  as::ArchitectureSpec arch;
  arch.name = "rand_" + std::to_string(tag);
  const int num_layers = 1 + static_cast<int>(rng.next_below(6));
  int channels = 1 + static_cast<int>(rng.next_below(4));
  int extent = 7 + static_cast<int>(rng.next_below(6));  // 7..12
  arch.input = {channels, extent, extent};

  int height = extent, width = extent;
  for (int i = 0; i < num_layers; ++i) {
    as::ConvLayerSpec l;
    l.layer_id = i;
    l.in_channels = channels;
    l.kernel_h = 1 + static_cast<int>(rng.next_below(3));
    l.kernel_w = 1 + static_cast<int>(rng.next_below(3));
    l.padding = static_cast<int>(rng.next_below(2));
    l.has_bias = rng.next_below(2) == 0;
    l.activation = rng.next_below(4) == 0 ? "none" : "relu";

    // Stride 2 only while the map stays comfortably larger than the kernel.
    const int min_extent = std::min(height, width);
    l.stride = (min_extent >= 6 && rng.next_below(3) == 0) ? 2 : 1;

    if (channels > 1 && rng.next_below(4) == 0) {
      // Depthwise: out == in == groups.
      l.groups = channels;
      l.out_channels = channels;
    } else {
      l.groups = 1;
      l.out_channels = 1 + static_cast<int>(rng.next_below(12));
      if (channels % 2 == 0 && l.out_channels % 2 == 0 &&
          rng.next_below(5) == 0) {
        l.groups = 2;
      }
    }

    int oh = as::conv_out_extent(height, l.kernel_h, l.stride, l.padding);
    int ow = as::conv_out_extent(width, l.kernel_w, l.stride, l.padding);
    if (oh < 1 || ow < 1) {
      // Rescue with padding; with kernel <= 3 this always fits.
      l.padding = 1;
      l.stride = 1;
      oh = as::conv_out_extent(height, l.kernel_h, 1, 1);
      ow = as::conv_out_extent(width, l.kernel_w, 1, 1);
    }
    height = oh;
    width = ow;

    if (height % 2 == 0 && width % 2 == 0 && height >= 4 &&
        rng.next_below(5) == 0) {
      l.post_pool = "avg2";
      height /= 2;
      width /= 2;
    }

    if (rng.next_below(2) == 0)
      arch.bn_sites.push_back({i, l.out_channels});

    channels = l.out_channels;
    arch.layers.push_back(l);
  }
  arch.head_in_features = channels;
  arch.validate();
  return arch;
}

// Element count of actually instantiated conv weight and bias tensors.
inline std::int64_t brute_force_conv_elements(const as::ArchitectureSpec& arch) {
  std::int64_t total = 0;
  for (const auto& l : arch.layers) {
    Tensor w({static_cast<std::size_t>(l.out_channels),
              static_cast<std::size_t>(l.in_channels / l.groups),
              static_cast<std::size_t>(l.kernel_h),
              static_cast<std::size_t>(l.kernel_w)});
    total += static_cast<std::int64_t>(w.numel());
    if (l.has_bias) {
      Tensor b({static_cast<std::size_t>(l.out_channels)});
      total += static_cast<std::int64_t>(b.numel());
    }
  }
  return total;
}

inline bool close(float a, float b, float rtol, float atol) {
  return std::abs(a - b) <= rtol * std::max(std::abs(a), std::abs(b)) + atol;
}

inline float max_rel_diff(std::span<const float> a, std::span<const float> b) {
  float worst = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const float denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-6f});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

inline bool all_close(std::span<const float> a, std::span<const float> b,
                      float rtol = 1e-6f, float atol = 1e-6f) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!close(a[i], b[i], rtol, atol)) return false;
  return true;
}

}  // namespace mdltest
