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

#include "mdl/archspec.hpp"

namespace mdl::archspec::presets {

// Three-layer toy backbone (1->2->4->4 channels, 106 conv parameters);
// small enough that plan boundaries can be checked by hand.
ArchitectureSpec toy_t();

// Five-layer desk-scale training backbone for 3x16x16 inputs, including a
// depthwise stage so per-filter costs vary across layers.
ArchitectureSpec desk8();

// Full-size inverted-residual descriptor (expand/depthwise/project stacks,
// 224x224 input). Used for parameter accounting only; nothing desk-scale
// ever trains it.
ArchitectureSpec mobilenet_v2_like();

}  // namespace mdl::archspec::presets
