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

#include <filesystem>
#include <string>
#include <vector>

#include "mdl/bench.hpp"

namespace mdl::bench {

// Strategy-comparison table in the published layout: blocks per
// (architecture, fraction) with one row per strategy, a parameter-count
// column in millions, per-domain accuracy columns, and a best-of-block flag
// column per domain (never set on the independent reference row). Random
// rows aggregate seeds by mean; fraction-1.0 rows (or rows labeled
// "independent") feed one independent reference row per architecture block.
std::string render_strategy_table(const ResultsTable& table);

// Per-fraction mean accuracy difference bottom_specific - top_specific
// across domains. A directional finding, reported but never asserted.
struct DirectionalRow {
  std::string architecture;
  double fraction;
  double mean_gap;
};
std::vector<DirectionalRow> directional_gaps(const ResultsTable& table);
std::string render_directional(const std::vector<DirectionalRow>& rows);

// Accuracy-vs-fraction curve (one line per strategy plus a dashed
// independent reference) as an SVG document.
std::string render_curve_svg(const ResultsTable& table,
                             const std::string& architecture,
                             const std::string& domain_id);

// Writes report_table.csv, directional.csv, and curve_<domain>.svg per
// (architecture, domain). Returns the created paths.
std::vector<std::filesystem::path> emit_report(
    const ResultsTable& table, const std::filesystem::path& out_dir);

}  // namespace mdl::bench
