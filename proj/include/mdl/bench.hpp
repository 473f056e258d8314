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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mdl/dataset.hpp"
#include "mdl/planner.hpp"
#include "mdl/trainer.hpp"

namespace mdl::bench {

// Domain source: a synthetic generator spec or a dataset file (resolved
// against MDSHARE_DATA_DIR when relative).
struct DomainConfig {
  std::string domain_id;
  std::optional<SyntheticSpec> synthetic;
  std::optional<std::filesystem::path> file;

  DomainDataset load() const;
};

// Declarative experiment matrix: architectures x domain counts x strategies
// x fractions x seeds. Random-strategy cells run once per seed; the
// deterministic strategies ignore extra seeds (their plans do not depend on
// one).
struct ExperimentConfig {
  std::vector<std::filesystem::path> architectures;
  std::vector<planner::Strategy> strategies;
  std::vector<double> fractions;
  std::vector<std::uint64_t> seeds{1};
  std::vector<DomainConfig> domains;
  std::vector<int> domain_counts;  // empty: use all domains
  trainer::TrainConfig train;
  int workers = 1;

  void validate() const;
  std::string digest() const;
};

ExperimentConfig experiment_from_json_text(const std::string& text);
std::string experiment_to_json_text(const ExperimentConfig& config);
ExperimentConfig load_experiment(const std::filesystem::path& path);

// One evaluated (cell, domain) result. `strategy` additionally admits
// "independent" in stored tables for external fixtures; harness-produced
// rows always use the three planner strategies, with fraction 1.0 playing
// the independent reference role.
struct ResultRow {
  std::string architecture;
  std::string strategy;
  double fraction = 0.0;
  std::uint64_t seed = 0;
  int num_domains = 0;
  std::string domain_id;
  double val_accuracy = 0.0;
  std::int64_t params_total = 0;
  std::int64_t params_specific = 0;

  bool operator==(const ResultRow&) const = default;
};

struct ResultsTable {
  std::vector<ResultRow> rows;

  bool operator==(const ResultsTable&) const = default;
  // Deterministic row order regardless of execution interleaving.
  void canonical_sort();
  std::string to_csv() const;
  static ResultsTable from_csv(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static ResultsTable load(const std::filesystem::path& path);
};

struct CellFailure {
  std::string cell_id;
  std::string message;
};

struct MatrixResult {
  ResultsTable table;
  std::vector<CellFailure> failures;
};

using LogFn = std::function<void(const std::string&)>;

// Runs every cell (plan -> assemble -> initialize -> train -> evaluate),
// appending one row per domain. Cell failures are recorded and the matrix
// continues. Cells may run on `workers` threads; rows come out in canonical
// order either way.
MatrixResult run_matrix(const ExperimentConfig& config, const LogFn& log = {});

}  // namespace mdl::bench
