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
#include <optional>
#include <string>
#include <vector>

#include "mdl/dataset.hpp"
#include "mdl/model.hpp"

namespace mdl::trainer {

struct LrSchedule {
  std::string type = "constant";  // "constant" | "step"
  int step_size = 0;
  double gamma = 1.0;

  double lr_at(int step, double base) const;
  void validate() const;
};

// Joint-training configuration. `steps` counts optimizer steps per domain;
// one round-robin sweep performs one step for every domain in a fixed
// order, so a domain sees the same batch sequence whether it is trained
// jointly or on its own.
struct TrainConfig {
  int steps = 200;
  int batch_size = 32;
  std::string optimizer = "sgd_momentum";
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  LrSchedule schedule;
  std::uint64_t seed = 1;
  int eval_every = 0;  // 0: evaluate only after the last step
  // When set, a divergence abort dumps the model state here.
  std::optional<std::filesystem::path> dump_dir;

  void validate() const;
};

// Initialization protocol: external weight files when given, otherwise the
// seeded deterministic scheme. Domain-specific filters are always copied
// from the post-initialization shared filters; BN starts as the identity.
struct InitSpec {
  std::optional<std::filesystem::path> backbone_weights;
  std::map<std::string, std::filesystem::path> head_weights;
  std::uint64_t seed = 1;
};

struct MetricRow {
  int step;
  std::string domain_id;
  std::string split;   // "train" | "val"
  std::string metric;  // "loss" | "accuracy" | "lr"
  double value;
};

// Append-only metric log; one row per (step, domain, split, metric).
struct MetricsHistory {
  std::vector<MetricRow> rows;

  void append(int step, std::string domain_id, std::string split,
              std::string metric, double value);
  void save(const std::filesystem::path& path) const;
  static MetricsHistory load(const std::filesystem::path& path);
  std::string digest() const;
};

struct TrainResult {
  MetricsHistory history;
  std::map<std::string, double> final_val_accuracy;
};

void initialize(mdnet::MultiDomainModel& model, const InitSpec& init);

// Round-robin joint training: one cross-entropy step per domain per sweep,
// with the update restricted to trainable_params(model, domain). Throws
// TrainError on a non-finite loss after dumping state to cfg.dump_dir.
TrainResult train_joint(
    mdnet::MultiDomainModel& model,
    const std::vector<const bench::DomainDataset*>& datasets,
    const TrainConfig& cfg);

}  // namespace mdl::trainer
