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

#include "mdl/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mdl/evaluate.hpp"
#include "mdl/kernels.hpp"
#include "mdl/ops.hpp"

namespace mdl::trainer {

double LrSchedule::lr_at(int step, double base) const {
  if (type == "constant") return base;
  return base * std::pow(gamma, step / step_size);
}

void LrSchedule::validate() const {
  if (type == "constant") return;
  if (type == "step") {
    if (step_size < 1)
      throw ConfigError("lr schedule: step_size must be >= 1");
    if (gamma <= 0.0) throw ConfigError("lr schedule: gamma must be > 0");
    return;
  }
  throw ConfigError("lr schedule: unknown type '" + type + "'");
}

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("trainer: steps must be >= 1");
  if (batch_size < 1) throw ConfigError("trainer: batch_size must be >= 1");
  if (optimizer != "sgd_momentum")
    throw ConfigError("trainer: unknown optimizer '" + optimizer + "'");
  if (lr <= 0.0) throw ConfigError("trainer: lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("trainer: momentum must be in [0, 1)");
  if (weight_decay < 0.0)
    throw ConfigError("trainer: weight_decay must be >= 0");
  if (eval_every < 0) throw ConfigError("trainer: eval_every must be >= 0");
  schedule.validate();
}

void MetricsHistory::append(int step, std::string domain_id, std::string split,
                            std::string metric, double value) {
  rows.push_back({step, std::move(domain_id), std::move(split),
                  std::move(metric), value});
}

void MetricsHistory::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics file: " + path.string());
  out << "step,domain_id,split,metric,value\n";
  for (const MetricRow& row : rows) {
    out << row.step << ',' << row.domain_id << ',' << row.split << ','
        << row.metric << ',' << format_double(row.value) << '\n';
  }
}

MetricsHistory MetricsHistory::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file: " + path.string());
  MetricsHistory history;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    MetricRow row;
    std::string field;
    std::getline(ss, field, ',');
    row.step = std::stoi(field);
    std::getline(ss, row.domain_id, ',');
    std::getline(ss, row.split, ',');
    std::getline(ss, row.metric, ',');
    std::getline(ss, field, ',');
    row.value = std::stod(field);
    history.rows.push_back(std::move(row));
  }
  return history;
}

std::string MetricsHistory::digest() const {
  std::uint64_t h = kFnvOffset;
  for (const MetricRow& row : rows) {
    h = fnv1a64(std::to_string(row.step), h);
    h = fnv1a64(row.domain_id, h);
    h = fnv1a64(row.split, h);
    h = fnv1a64(row.metric, h);
    h = fnv1a64(format_double(row.value), h);
  }
  return to_hex(h);
}

void initialize(mdnet::MultiDomainModel& model, const InitSpec& init) {
  model.default_init(init.seed);
  if (init.backbone_weights)
    model.load_shared_weights(*init.backbone_weights);
  for (const auto& [domain_id, path] : init.head_weights)
    model.load_head_weights(domain_id, path);
  model.reset_bn();
  model.copy_shared_to_specific();
  model.zero_momentum();
}

namespace {

void check_dataset_coverage(
    const mdnet::MultiDomainModel& model,
    const std::vector<const bench::DomainDataset*>& datasets) {
  if (datasets.size() != model.domain_ids().size())
    throw ConfigError("train: got " + std::to_string(datasets.size()) +
                      " datasets for " +
                      std::to_string(model.domain_ids().size()) + " domains");
  for (const bench::DomainDataset* ds : datasets) {
    const auto& dom = model.overlay(ds->domain_id());
    if (dom.head_spec.num_classes != ds->num_classes())
      throw ConfigError("train: dataset '" + ds->domain_id() + "' has " +
                        std::to_string(ds->num_classes()) +
                        " classes but the head expects " +
                        std::to_string(dom.head_spec.num_classes));
    if (ds->train_count() == 0)
      throw ConfigError("train: dataset '" + ds->domain_id() +
                        "' has an empty train split");
    if (ds->channels() != model.arch().input.channels ||
        ds->height() != model.arch().input.height ||
        ds->width() != model.arch().input.width)
      throw ConfigError("train: dataset '" + ds->domain_id() +
                        "' image shape does not match the architecture input");
  }
}

}  // namespace

TrainResult train_joint(
    mdnet::MultiDomainModel& model,
    const std::vector<const bench::DomainDataset*>& datasets,
    const TrainConfig& cfg) {
  cfg.validate();
  check_dataset_coverage(model, datasets);

  // Fixed round-robin order = the model's domain order; per-domain batch
  // streams depend only on (seed, domain), not on the interleaving.
  std::map<std::string, const bench::DomainDataset*> by_id;
  for (const bench::DomainDataset* ds : datasets) by_id[ds->domain_id()] = ds;
  std::vector<const bench::DomainDataset*> ordered;
  std::vector<bench::DomainDataset::BatchStream> streams;
  for (const std::string& domain_id : model.domain_ids()) {
    auto it = by_id.find(domain_id);
    if (it == by_id.end())
      throw ConfigError("train: no dataset for domain '" + domain_id + "'");
    ordered.push_back(it->second);
    streams.push_back(it->second->train_stream(cfg.seed, cfg.batch_size));
  }

  TrainResult result;
  Tensor batch;
  std::vector<int> labels;

  for (int step = 0; step < cfg.steps; ++step) {
    const double lr = cfg.schedule.lr_at(step, cfg.lr);
    for (std::size_t d = 0; d < ordered.size(); ++d) {
      const std::string& domain_id = model.domain_ids()[d];
      streams[d].next(batch, labels);

      mdnet::Tape tape;
      const Tensor logits = model.forward_train(domain_id, batch, tape);
      Tensor dlogits(logits.shape());
      const float loss = ops::softmax_xent(logits, labels, dlogits);

      if (!std::isfinite(loss)) {
        if (cfg.dump_dir) {
          std::filesystem::create_directories(*cfg.dump_dir);
          model.save_checkpoint(*cfg.dump_dir / "diverged.mdck");
          result.history.save(*cfg.dump_dir / "diverged_metrics.csv");
        }
        throw TrainError("training diverged: non-finite loss on domain '" +
                         domain_id + "' at step " + std::to_string(step) +
                         (cfg.dump_dir
                              ? " (state dumped to " + cfg.dump_dir->string() +
                                    ")"
                              : ""));
      }
      result.history.append(step, domain_id, "train", "loss", loss);

      model.zero_grads(domain_id);
      model.backward(tape, dlogits);
      for (mdnet::ParamRef& ref : model.trainable_params(domain_id)) {
        kernels::sgd_update(
            ref.value.data(), ref.grad.data(), ref.momentum.data(),
            ref.value.size(), static_cast<float>(lr),
            static_cast<float>(cfg.momentum),
            ref.decay ? static_cast<float>(cfg.weight_decay) : 0.0f);
      }
    }

    const bool last = step + 1 == cfg.steps;
    if (last || (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0)) {
      const auto accuracy = bench::evaluate(model, ordered);
      for (const auto& [domain_id, acc] : accuracy)
        result.history.append(step, domain_id, "val", "accuracy", acc);
      if (last) result.final_val_accuracy = accuracy;
    }
  }
  return result;
}

}  // namespace mdl::trainer
