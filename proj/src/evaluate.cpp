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

#include "mdl/evaluate.hpp"

#include <algorithm>
#include <set>

#include "mdl/ops.hpp"

namespace mdl::bench {

double evaluate_domain(const mdnet::MultiDomainModel& model,
                       const DomainDataset& dataset) {
  if (dataset.val_count() == 0)
    throw ConfigError("dataset '" + dataset.domain_id() +
                      "' has an empty val split");
  constexpr std::size_t kEvalBatch = 128;
  std::size_t correct = 0;
  Tensor x;
  std::vector<int> labels;
  for (std::size_t start = 0; start < dataset.val_count();
       start += kEvalBatch) {
    const std::size_t count =
        std::min(kEvalBatch, dataset.val_count() - start);
    dataset.fill_val_batch(start, count, x, labels);
    const Tensor logits = model.forward_eval(dataset.domain_id(), x);
    const std::vector<int> pred = ops::argmax_rows(logits);
    for (std::size_t i = 0; i < count; ++i)
      if (pred[i] == labels[i]) ++correct;
  }
  return static_cast<double>(correct) /
         static_cast<double>(dataset.val_count());
}

std::map<std::string, double> evaluate(
    const mdnet::MultiDomainModel& model,
    const std::vector<const DomainDataset*>& datasets) {
  std::set<std::string> expected(model.domain_ids().begin(),
                                 model.domain_ids().end());
  std::set<std::string> given;
  for (const DomainDataset* ds : datasets) given.insert(ds->domain_id());
  if (expected != given)
    throw ConfigError("evaluate: datasets do not cover the model's domains");

  std::map<std::string, double> accuracy;
  for (const DomainDataset* ds : datasets)
    accuracy[ds->domain_id()] = evaluate_domain(model, *ds);
  return accuracy;
}

}  // namespace mdl::bench
