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

#include <map>
#include <string>
#include <vector>

#include "mdl/dataset.hpp"
#include "mdl/model.hpp"

namespace mdl::bench {

// Top-1 validation accuracy per domain, BN in frozen-statistics mode.
// Datasets must cover exactly the model's domains.
std::map<std::string, double> evaluate(
    const mdnet::MultiDomainModel& model,
    const std::vector<const DomainDataset*>& datasets);

double evaluate_domain(const mdnet::MultiDomainModel& model,
                       const DomainDataset& dataset);

}  // namespace mdl::bench
