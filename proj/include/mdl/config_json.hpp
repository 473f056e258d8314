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

#include <json.hpp>

#include "mdl/bench.hpp"
#include "mdl/trainer.hpp"

// JSON (de)serializers shared by the experiment config and the CLI's train
// config. Parsing throws ConfigError with the offending field.

namespace mdl::bench {

SyntheticSpec synthetic_from_json(const nlohmann::json& j);
nlohmann::json synthetic_to_json(const SyntheticSpec& spec);
DomainConfig domain_from_json(const nlohmann::json& j);
nlohmann::json domain_to_json(const DomainConfig& config);

}  // namespace mdl::bench

namespace mdl::trainer {

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

}  // namespace mdl::trainer
