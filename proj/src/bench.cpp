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

#include "mdl/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "mdl/config_json.hpp"
#include "mdl/evaluate.hpp"
#include "mdl/rng.hpp"

namespace mdl::bench {

using nlohmann::json;

namespace {
constexpr int kSchemaVersion = 1;

std::filesystem::path resolve_data_path(const std::filesystem::path& path) {
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("MDSHARE_DATA_DIR"))
    return std::filesystem::path(root) / path;
  return path;
}
}  // namespace

DomainDataset DomainConfig::load() const {
  if (synthetic) return DomainDataset::synthetic(domain_id, *synthetic);
  if (file) return DomainDataset::from_file(domain_id, resolve_data_path(*file));
  throw ConfigError("domain '" + domain_id +
                    "' has neither a synthetic spec nor a file");
}

SyntheticSpec synthetic_from_json(const json& j) {
  try {
    SyntheticSpec spec;
    spec.num_classes = j.at("num_classes").get<int>();
    spec.channels = j.value("channels", spec.channels);
    spec.height = j.value("height", spec.height);
    spec.width = j.value("width", spec.width);
    spec.train_count = j.value("train_count", spec.train_count);
    spec.val_count = j.value("val_count", spec.val_count);
    spec.noise = j.value("noise", spec.noise);
    spec.seed = j.value("seed", spec.seed);
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad synthetic spec: ") + e.what());
  }
}

json synthetic_to_json(const SyntheticSpec& spec) {
  return json{{"num_classes", spec.num_classes}, {"channels", spec.channels},
              {"height", spec.height},           {"width", spec.width},
              {"train_count", spec.train_count}, {"val_count", spec.val_count},
              {"noise", spec.noise},             {"seed", spec.seed}};
}

DomainConfig domain_from_json(const json& j) {
  try {
    DomainConfig config;
    config.domain_id = j.at("domain_id").get<std::string>();
    if (j.contains("synthetic"))
      config.synthetic = synthetic_from_json(j["synthetic"]);
    if (j.contains("file"))
      config.file = j["file"].get<std::string>();
    if (!config.synthetic && !config.file)
      throw ConfigError("domain '" + config.domain_id +
                        "' needs a 'synthetic' spec or a 'file'");
    if (config.synthetic && config.file)
      throw ConfigError("domain '" + config.domain_id +
                        "' has both 'synthetic' and 'file'");
    return config;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad domain config: ") + e.what());
  }
}

json domain_to_json(const DomainConfig& config) {
  json j{{"domain_id", config.domain_id}};
  if (config.synthetic) j["synthetic"] = synthetic_to_json(*config.synthetic);
  if (config.file) j["file"] = config.file->string();
  return j;
}

void ExperimentConfig::validate() const {
  if (architectures.empty())
    throw ConfigError("experiment: no architectures listed");
  if (strategies.empty()) throw ConfigError("experiment: no strategies listed");
  if (fractions.empty()) throw ConfigError("experiment: no fractions listed");
  for (double f : fractions)
    if (!(f >= 0.0 && f <= 1.0))
      throw ConfigError("experiment: fraction " + format_double(f) +
                        " outside [0, 1]");
  if (seeds.empty()) throw ConfigError("experiment: no seeds listed");
  if (domains.empty()) throw ConfigError("experiment: no domains listed");
  for (int count : domain_counts)
    if (count < 1 || count > static_cast<int>(domains.size()))
      throw ConfigError("experiment: domain_count " + std::to_string(count) +
                        " outside 1.." + std::to_string(domains.size()));
  if (workers < 1) throw ConfigError("experiment: workers must be >= 1");
  train.validate();
}

std::string ExperimentConfig::digest() const {
  return to_hex(fnv1a64(experiment_to_json_text(*this)));
}

ExperimentConfig experiment_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config is not valid JSON: ") +
                      e.what());
  }
  try {
    if (!j.contains("schema_version"))
      throw ConfigError("experiment config is missing schema_version");
    if (j["schema_version"].get<int>() != kSchemaVersion)
      throw ConfigError("unsupported experiment schema_version " +
                        j["schema_version"].dump());
    ExperimentConfig config;
    for (const auto& p : j.at("architectures"))
      config.architectures.emplace_back(p.get<std::string>());
    for (const auto& s : j.at("strategies"))
      config.strategies.push_back(
          planner::strategy_from_string(s.get<std::string>()));
    for (const auto& f : j.at("fractions"))
      config.fractions.push_back(f.get<double>());
    if (j.contains("seeds")) {
      config.seeds.clear();
      for (const auto& s : j["seeds"])
        config.seeds.push_back(s.get<std::uint64_t>());
    }
    for (const auto& d : j.at("domains"))
      config.domains.push_back(domain_from_json(d));
    if (j.contains("domain_counts"))
      for (const auto& c : j["domain_counts"])
        config.domain_counts.push_back(c.get<int>());
    config.train = trainer::train_config_from_json(j.at("trainer"));
    config.workers = j.value("workers", 1);
    config.validate();
    return config;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad experiment config: ") + e.what());
  }
}

std::string experiment_to_json_text(const ExperimentConfig& config) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["architectures"] = json::array();
  for (const auto& p : config.architectures)
    j["architectures"].push_back(p.string());
  j["strategies"] = json::array();
  for (auto s : config.strategies)
    j["strategies"].push_back(planner::to_string(s));
  j["fractions"] = config.fractions;
  j["seeds"] = config.seeds;
  j["domains"] = json::array();
  for (const auto& d : config.domains) j["domains"].push_back(domain_to_json(d));
  j["domain_counts"] = config.domain_counts;
  j["trainer"] = trainer::train_config_to_json(config.train);
  j["workers"] = config.workers;
  return j.dump(2) + "\n";
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open experiment config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return experiment_from_json_text(ss.str());
}

// --- results table -------------------------------------------------------

void ResultsTable::canonical_sort() {
  std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.architecture, a.num_domains, a.strategy, a.fraction,
                    a.seed, a.domain_id) <
           std::tie(b.architecture, b.num_domains, b.strategy, b.fraction,
                    b.seed, b.domain_id);
  });
}

std::string ResultsTable::to_csv() const {
  std::string out =
      "architecture,strategy,fraction,seed,num_domains,domain,"
      "val_accuracy,params_total,params_specific\n";
  for (const ResultRow& row : rows) {
    out += row.architecture + ',' + row.strategy + ',' +
           format_double(row.fraction) + ',' + std::to_string(row.seed) + ',' +
           std::to_string(row.num_domains) + ',' + row.domain_id + ',' +
           format_double(row.val_accuracy) + ',' +
           std::to_string(row.params_total) + ',' +
           std::to_string(row.params_specific) + '\n';
  }
  return out;
}

ResultsTable ResultsTable::from_csv(const std::string& text) {
  std::stringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw SpecError("results table: empty document");
  const std::string expected =
      "architecture,strategy,fraction,seed,num_domains,domain,"
      "val_accuracy,params_total,params_specific";
  if (line != expected)
    throw SpecError("results table: unexpected header '" + line + "'");

  ResultsTable table;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> fields;
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 9)
      throw SpecError("results table: bad row '" + line + "'");
    ResultRow row;
    row.architecture = fields[0];
    row.strategy = fields[1];
    row.fraction = std::stod(fields[2]);
    row.seed = std::stoull(fields[3]);
    row.num_domains = std::stoi(fields[4]);
    row.domain_id = fields[5];
    row.val_accuracy = std::stod(fields[6]);
    row.params_total = std::stoll(fields[7]);
    row.params_specific = std::stoll(fields[8]);
    if (row.val_accuracy < 0.0 || row.val_accuracy > 1.0)
      throw SpecError("results table: accuracy outside [0, 1] in '" + line +
                      "'");
    table.rows.push_back(std::move(row));
  }
  return table;
}

void ResultsTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write results table: " + path.string());
  out << to_csv();
}

ResultsTable ResultsTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open results table: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_csv(ss.str());
}

// --- matrix execution ----------------------------------------------------

namespace {

struct Cell {
  std::size_t arch_index;
  int num_domains;
  planner::Strategy strategy;
  double fraction;
  std::uint64_t seed;

  std::string id(const ExperimentConfig& config) const {
    return config.architectures[arch_index].stem().string() + "/" +
           std::to_string(num_domains) + "dom/" +
           planner::to_string(strategy) + "/f" + format_double(fraction) +
           "/s" + std::to_string(seed);
  }
};

struct CellOutcome {
  std::vector<ResultRow> rows;
  std::optional<CellFailure> failure;
};

CellOutcome run_cell(const ExperimentConfig& config,
                     const archspec::ArchitectureSpec& arch, const Cell& cell,
                     const std::vector<DomainDataset>& all_datasets) {
  CellOutcome outcome;
  try {
    planner::SharingPlan plan =
        planner::build_plan(arch, cell.strategy, cell.fraction, cell.seed);

    std::vector<archspec::HeadSpec> heads;
    std::vector<const DomainDataset*> datasets;
    for (int d = 0; d < cell.num_domains; ++d) {
      datasets.push_back(&all_datasets[d]);
      heads.push_back(
          {all_datasets[d].domain_id(), all_datasets[d].num_classes()});
    }

    // Initialization depends only on (trainer seed, arch, domain set) so
    // every strategy/fraction cell starts from identical weights.
    const std::uint64_t init_seed =
        mix_seed(config.train.seed,
                 "init/" + arch.name + "/" + std::to_string(cell.num_domains));
    auto model = mdnet::MultiDomainModel::assemble(arch, plan, heads, init_seed);

    trainer::TrainConfig cfg = config.train;
    cfg.dump_dir.reset();
    const trainer::TrainResult trained =
        trainer::train_joint(model, datasets, cfg);

    const std::int64_t total =
        archspec::total_model_params(arch, plan, heads);
    for (const auto& [domain_id, accuracy] : trained.final_val_accuracy) {
      ResultRow row;
      row.architecture = arch.name;
      row.strategy = planner::to_string(cell.strategy);
      row.fraction = cell.fraction;
      row.seed = cell.seed;
      row.num_domains = cell.num_domains;
      row.domain_id = domain_id;
      row.val_accuracy = accuracy;
      row.params_total = total;
      row.params_specific = plan.achieved_params;
      outcome.rows.push_back(std::move(row));
    }
  } catch (const std::exception& e) {
    outcome.failure = CellFailure{cell.id(config), e.what()};
  }
  return outcome;
}

}  // namespace

MatrixResult run_matrix(const ExperimentConfig& config, const LogFn& log) {
  config.validate();

  std::vector<archspec::ArchitectureSpec> archs;
  for (const auto& path : config.architectures)
    archs.push_back(archspec::load_arch(path));

  std::vector<DomainDataset> datasets;
  for (const DomainConfig& domain : config.domains)
    datasets.push_back(domain.load());

  std::vector<int> counts = config.domain_counts;
  if (counts.empty()) counts = {static_cast<int>(config.domains.size())};

  std::vector<Cell> cells;
  for (std::size_t a = 0; a < archs.size(); ++a) {
    for (int count : counts) {
      for (planner::Strategy strategy : config.strategies) {
        for (double fraction : config.fractions) {
          // Plans for the deterministic strategies do not depend on a seed;
          // only the random strategy sweeps them.
          const std::size_t seed_count =
              strategy == planner::Strategy::kRandom ? config.seeds.size() : 1;
          for (std::size_t s = 0; s < seed_count; ++s)
            cells.push_back({a, count, strategy, fraction, config.seeds[s]});
        }
      }
    }
  }

  std::vector<CellOutcome> outcomes(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      if (log) {
        std::lock_guard<std::mutex> lock(log_mutex);
        log("cell " + std::to_string(i + 1) + "/" +
            std::to_string(cells.size()) + ": " + cells[i].id(config));
      }
      outcomes[i] =
          run_cell(config, archs[cells[i].arch_index], cells[i], datasets);
    }
  };

  const int worker_count =
      std::min<int>(config.workers, static_cast<int>(cells.size()));
  if (worker_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < worker_count; ++t) threads.emplace_back(worker);
    for (auto& thread : threads) thread.join();
  }

  MatrixResult result;
  for (CellOutcome& outcome : outcomes) {
    if (outcome.failure) {
      result.failures.push_back(std::move(*outcome.failure));
    } else {
      for (ResultRow& row : outcome.rows)
        result.table.rows.push_back(std::move(row));
    }
  }
  result.table.canonical_sort();
  return result;
}

}  // namespace mdl::bench

// --- trainer config JSON ---------------------------------------------------

namespace mdl::trainer {

using nlohmann::json;

TrainConfig train_config_from_json(const json& j) {
  try {
    TrainConfig cfg;
    cfg.steps = j.value("steps", cfg.steps);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.optimizer = j.value("optimizer", cfg.optimizer);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    if (j.contains("schedule")) {
      const auto& s = j["schedule"];
      cfg.schedule.type = s.value("type", cfg.schedule.type);
      cfg.schedule.step_size = s.value("step_size", cfg.schedule.step_size);
      cfg.schedule.gamma = s.value("gamma", cfg.schedule.gamma);
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.eval_every = j.value("eval_every", cfg.eval_every);
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad trainer config: ") + e.what());
  }
}

json train_config_to_json(const TrainConfig& cfg) {
  return json{{"steps", cfg.steps},
              {"batch_size", cfg.batch_size},
              {"optimizer", cfg.optimizer},
              {"lr", cfg.lr},
              {"momentum", cfg.momentum},
              {"weight_decay", cfg.weight_decay},
              {"schedule",
               {{"type", cfg.schedule.type},
                {"step_size", cfg.schedule.step_size},
                {"gamma", cfg.schedule.gamma}}},
              {"seed", cfg.seed},
              {"eval_every", cfg.eval_every}};
}

}  // namespace mdl::trainer
