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

// mdshare: build sharing plans, train multi-domain models, run experiment
// matrices, and render reports.
//
// Exit codes: 0 success, 1 validation error, 2 partial matrix failure,
// 3 runtime failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mdl/archspec.hpp"
#include "mdl/bench.hpp"
#include "mdl/config_json.hpp"
#include "mdl/evaluate.hpp"
#include "mdl/kernels.hpp"
#include "mdl/model.hpp"
#include "mdl/planner.hpp"
#include "mdl/report.hpp"
#include "mdl/rng.hpp"
#include "mdl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitPartial = 2;
constexpr int kExitRuntime = 3;

bool g_verbose = false;

void vlog(const std::string& msg) {
  if (g_verbose) std::cerr << "[mdshare] " << msg << "\n";
}

json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw mdl::IoError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw mdl::ConfigError("config file " + path.string() +
                           " is not valid JSON: " + e.what());
  }
}

// key=value overrides with dotted paths, applied after the file parse and
// before validation. Values parse as JSON when possible, else as strings.
json apply_overrides(json config, const std::vector<std::string>& overrides) {
  for (const std::string& item : overrides) {
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos)
      throw mdl::ConfigError("override '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);

    json* cur = &config;
    std::stringstream path(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(path, part, '.')) parts.push_back(part);
    if (parts.empty())
      throw mdl::ConfigError("override '" + item + "' has an empty key");
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      if (cur->is_array()) {
        const std::size_t index = std::stoul(parts[i]);
        if (index >= cur->size())
          throw mdl::ConfigError("override '" + key +
                                 "': array index out of range");
        cur = &(*cur)[index];
      } else {
        cur = &(*cur)[parts[i]];
      }
    }
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;
    }
    if (cur->is_array()) {
      const std::size_t index = std::stoul(parts.back());
      if (index >= cur->size())
        throw mdl::ConfigError("override '" + key +
                               "': array index out of range");
      (*cur)[index] = parsed;
    } else {
      (*cur)[parts.back()] = parsed;
    }
  }
  return config;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mdl::IoError("cannot write file: " + path.string());
  out << content;
}

json run_manifest(const std::string& command, const json& config,
                  std::vector<std::string> outputs) {
  json manifest;
  manifest["schema_version"] = 1;
  manifest["command"] = command;
  manifest["config"] = config;
  manifest["config_digest"] = mdl::to_hex(mdl::fnv1a64(config.dump()));
  manifest["kernel_backend"] = mdl::kernels::active_backend_name();
  manifest["outputs"] = outputs;
  return manifest;
}

// --- plan -----------------------------------------------------------------

struct PlanArgs {
  std::string arch_path;
  std::string strategy = "bottom_specific";
  double fraction = 0.2;
  std::uint64_t seed = 0;
  std::string out = "plan.json";
};

int cmd_plan(const PlanArgs& args) {
  const auto arch = mdl::archspec::load_arch(args.arch_path);
  const auto strategy = mdl::planner::strategy_from_string(args.strategy);
  const auto plan =
      mdl::planner::build_plan(arch, strategy, args.fraction, args.seed);
  mdl::planner::save_plan(plan, args.out);

  const double target =
      args.fraction * static_cast<double>(mdl::archspec::count_conv_params(arch));
  std::cout << "plan: " << arch.name << " " << args.strategy << " fraction "
            << mdl::format_double(args.fraction) << "\n";
  std::cout << "achieved " << plan.achieved_params << " / target "
            << mdl::format_double(target) << " params (deviation "
            << mdl::format_double(static_cast<double>(plan.achieved_params) -
                                  target)
            << ")\n";
  std::int64_t selected = 0, total_filters = 0;
  for (const auto& l : arch.layers) total_filters += l.out_channels;
  selected = plan.selected_filter_count();
  std::cout << "selected filters: " << selected << " / " << total_filters
            << "\n";
  for (const auto& [layer_id, filters] : plan.selection) {
    std::cout << "  L" << layer_id << ": " << filters.size() << "/"
              << arch.layers[layer_id].out_channels << " filters ("
              << filters.size() *
                     mdl::archspec::per_filter_params(arch.layers[layer_id])
              << " params)\n";
  }
  std::cout << "wrote " << args.out << "\n";
  return kExitOk;
}

// --- train ------------------------------------------------------------------

struct ConfigArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  bool omit_dead = false;
};

struct TrainJob {
  mdl::archspec::ArchitectureSpec arch;
  mdl::planner::SharingPlan plan;
  std::vector<mdl::bench::DomainDataset> datasets;
  mdl::trainer::TrainConfig train;
  mdl::trainer::InitSpec init;
};

TrainJob parse_train_job(const json& j) {
  if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1)
    throw mdl::ConfigError("train config needs schema_version 1");
  TrainJob job;
  job.arch = mdl::archspec::load_arch(j.at("arch").get<std::string>());

  const json& plan_spec = j.at("plan");
  if (plan_spec.contains("file")) {
    job.plan = mdl::planner::load_plan(plan_spec["file"].get<std::string>());
    mdl::planner::validate_plan(job.plan, job.arch);
  } else {
    job.plan = mdl::planner::build_plan(
        job.arch,
        mdl::planner::strategy_from_string(
            plan_spec.at("strategy").get<std::string>()),
        plan_spec.at("fraction").get<double>(), plan_spec.value("seed", 0ull));
  }

  for (const auto& d : j.at("domains"))
    job.datasets.push_back(mdl::bench::domain_from_json(d).load());
  job.train = mdl::trainer::train_config_from_json(j.at("trainer"));

  job.init.seed = job.train.seed;
  if (j.contains("init")) {
    const json& init = j["init"];
    if (init.contains("backbone_weights") &&
        !init["backbone_weights"].is_null())
      job.init.backbone_weights = init["backbone_weights"].get<std::string>();
    if (init.contains("head_weights")) {
      for (const auto& [domain_id, path] : init["head_weights"].items())
        job.init.head_weights[domain_id] = path.get<std::string>();
    }
    job.init.seed = init.value("seed", job.init.seed);
  }
  return job;
}

int cmd_train(const ConfigArgs& args) {
  const json config =
      apply_overrides(load_json_file(args.config_path), args.overrides);
  TrainJob job = parse_train_job(config);

  fs::create_directories(args.out_dir);
  job.train.dump_dir = fs::path(args.out_dir);

  std::vector<mdl::archspec::HeadSpec> heads;
  std::vector<const mdl::bench::DomainDataset*> datasets;
  for (const auto& ds : job.datasets) {
    heads.push_back({ds.domain_id(), ds.num_classes()});
    datasets.push_back(&ds);
  }

  auto model = mdl::mdnet::MultiDomainModel::assemble(job.arch, job.plan,
                                                      heads, job.init.seed);
  mdl::trainer::initialize(model, job.init);
  vlog("training " + std::to_string(datasets.size()) + " domains for " +
       std::to_string(job.train.steps) + " steps");
  const auto result = mdl::trainer::train_joint(model, datasets, job.train);

  const fs::path out(args.out_dir);
  result.history.save(out / "metrics.csv");
  model.save_checkpoint(out / "checkpoint.mdck", args.omit_dead);
  write_text(out / "manifest.json",
             run_manifest("train", config, {"metrics.csv", "checkpoint.mdck"})
                     .dump(2) +
                 "\n");

  for (const auto& [domain_id, accuracy] : result.final_val_accuracy)
    std::cout << domain_id << " val_accuracy "
              << mdl::format_double(accuracy) << "\n";
  std::cout << "wrote " << (out / "checkpoint.mdck").string() << "\n";
  return kExitOk;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
};

int cmd_eval(const EvalArgs& args) {
  const json config =
      apply_overrides(load_json_file(args.config_path), args.overrides);
  if (!config.contains("schema_version") ||
      config["schema_version"].get<int>() != 1)
    throw mdl::ConfigError("eval config needs schema_version 1");

  auto model = mdl::mdnet::MultiDomainModel::load_checkpoint(args.checkpoint);
  std::vector<mdl::bench::DomainDataset> datasets;
  for (const auto& d : config.at("domains"))
    datasets.push_back(mdl::bench::domain_from_json(d).load());
  std::vector<const mdl::bench::DomainDataset*> ptrs;
  for (const auto& ds : datasets) ptrs.push_back(&ds);

  const auto accuracy = mdl::bench::evaluate(model, ptrs);
  std::string csv = "domain,val_accuracy\n";
  for (const auto& [domain_id, acc] : accuracy) {
    std::cout << domain_id << " val_accuracy " << mdl::format_double(acc)
              << "\n";
    csv += domain_id + "," + mdl::format_double(acc) + "\n";
  }
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    write_text(fs::path(args.out_dir) / "eval.csv", csv);
  }
  return kExitOk;
}

// --- matrix / report ---------------------------------------------------------

int cmd_matrix(const ConfigArgs& args) {
  const json config_json =
      apply_overrides(load_json_file(args.config_path), args.overrides);
  const auto config =
      mdl::bench::experiment_from_json_text(config_json.dump());

  const auto result = mdl::bench::run_matrix(
      config, g_verbose ? mdl::bench::LogFn(vlog) : mdl::bench::LogFn{});

  const fs::path out(args.out_dir);
  fs::create_directories(out);
  result.table.save(out / "results.csv");
  std::vector<std::string> outputs{"results.csv"};
  for (const auto& path : mdl::bench::emit_report(result.table, out))
    outputs.push_back(path.filename().string());

  json manifest = run_manifest("matrix", config_json, outputs);
  manifest["cells_failed"] = result.failures.size();
  json failures = json::array();
  for (const auto& failure : result.failures)
    failures.push_back({{"cell", failure.cell_id}, {"error", failure.message}});
  manifest["failures"] = failures;
  write_text(out / "manifest.json", manifest.dump(2) + "\n");

  for (const auto& row : mdl::bench::directional_gaps(result.table)) {
    std::cout << "directional " << row.architecture << " fraction "
              << mdl::format_double(row.fraction)
              << ": bottom-top accuracy gap "
              << mdl::format_double(row.mean_gap) << "\n";
  }
  std::cout << result.table.rows.size() << " result rows -> "
            << (out / "results.csv").string() << "\n";

  if (!result.failures.empty()) {
    std::cerr << result.failures.size() << " cell(s) failed:\n";
    for (const auto& failure : result.failures)
      std::cerr << "  " << failure.cell_id << ": " << failure.message << "\n";
    return kExitPartial;
  }
  return kExitOk;
}

struct ReportArgs {
  std::string results_path;
  std::string out_dir = "report";
};

int cmd_report(const ReportArgs& args) {
  const auto table = mdl::bench::ResultsTable::load(args.results_path);
  const auto files = mdl::bench::emit_report(table, args.out_dir);
  for (const auto& path : files) std::cout << "wrote " << path.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"filter-level hard parameter sharing for multi-domain CNNs"};
  app.require_subcommand(1);
  app.add_flag("-v,--verbose", g_verbose, "log progress to stderr");

  PlanArgs plan_args;
  auto* plan = app.add_subcommand("plan", "build a sharing plan");
  plan->add_option("--arch", plan_args.arch_path, "architecture json file")
      ->required();
  plan->add_option("--strategy", plan_args.strategy,
                   "top_specific | bottom_specific | random");
  plan->add_option("--fraction", plan_args.fraction,
                   "domain-specific fraction of conv params in [0,1]");
  plan->add_option("--seed", plan_args.seed, "random-strategy seed");
  plan->add_option("--out", plan_args.out, "output plan file");

  ConfigArgs train_args;
  auto* train = app.add_subcommand("train", "train one multi-domain model");
  train->add_option("--config", train_args.config_path, "train config json")
      ->required();
  train->add_option("--out", train_args.out_dir, "output directory");
  train->add_option("--set", train_args.overrides,
                    "config overrides key=value");
  train->add_flag("--omit-dead-channels", train_args.omit_dead,
                  "drop replaced shared filters from the checkpoint");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")
      ->required();
  eval->add_option("--config", eval_args.config_path,
                   "eval config json (domains)")
      ->required();
  eval->add_option("--out", eval_args.out_dir, "output directory");
  eval->add_option("--set", eval_args.overrides, "config overrides key=value");

  ConfigArgs matrix_args;
  auto* matrix = app.add_subcommand("matrix", "run an experiment matrix");
  matrix->add_option("--config", matrix_args.config_path,
                     "experiment config json")
      ->required();
  matrix->add_option("--out", matrix_args.out_dir, "output directory");
  matrix->add_option("--set", matrix_args.overrides,
                     "config overrides key=value");

  ReportArgs report_args;
  auto* report =
      app.add_subcommand("report", "render reports from stored results");
  report->add_option("--results", report_args.results_path,
                     "results.csv from a matrix run")
      ->required();
  report->add_option("--out", report_args.out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (plan->parsed()) return cmd_plan(plan_args);
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (matrix->parsed()) return cmd_matrix(matrix_args);
    if (report->parsed()) return cmd_report(report_args);
  } catch (const mdl::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const mdl::SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const mdl::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
