// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "laf/checkpoint.hpp"
#include "laf/experiment.hpp"

namespace fs = std::filesystem;

namespace {

int cmd_run(const fs::path& config_path, const std::vector<std::uint64_t>& seeds,
            const std::optional<std::string>& method, const std::optional<fs::path>& out) {
  laf::ExperimentConfig cfg = laf::load_config(config_path);
  if (!seeds.empty()) cfg.seeds = seeds;
  if (method) cfg.method = laf::method_from_string(*method);
  if (out) cfg.output_dir = *out;
  const laf::RunResult result = laf::run_experiment(cfg);
  int failed = 0;
  for (const auto& s : result.seeds) {
    if (s.report) {
      std::cout << laf::csv_row(*s.report) << '\n';
    } else {
      ++failed;
      std::cerr << "seed " << s.seed << " failed in stage '" << *s.failed_stage << "': " << *s.error << '\n';
    }
  }
  std::cout << "results: " << result.dir.string() << '\n';
  return failed == 0 ? 0 : 1;
}

int cmd_compare(const std::vector<fs::path>& dirs, const std::optional<fs::path>& csv_out) {
  const laf::ComparisonTable t = laf::compare_runs(dirs);
  std::cout << t.text;
  if (csv_out) {
    std::ofstream f(*csv_out);
    if (!f) throw laf::Error("cannot write " + csv_out->string());
    f << t.csv;
  }
  return 0;
}

int cmd_export(const fs::path& checkpoint, const std::string& projector,
               std::optional<fs::path> config_path, const std::string& subset, std::uint64_t seed,
               const std::optional<fs::path>& out) {
  const laf::LoadedModel loaded = laf::load_model(checkpoint);
  if (!config_path) {
    const fs::path guess = checkpoint.parent_path() / "config.json";
    if (!fs::exists(guess)) {
      throw laf::ConfigError("no --config given and no config.json next to " + checkpoint.string());
    }
    config_path = guess;
  }
  const laf::ExperimentConfig cfg = laf::load_config(*config_path);
  const laf::LoadedData data = laf::load_data(cfg.dataset);
  const laf::ScenarioData sc = laf::build_scenario(cfg.scenario, data.train, seed);

  const laf::LabeledDataset* source = &sc.train;
  std::vector<laf::SampleId> ids;
  if (subset == "all") {
    ids = sc.train.sample_ids();
  } else if (subset == "remaining") {
    ids = sc.split.remaining_ids;
  } else if (subset == "forgetting") {
    ids = sc.split.forgetting_ids;
  } else if (subset == "test") {
    source = &data.test;
    ids = data.test.sample_ids();
  } else {
    throw laf::ConfigError("--subset must be all, remaining, forgetting or test");
  }
  const auto table = laf::export_representations(loaded.model, *source, ids,
                                                 laf::projector_from_string(projector));
  const fs::path target = out.value_or(checkpoint.parent_path() / ("reps_" + subset + "_" + projector + ".csv"));
  laf::write_representation_csv(table, target);
  std::cout << table.sample_ids.size() << " rows written to " << target.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-free machine unlearning experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  auto* run = app.add_subcommand("run", "Run an experiment config over its seeds");
  fs::path config_path;
  std::vector<std::uint64_t> seeds;
  std::string method;
  fs::path out_dir;
  run->add_option("--config", config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seeds, "Override the seed list (repeatable)");
  run->add_option("--method", method, "Override the method");
  run->add_option("--out", out_dir, "Override the output directory");

  auto* compare = app.add_subcommand("compare", "Tabulate aggregates of several runs");
  std::vector<fs::path> dirs;
  fs::path csv_out;
  compare->add_option("dirs", dirs, "Run directories")->required()->check(CLI::ExistingDirectory);
  compare->add_option("--csv", csv_out, "Also write the table as CSV");

  auto* exp = app.add_subcommand("export-reps", "Export extractor representations of a checkpoint");
  fs::path checkpoint;
  std::string projector = "pca2d";
  fs::path exp_config;
  std::string subset = "all";
  std::uint64_t exp_seed = 0;
  fs::path exp_out;
  exp->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  exp->add_option("--projector", projector, "pca2d or none")->check(CLI::IsMember({"pca2d", "none"}));
  exp->add_option("--config", exp_config, "Experiment JSON (default: config.json beside the checkpoint)");
  exp->add_option("--subset", subset, "all, remaining, forgetting or test");
  exp->add_option("--seed", exp_seed, "Seed of the split to use for remaining/forgetting");
  exp->add_option("--out", exp_out, "Output CSV");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*run) {
      return cmd_run(config_path, seeds, method.empty() ? std::nullopt : std::optional(method),
                     out_dir.empty() ? std::nullopt : std::optional(out_dir));
    }
    if (*compare) return cmd_compare(dirs, csv_out.empty() ? std::nullopt : std::optional(csv_out));
    if (*exp) {
      return cmd_export(checkpoint, projector,
                        exp_config.empty() ? std::nullopt : std::optional(exp_config), subset, exp_seed,
                        exp_out.empty() ? std::nullopt : std::optional(exp_out));
    }
  } catch (const laf::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
