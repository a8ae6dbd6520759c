// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end runs: original training, VAE fitting, split construction, the
// chosen unlearning method, evaluation and persistence.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "laf/baselines.hpp"
#include "laf/eval.hpp"
#include "laf/model.hpp"
#include "laf/unlearn.hpp"
#include "laf/vae.hpp"

namespace laf {

enum class Method { Laf, LafR, Retrain, NegGrad, NoneL1, NoneL2, AddKl, VaeDr, TwoStage, Original };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct DatasetConfig {
  std::string kind = "idx";  // "idx" or "blobs"
  std::filesystem::path dir;  // idx: directory holding the four gzipped files
  int num_classes = 10;
  int per_class = 100;
  int dim = 2;
  double spread = 0.5;
  std::uint64_t seed = 1;
};

struct ScenarioConfig {
  Scenario kind = Scenario::DataRemoval;
  double fraction = 0.4;
  int class_lo = 5;
  int class_hi = 9;
  int target_class = 0;
};

/// Unlearning settings as given in a config; unset fields take defaults that
/// depend on the architecture and scenario.
struct UnlearnOverrides {
  std::optional<int> epochs_r;
  std::optional<double> tau;
  std::optional<double> lr_ue;
  std::optional<double> lr_ra;
  std::optional<int> batch_size;
  std::optional<Strategy> strategy;
  std::optional<bool> keep_kl_terms;
  std::optional<std::string> vae_train_set;
  std::optional<double> repair_lr;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetConfig dataset;
  ArchId arch = ArchId::SmallCnn;
  ArchOptions arch_options;
  ScenarioConfig scenario;
  Method method = Method::Laf;
  TrainOptions original{2, 1e-3, 32, 0};
  VaeTrainOptions vae;
  BaselineSpec retrain{BaselineMethod::Retrain, 2, 1e-3, 32, 0};
  BaselineSpec neggrad{BaselineMethod::NegGrad, 1, 1e-4, 32, 0};
  UnlearnOverrides unlearn;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output_dir = "runs/experiment";
  /// Where cached originals and full-data VAEs live. LAF_CACHE_DIR wins
  /// over this; empty means <output_dir>/cache.
  std::filesystem::path cache_dir;
};

/// Parses a JSON config. Relative dataset directories resolve against
/// `base_dir`.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Hash of everything that influences results (not seeds or output_dir).
std::string config_hash(const ExperimentConfig& cfg);

/// tau defaults per architecture and scenario.
double default_tau(ArchId arch, Scenario scenario);

/// Fully resolved unlearning config for a method and seed.
UnlearnConfig resolve_unlearn(const ExperimentConfig& cfg, std::uint64_t seed);

struct LoadedData {
  LabeledDataset train;
  LabeledDataset test;
};

LoadedData load_data(const DatasetConfig& cfg);

/// Training data as seen by unlearning (corrupted for noisy-label) and split.
struct ScenarioData {
  LabeledDataset train;
  ForgetSplit split;
};

ScenarioData build_scenario(const ScenarioConfig& cfg, const LabeledDataset& clean_train,
                            std::uint64_t seed);

std::filesystem::path cache_dir(const ExperimentConfig& cfg);

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::optional<MetricsReport> report;
  std::optional<std::string> failed_stage;
  std::optional<std::string> error;
  /// Stages that were loaded from the cache instead of recomputed.
  std::vector<std::string> cached_stages;
};

struct RunResult {
  std::filesystem::path dir;
  std::vector<SeedOutcome> seeds;
  nlohmann::json aggregate;
};

/// Runs every seed of `cfg`, writing per-seed artifacts and an aggregate
/// into cfg.output_dir. Failing seeds are recorded in failures.json; the
/// remaining seeds still run.
RunResult run_experiment(const ExperimentConfig& cfg);

/// "avg±std" with two decimals; std is the sample standard deviation.
std::string format_mean_std(const std::vector<double>& values);

/// Mean/std aggregate over reports of one method.
nlohmann::json aggregate_reports(const std::vector<MetricsReport>& reports);

struct ComparisonTable {
  std::vector<std::string> columns;  // metric names
  std::vector<std::string> methods;  // row labels
  std::vector<std::vector<std::optional<double>>> means;
  std::vector<std::vector<std::string>> cells;  // "avg±std"
  std::string csv;
  std::string text;  // aligned, best per column wrapped in ** **
};

ComparisonTable compare_runs(const std::vector<std::filesystem::path>& run_dirs);

}  // namespace laf
