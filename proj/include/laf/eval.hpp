// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "laf/model.hpp"
#include "laf/scenario.hpp"

namespace laf {

/// Percent of `ids` whose argmax prediction equals the label in `data`.
double accuracy(const ClassifierModel& model, const LabeledDataset& data,
                std::span<const SampleId> ids);
/// Accuracy over every sample of `data`.
double accuracy(const ClassifierModel& model, const LabeledDataset& data);

inline constexpr const char* kAttackVersion = "lr-sorted-softmax-v1";

/// Sorted (descending) softmax probabilities followed by -log p_max.
Matrix attack_features(const Matrix& probabilities);

/// Logistic-regression membership attacker over standardized features.
struct AttackModel {
  std::string version = kAttackVersion;
  RowVector mean;
  RowVector scale;
  Vector weights;  // one per feature
  double bias = 0.0;
  /// Scores at or above this are called "member".
  double threshold = 0.0;

  static AttackModel always_member(Index width);

  Vector scores(const Matrix& features) const;
  std::vector<bool> is_member(const Matrix& features) const;
};

/// Fits the attacker on labelled member / non-member features. The
/// threshold is the median score over the pooled training features.
AttackModel fit_attack(const Matrix& member_features, const Matrix& nonmember_features);

/// Percent of probe rows the attacker calls "member".
double attack_success_rate(const AttackModel& attack, const Matrix& probe_features);

struct AsrResult {
  double asr = 0.0;
  std::size_t pool_size = 0;  // per side
  std::optional<std::string> warning;
};

/// Member pool = `member_ids` of `train_data`, non-member pool = all of
/// `nonmember_data`, both subsampled to equal size with `seed`. The probe set
/// is `probe_ids` of `train_data`.
AsrResult membership_inference_asr(const ClassifierModel& model, const LabeledDataset& train_data,
                                   std::span<const SampleId> member_ids,
                                   const LabeledDataset& nonmember_data,
                                   std::span<const SampleId> probe_ids, std::uint64_t seed);

struct MetricsReport {
  Scenario scenario = Scenario::DataRemoval;
  std::string method;
  std::uint64_t seed = 0;
  double train_r = 0.0;
  double train_f = 0.0;
  std::optional<double> test;
  std::optional<double> test_r;
  std::optional<double> test_f;
  double asr = 0.0;
  std::string model_hash;
  std::string config_hash;
  std::string attack_version = kAttackVersion;
  double wall_seconds = 0.0;
  std::vector<std::string> warnings;
  nlohmann::json settings = nlohmann::json::object();
};

/// Evaluates `model` on the training data (as seen by the method, i.e. with
/// corrupted labels in the noisy-label scenario), the test data and the MIA.
MetricsReport metrics_report(const ClassifierModel& model, const LabeledDataset& data,
                             const LabeledDataset& test_data, const ForgetSplit& split,
                             std::uint64_t seed);

nlohmann::json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);

const std::vector<std::string>& csv_columns();
std::string csv_header();
std::string csv_row(const MetricsReport& r);

enum class Projector { Pca2d, None };

Projector projector_from_string(const std::string& s);

struct RepresentationTable {
  std::vector<SampleId> sample_ids;
  std::vector<int> labels;
  Matrix coords;  // n x 2 for pca2d, n x rep_dim otherwise
};

RepresentationTable export_representations(const ClassifierModel& model, const LabeledDataset& data,
                                           std::span<const SampleId> ids, Projector projector);

/// Deterministic top-2 principal projection of the rows of `points`.
/// Each component's largest-magnitude loading is made positive.
Matrix pca2d(const Matrix& points, Matrix* components = nullptr, RowVector* center = nullptr);

void write_representation_csv(const RepresentationTable& table, const std::filesystem::path& path);

}  // namespace laf
