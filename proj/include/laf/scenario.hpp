// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "laf/dataset.hpp"

namespace laf {

enum class Scenario { DataRemoval, ClassRemoval, NoisyLabel };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct SplitParams {
  std::optional<double> fraction;
  std::optional<int> class_lo;
  std::optional<int> class_hi;
  std::optional<int> target_class;
  bool operator==(const SplitParams&) const = default;
};

/// Disjoint remaining / forgetting id sets covering a training split. Both
/// id lists are sorted ascending.
struct ForgetSplit {
  std::vector<SampleId> remaining_ids;
  std::vector<SampleId> forgetting_ids;
  Scenario scenario = Scenario::DataRemoval;
  std::uint64_t seed = 0;
  SplitParams params;

  bool operator==(const ForgetSplit&) const = default;
};

/// Forgets floor(fraction * count) uniformly chosen samples of each class in
/// [class_lo, class_hi].
ForgetSplit make_data_removal_split(const LabeledDataset& data, double fraction, int class_lo,
                                    int class_hi, std::uint64_t seed);

/// Forgets every sample of `target_class`.
ForgetSplit make_class_removal_split(const LabeledDataset& data, int target_class);

struct NoisyLabelResult {
  LabeledDataset corrupted;
  ForgetSplit split;
};

/// Selects samples as in data removal and replaces each selected label with a
/// uniformly drawn different class. The input dataset is left untouched.
NoisyLabelResult make_noisy_label_split(const LabeledDataset& data, double fraction, int class_lo,
                                        int class_hi, std::uint64_t seed);

/// {scenario, seed, params, forgetting_ids}; ids sorted.
nlohmann::json split_to_json(const ForgetSplit& split);
/// Rebuilds a split; remaining ids are the complement within `data`.
ForgetSplit split_from_json(const nlohmann::json& j, const LabeledDataset& data);

/// Throws PreconditionError unless the split partitions `data`'s ids.
void validate_split(const ForgetSplit& split, const LabeledDataset& data);

}  // namespace laf
