// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#include "laf/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

namespace laf {
namespace {

void check_fraction(double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw PreconditionError("fraction must lie strictly between 0 and 1, got " +
                            std::to_string(fraction));
  }
}

void check_class_range(const LabeledDataset& data, int lo, int hi) {
  if (lo < 0 || hi >= data.num_classes() || lo > hi) {
    throw PreconditionError("empty or invalid class range [" + std::to_string(lo) + ", " +
                            std::to_string(hi) + "] for " + std::to_string(data.num_classes()) +
                            " classes");
  }
}

// Per class in [lo, hi]: shuffle that class's ids and keep floor(fraction * n).
std::vector<SampleId> select_per_class(const LabeledDataset& data, double fraction, int lo, int hi,
                                       std::mt19937_64& rng) {
  const auto& ids = data.sample_ids();
  const auto labels = data.labels();
  std::map<int, std::vector<SampleId>> by_class;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (labels[i] >= lo && labels[i] <= hi) by_class[labels[i]].push_back(ids[i]);
  }
  std::vector<SampleId> chosen;
  for (auto& [cls, members] : by_class) {
    std::sort(members.begin(), members.end());
    std::shuffle(members.begin(), members.end(), rng);
    const auto take = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(members.size())));
    chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<SampleId> complement(const LabeledDataset& data, const std::vector<SampleId>& sorted_forget) {
  std::vector<SampleId> all = data.sample_ids();
  std::sort(all.begin(), all.end());
  std::vector<SampleId> rest;
  rest.reserve(all.size() - sorted_forget.size());
  std::set_difference(all.begin(), all.end(), sorted_forget.begin(), sorted_forget.end(),
                      std::back_inserter(rest));
  return rest;
}

}  // namespace

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::DataRemoval:
      return "data-removal";
    case Scenario::ClassRemoval:
      return "class-removal";
    case Scenario::NoisyLabel:
      return "noisy-label";
  }
  return "unknown";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "data-removal") return Scenario::DataRemoval;
  if (s == "class-removal") return Scenario::ClassRemoval;
  if (s == "noisy-label") return Scenario::NoisyLabel;
  throw ConfigError("unknown scenario '" + s + "'");
}

ForgetSplit make_data_removal_split(const LabeledDataset& data, double fraction, int class_lo,
                                    int class_hi, std::uint64_t seed) {
  check_fraction(fraction);
  check_class_range(data, class_lo, class_hi);
  std::mt19937_64 rng(seed);
  ForgetSplit split;
  split.scenario = Scenario::DataRemoval;
  split.seed = seed;
  split.params = {fraction, class_lo, class_hi, std::nullopt};
  split.forgetting_ids = select_per_class(data, fraction, class_lo, class_hi, rng);
  split.remaining_ids = complement(data, split.forgetting_ids);
  return split;
}

ForgetSplit make_class_removal_split(const LabeledDataset& data, int target_class) {
  if (target_class < 0 || target_class >= data.num_classes()) {
    throw PreconditionError("class " + std::to_string(target_class) + " is not present in a " +
                            std::to_string(data.num_classes()) + "-class dataset");
  }
  const auto& ids = data.sample_ids();
  const auto labels = data.labels();
  ForgetSplit split;
  split.scenario = Scenario::ClassRemoval;
  split.params.target_class = target_class;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    (labels[i] == target_class ? split.forgetting_ids : split.remaining_ids).push_back(ids[i]);
  }
  if (split.forgetting_ids.empty()) {
    throw PreconditionError("class " + std::to_string(target_class) + " has no samples");
  }
  std::sort(split.forgetting_ids.begin(), split.forgetting_ids.end());
  std::sort(split.remaining_ids.begin(), split.remaining_ids.end());
  return split;
}

NoisyLabelResult make_noisy_label_split(const LabeledDataset& data, double fraction, int class_lo,
                                        int class_hi, std::uint64_t seed) {
  if (data.num_classes() < 2) {
    throw PreconditionError("noisy-label corruption needs at least two classes");
  }
  check_fraction(fraction);
  check_class_range(data, class_lo, class_hi);
  std::mt19937_64 rng(seed);
  ForgetSplit split;
  split.scenario = Scenario::NoisyLabel;
  split.seed = seed;
  split.params = {fraction, class_lo, class_hi, std::nullopt};
  split.forgetting_ids = select_per_class(data, fraction, class_lo, class_hi, rng);
  split.remaining_ids = complement(data, split.forgetting_ids);

  std::vector<int> labels = data.labels();
  std::uniform_int_distribution<int> other(0, data.num_classes() - 2);
  for (SampleId id : split.forgetting_ids) {
    int& y = labels[data.row_of(id)];
    const int draw = other(rng);
    y = draw >= y ? draw + 1 : draw;
  }
  return {data.with_labels(std::move(labels)), std::move(split)};
}

nlohmann::json split_to_json(const ForgetSplit& split) {
  nlohmann::json params = nlohmann::json::object();
  if (split.params.fraction) params["fraction"] = *split.params.fraction;
  if (split.params.class_lo) params["class_lo"] = *split.params.class_lo;
  if (split.params.class_hi) params["class_hi"] = *split.params.class_hi;
  if (split.params.target_class) params["target_class"] = *split.params.target_class;
  std::vector<SampleId> ids = split.forgetting_ids;
  std::sort(ids.begin(), ids.end());
  return {{"scenario", to_string(split.scenario)},
          {"seed", split.seed},
          {"params", params},
          {"forgetting_ids", ids}};
}

ForgetSplit split_from_json(const nlohmann::json& j, const LabeledDataset& data) {
  ForgetSplit split;
  try {
    split.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    split.seed = j.at("seed").get<std::uint64_t>();
    const auto& p = j.at("params");
    if (p.contains("fraction")) split.params.fraction = p["fraction"].get<double>();
    if (p.contains("class_lo")) split.params.class_lo = p["class_lo"].get<int>();
    if (p.contains("class_hi")) split.params.class_hi = p["class_hi"].get<int>();
    if (p.contains("target_class")) split.params.target_class = p["target_class"].get<int>();
    split.forgetting_ids = j.at("forgetting_ids").get<std::vector<SampleId>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("split json: ") + e.what());
  }
  std::sort(split.forgetting_ids.begin(), split.forgetting_ids.end());
  for (SampleId id : split.forgetting_ids) {
    if (!data.contains(id)) throw ParseError("split json: unknown sample id " + std::to_string(id));
  }
  split.remaining_ids = complement(data, split.forgetting_ids);
  return split;
}

void validate_split(const ForgetSplit& split, const LabeledDataset& data) {
  std::set<SampleId> seen;
  for (SampleId id : split.remaining_ids) {
    if (!data.contains(id)) throw PreconditionError("split: remaining id not in dataset");
    seen.insert(id);
  }
  for (SampleId id : split.forgetting_ids) {
    if (!data.contains(id)) throw PreconditionError("split: forgetting id not in dataset");
    if (!seen.insert(id).second) throw PreconditionError("split: remaining and forgetting overlap");
  }
  if (seen.size() != data.size()) throw PreconditionError("split does not cover the dataset");
}

}  // namespace laf
