// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "laf/common.hpp"

namespace laf {

enum class SplitTag { Train, Test };

std::string to_string(SplitTag tag);
SplitTag split_tag_from_string(const std::string& s);

/// Records every label read and every per-sample input read made through an
/// audited LabeledDataset view. Thread-safe.
class AccessAudit {
 public:
  void record_labels(std::size_t count) { label_reads_ += count; }
  void record_inputs(std::span<const SampleId> ids);

  std::uint64_t label_reads() const { return label_reads_.load(); }
  std::uint64_t input_reads(SampleId id) const;
  /// Total input reads over a set of ids.
  std::uint64_t input_reads(std::span<const SampleId> ids) const;
  void reset();

 private:
  std::atomic<std::uint64_t> label_reads_{0};
  mutable std::mutex mu_;
  std::unordered_map<SampleId, std::uint64_t> input_reads_;
};

/// Immutable labeled sample collection. Copies share storage, so relabeled
/// variants and audited views are cheap.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(Matrix inputs, std::vector<int> labels, std::vector<SampleId> sample_ids,
                 InputShape shape, int num_classes, SplitTag tag);

  std::size_t size() const { return ids_ ? ids_->size() : 0; }
  bool empty() const { return size() == 0; }
  const InputShape& input_shape() const { return shape_; }
  int num_classes() const { return num_classes_; }
  SplitTag split_tag() const { return tag_; }

  const std::vector<SampleId>& sample_ids() const { return *ids_; }
  bool contains(SampleId id) const;
  std::size_t row_of(SampleId id) const;

  /// Input rows for the given ids, in order. Audited.
  Matrix gather_inputs(std::span<const SampleId> ids) const;
  /// Labels for the given ids, in order. Audited.
  std::vector<int> gather_labels(std::span<const SampleId> ids) const;
  /// Single label lookup by id. Audited.
  int label_of(SampleId id) const;
  /// Full label array in row order. Audited.
  std::vector<int> labels() const;

  /// Raw input storage, bypassing the audit. Meant for serialization.
  const Matrix& raw_inputs() const { return *inputs_; }
  /// Raw label storage, bypassing the audit. Meant for serialization.
  const std::vector<int>& raw_labels() const { return *labels_; }

  /// Same samples with a replacement label array (row order).
  LabeledDataset with_labels(std::vector<int> labels) const;
  /// View whose reads are reported to `audit`.
  LabeledDataset with_audit(std::shared_ptr<AccessAudit> audit) const;
  /// Subset containing only `ids`, preserving their ids.
  LabeledDataset subset(std::span<const SampleId> ids) const;

 private:
  std::shared_ptr<const Matrix> inputs_;
  std::shared_ptr<const std::vector<int>> labels_;
  std::shared_ptr<const std::vector<SampleId>> ids_;
  std::shared_ptr<const std::unordered_map<SampleId, std::size_t>> index_;
  std::shared_ptr<AccessAudit> audit_;
  InputShape shape_;
  int num_classes_ = 0;
  SplitTag tag_ = SplitTag::Train;
};

struct IdxHeader {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Parses an IDX image/label pair (plain or gzip-compressed). Pixels are
/// scaled to [0, 1]; sample ids follow file order.
LabeledDataset load_idx(const std::filesystem::path& image_path,
                        const std::filesystem::path& label_path, SplitTag tag,
                        int num_classes = 10);

/// Reads only the header of an IDX file.
IdxHeader read_idx_header(const std::filesystem::path& path);

/// Writes images (quantized to bytes) and labels as IDX. A ".gz" suffix
/// selects gzip compression.
void write_idx(const LabeledDataset& data, const std::filesystem::path& image_path,
               const std::filesystem::path& label_path);

/// Gaussian clusters around seeded random centers; an exact 80/20 per-class
/// split into train and test.
std::pair<LabeledDataset, LabeledDataset> make_blobs(int num_classes, int per_class, int dim,
                                                     double spread, std::uint64_t seed);

/// Binary container (`<stem>.bin`) plus JSON manifest (`<stem>.json`).
void save_dataset(const LabeledDataset& data, const std::filesystem::path& stem);
LabeledDataset load_dataset(const std::filesystem::path& stem);

}  // namespace laf
