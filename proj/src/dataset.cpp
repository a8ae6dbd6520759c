// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#include "laf/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

namespace laf {
namespace {

std::vector<std::uint8_t> read_maybe_gz(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw ParseError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes;
  std::uint8_t buf[1 << 16];
  while (true) {
    const int got = gzread(f, buf, sizeof(buf));
    if (got < 0) {
      int err = 0;
      std::string msg = gzerror(f, &err);
      gzclose(f);
      throw ParseError(path.string() + ": read failed at offset " + std::to_string(bytes.size()) +
                       ": " + msg);
    }
    if (got == 0) break;
    bytes.insert(bytes.end(), buf, buf + got);
  }
  gzclose(f);
  return bytes;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

IdxHeader parse_header(const std::vector<std::uint8_t>& b, const std::string& name) {
  if (b.size() < 4) {
    throw ParseError(name + ": truncated header at offset 0 (file has " +
                     std::to_string(b.size()) + " bytes)");
  }
  IdxHeader h;
  h.magic = be32(b, 0);
  if (b[0] != 0 || b[1] != 0 || b[2] != 0x08) {
    throw ParseError(name + ": bad magic at offset 0 (expected unsigned-byte IDX)");
  }
  const std::size_t ndim = b[3];
  if (b.size() < 4 + 4 * ndim) {
    throw ParseError(name + ": truncated header at offset 4 (need " + std::to_string(4 * ndim) +
                     " bytes of dimensions)");
  }
  for (std::size_t i = 0; i < ndim; ++i) h.dims.push_back(be32(b, 4 + 4 * i));
  return h;
}

std::size_t payload_offset(const IdxHeader& h) { return 4 + 4 * h.dims.size(); }

void check_payload(const std::vector<std::uint8_t>& b, const IdxHeader& h,
                   const std::string& name) {
  std::size_t expected = 1;
  for (auto d : h.dims) expected *= d;
  const std::size_t off = payload_offset(h);
  const std::size_t actual = b.size() - off;
  if (actual != expected) {
    throw ParseError(name + ": payload at offset " + std::to_string(off) + " has " +
                     std::to_string(actual) + " bytes, expected " + std::to_string(expected));
  }
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  const bool gz = path.extension() == ".gz";
  if (gz) {
    gzFile f = gzopen(path.string().c_str(), "wb9");
    if (!f) throw ParseError("cannot open " + path.string() + " for writing");
    if (!bytes.empty() &&
        gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size())) != static_cast<int>(bytes.size())) {
      gzclose(f);
      throw ParseError("write failed: " + path.string());
    }
    gzclose(f);
  } else {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

std::string to_string(SplitTag tag) { return tag == SplitTag::Train ? "train" : "test"; }

SplitTag split_tag_from_string(const std::string& s) {
  if (s == "train") return SplitTag::Train;
  if (s == "test") return SplitTag::Test;
  throw ParseError("unknown split tag '" + s + "'");
}

// ---------------------------------------------------------------------------
// AccessAudit

void AccessAudit::record_inputs(std::span<const SampleId> ids) {
  std::lock_guard lock(mu_);
  for (SampleId id : ids) ++input_reads_[id];
}

std::uint64_t AccessAudit::input_reads(SampleId id) const {
  std::lock_guard lock(mu_);
  auto it = input_reads_.find(id);
  return it == input_reads_.end() ? 0 : it->second;
}

std::uint64_t AccessAudit::input_reads(std::span<const SampleId> ids) const {
  std::lock_guard lock(mu_);
  std::uint64_t total = 0;
  for (SampleId id : ids) {
    auto it = input_reads_.find(id);
    if (it != input_reads_.end()) total += it->second;
  }
  return total;
}

void AccessAudit::reset() {
  std::lock_guard lock(mu_);
  label_reads_ = 0;
  input_reads_.clear();
}

// ---------------------------------------------------------------------------
// LabeledDataset

LabeledDataset::LabeledDataset(Matrix inputs, std::vector<int> labels,
                               std::vector<SampleId> sample_ids, InputShape shape,
                               int num_classes, SplitTag tag)
    : shape_(shape), num_classes_(num_classes), tag_(tag) {
  const auto n = sample_ids.size();
  if (static_cast<std::size_t>(inputs.rows()) != n || labels.size() != n) {
    throw PreconditionError("dataset: inputs, labels and sample ids must have equal length");
  }
  if (inputs.cols() != shape.flat()) {
    throw PreconditionError("dataset: input width " + std::to_string(inputs.cols()) +
                            " does not match shape " + shape.to_string());
  }
  if (num_classes < 1) throw PreconditionError("dataset: num_classes must be positive");
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw PreconditionError("dataset: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(num_classes) + ")");
    }
  }
  auto index = std::make_shared<std::unordered_map<SampleId, std::size_t>>();
  index->reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!index->emplace(sample_ids[i], i).second) {
      throw PreconditionError("dataset: duplicate sample id " + std::to_string(sample_ids[i]));
    }
  }
  inputs_ = std::make_shared<const Matrix>(std::move(inputs));
  labels_ = std::make_shared<const std::vector<int>>(std::move(labels));
  ids_ = std::make_shared<const std::vector<SampleId>>(std::move(sample_ids));
  index_ = std::move(index);
}

bool LabeledDataset::contains(SampleId id) const { return index_ && index_->count(id) > 0; }

std::size_t LabeledDataset::row_of(SampleId id) const {
  auto it = index_->find(id);
  if (it == index_->end()) throw PreconditionError("dataset: unknown sample id " + std::to_string(id));
  return it->second;
}

Matrix LabeledDataset::gather_inputs(std::span<const SampleId> ids) const {
  Matrix out(static_cast<Index>(ids.size()), shape_.flat());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.row(static_cast<Index>(i)) = inputs_->row(static_cast<Index>(row_of(ids[i])));
  }
  if (audit_) audit_->record_inputs(ids);
  return out;
}

std::vector<int> LabeledDataset::gather_labels(std::span<const SampleId> ids) const {
  std::vector<int> out;
  out.reserve(ids.size());
  for (SampleId id : ids) out.push_back((*labels_)[row_of(id)]);
  if (audit_) audit_->record_labels(ids.size());
  return out;
}

int LabeledDataset::label_of(SampleId id) const {
  if (audit_) audit_->record_labels(1);
  return (*labels_)[row_of(id)];
}

std::vector<int> LabeledDataset::labels() const {
  if (audit_) audit_->record_labels(labels_->size());
  return *labels_;
}

LabeledDataset LabeledDataset::with_labels(std::vector<int> labels) const {
  if (labels.size() != size()) throw PreconditionError("dataset: relabel size mismatch");
  for (int y : labels) {
    if (y < 0 || y >= num_classes_) throw PreconditionError("dataset: relabel out of range");
  }
  LabeledDataset copy = *this;
  copy.labels_ = std::make_shared<const std::vector<int>>(std::move(labels));
  return copy;
}

LabeledDataset LabeledDataset::with_audit(std::shared_ptr<AccessAudit> audit) const {
  LabeledDataset copy = *this;
  copy.audit_ = std::move(audit);
  return copy;
}

LabeledDataset LabeledDataset::subset(std::span<const SampleId> ids) const {
  Matrix x(static_cast<Index>(ids.size()), shape_.flat());
  std::vector<int> y;
  y.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto r = row_of(ids[i]);
    x.row(static_cast<Index>(i)) = inputs_->row(static_cast<Index>(r));
    y.push_back((*labels_)[r]);
  }
  return LabeledDataset(std::move(x), std::move(y), {ids.begin(), ids.end()}, shape_,
                        num_classes_, tag_);
}

// ---------------------------------------------------------------------------
// IDX

IdxHeader read_idx_header(const std::filesystem::path& path) {
  return parse_header(read_maybe_gz(path), path.string());
}

LabeledDataset load_idx(const std::filesystem::path& image_path,
                        const std::filesystem::path& label_path, SplitTag tag, int num_classes) {
  const auto img = read_maybe_gz(image_path);
  const auto lab = read_maybe_gz(label_path);
  const auto ih = parse_header(img, image_path.string());
  const auto lh = parse_header(lab, label_path.string());
  if (ih.magic != kIdxImageMagic || ih.dims.size() != 3) {
    throw ParseError(image_path.string() + ": magic at offset 0 is not an image file (0x00000803)");
  }
  if (lh.magic != kIdxLabelMagic || lh.dims.size() != 1) {
    throw ParseError(label_path.string() + ": magic at offset 0 is not a label file (0x00000801)");
  }
  check_payload(img, ih, image_path.string());
  check_payload(lab, lh, label_path.string());
  if (ih.dims[0] != lh.dims[0]) {
    throw ParseError("image/label count mismatch: " + std::to_string(ih.dims[0]) + " vs " +
                     std::to_string(lh.dims[0]));
  }
  const Index n = ih.dims[0];
  const InputShape shape{1, static_cast<int>(ih.dims[1]), static_cast<int>(ih.dims[2])};
  Matrix x(n, shape.flat());
  const std::uint8_t* px = img.data() + payload_offset(ih);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = px[i] / 255.0;
  std::vector<int> y(static_cast<std::size_t>(n));
  const std::uint8_t* pl = lab.data() + payload_offset(lh);
  for (Index i = 0; i < n; ++i) {
    y[static_cast<std::size_t>(i)] = pl[i];
    if (pl[i] >= num_classes) {
      throw ParseError(label_path.string() + ": label " + std::to_string(pl[i]) + " at offset " +
                       std::to_string(payload_offset(lh) + static_cast<std::size_t>(i)) +
                       " exceeds class count");
    }
  }
  std::vector<SampleId> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), SampleId{0});
  return LabeledDataset(std::move(x), std::move(y), std::move(ids), shape, num_classes, tag);
}

void write_idx(const LabeledDataset& data, const std::filesystem::path& image_path,
               const std::filesystem::path& label_path) {
  const auto& shape = data.input_shape();
  if (shape.channels != 1) throw PreconditionError("write_idx: only single-channel images");
  const auto n = static_cast<std::uint32_t>(data.size());
  std::vector<std::uint8_t> img;
  put_be32(img, kIdxImageMagic);
  put_be32(img, n);
  put_be32(img, static_cast<std::uint32_t>(shape.height));
  put_be32(img, static_cast<std::uint32_t>(shape.width));
  const Matrix& x = data.raw_inputs();
  for (Index i = 0; i < x.size(); ++i) {
    const double v = std::clamp(x.data()[i], 0.0, 1.0);
    img.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  }
  std::vector<std::uint8_t> lab;
  put_be32(lab, kIdxLabelMagic);
  put_be32(lab, n);
  for (int y : data.raw_labels()) lab.push_back(static_cast<std::uint8_t>(y));
  write_bytes(image_path, img);
  write_bytes(label_path, lab);
}

// ---------------------------------------------------------------------------
// Synthetic blobs

std::pair<LabeledDataset, LabeledDataset> make_blobs(int num_classes, int per_class, int dim,
                                                     double spread, std::uint64_t seed) {
  if (num_classes < 2) throw PreconditionError("make_blobs: need at least two classes");
  if (per_class < 5 || dim < 1 || spread < 0.0) {
    throw PreconditionError("make_blobs: per_class >= 5, dim >= 1 and spread >= 0 required");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> center_dist(-5.0, 5.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  Matrix centers(num_classes, dim);
  for (Index i = 0; i < centers.size(); ++i) centers.data()[i] = center_dist(rng);

  const int n_test = per_class / 5;
  const int n_train = per_class - n_test;
  Matrix train_x(Index{num_classes} * n_train, dim);
  Matrix test_x(Index{num_classes} * n_test, dim);
  std::vector<int> train_y, test_y;
  Index tr = 0, te = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (int k = 0; k < per_class; ++k) {
      RowVector p(dim);
      for (int d = 0; d < dim; ++d) p(d) = centers(c, d) + spread * noise(rng);
      if (k < n_train) {
        train_x.row(tr++) = p;
        train_y.push_back(c);
      } else {
        test_x.row(te++) = p;
        test_y.push_back(c);
      }
    }
  }
  auto shuffled = [&rng](Matrix x, std::vector<int> y, SampleId first_id, SplitTag tag, int dim,
                         int classes) {
    std::vector<std::size_t> order(y.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Matrix xs(x.rows(), x.cols());
    std::vector<int> ys(y.size());
    std::vector<SampleId> ids(y.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      xs.row(static_cast<Index>(i)) = x.row(static_cast<Index>(order[i]));
      ys[i] = y[order[i]];
      ids[i] = first_id + static_cast<SampleId>(i);
    }
    return LabeledDataset(std::move(xs), std::move(ys), std::move(ids), InputShape{1, 1, dim},
                          classes, tag);
  };
  const auto train_count = static_cast<SampleId>(train_y.size());
  auto train = shuffled(std::move(train_x), std::move(train_y), 0, SplitTag::Train, dim, num_classes);
  auto test = shuffled(std::move(test_x), std::move(test_y), train_count, SplitTag::Test, dim,
                       num_classes);
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Binary container + manifest

void save_dataset(const LabeledDataset& data, const std::filesystem::path& stem) {
  auto bin = stem;
  bin += ".bin";
  auto manifest = stem;
  manifest += ".json";
  std::ofstream out(bin, std::ios::binary);
  if (!out) throw ParseError("cannot write " + bin.string());
  const char magic[4] = {'L', 'A', 'F', 'D'};
  out.write(magic, 4);
  const std::uint64_t n = data.size();
  const std::uint64_t width = static_cast<std::uint64_t>(data.input_shape().flat());
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&width), sizeof width);
  out.write(reinterpret_cast<const char*>(data.raw_inputs().data()),
            static_cast<std::streamsize>(n * width * sizeof(double)));
  for (int y : data.raw_labels()) {
    const std::int32_t v = y;
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  out.write(reinterpret_cast<const char*>(data.sample_ids().data()),
            static_cast<std::streamsize>(n * sizeof(SampleId)));

  const auto& s = data.input_shape();
  nlohmann::json j = {{"format", "laf-dataset-v1"},
                      {"binary", bin.filename().string()},
                      {"samples", n},
                      {"input_shape", {s.channels, s.height, s.width}},
                      {"num_classes", data.num_classes()},
                      {"split_tag", to_string(data.split_tag())}};
  std::ofstream(manifest) << j.dump(2) << "\n";
}

LabeledDataset load_dataset(const std::filesystem::path& stem) {
  auto manifest_path = stem;
  manifest_path += ".json";
  std::ifstream mf(manifest_path);
  if (!mf) throw ParseError("cannot read " + manifest_path.string());
  nlohmann::json j;
  try {
    mf >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }
  const auto bin = manifest_path.parent_path() / j.at("binary").get<std::string>();
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw ParseError("cannot read " + bin.string());
  char magic[4];
  std::uint64_t n = 0, width = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(&width), sizeof width);
  if (!in || std::memcmp(magic, "LAFD", 4) != 0) throw ParseError(bin.string() + ": bad magic at offset 0");
  const auto shape_j = j.at("input_shape");
  const InputShape shape{shape_j.at(0).get<int>(), shape_j.at(1).get<int>(), shape_j.at(2).get<int>()};
  if (width != static_cast<std::uint64_t>(shape.flat()) || n != j.at("samples").get<std::uint64_t>()) {
    throw ParseError(bin.string() + ": header disagrees with manifest");
  }
  Matrix x(static_cast<Index>(n), static_cast<Index>(width));
  in.read(reinterpret_cast<char*>(x.data()), static_cast<std::streamsize>(n * width * sizeof(double)));
  std::vector<int> y(n);
  for (auto& v : y) {
    std::int32_t t = 0;
    in.read(reinterpret_cast<char*>(&t), sizeof t);
    v = t;
  }
  std::vector<SampleId> ids(n);
  in.read(reinterpret_cast<char*>(ids.data()), static_cast<std::streamsize>(n * sizeof(SampleId)));
  if (!in) throw ParseError(bin.string() + ": truncated payload");
  return LabeledDataset(std::move(x), std::move(y), std::move(ids), shape,
                        j.at("num_classes").get<int>(),
                        split_tag_from_string(j.at("split_tag").get<std::string>()));
}

}  // namespace laf
