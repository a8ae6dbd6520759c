// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#include "laf/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "laf/hash.hpp"

namespace laf {
namespace {

constexpr Index kEvalChunk = 512;

void build_small_cnn(ClassifierModel& m, nn::Rng& rng) {
  const InputShape expected{1, 28, 28};
  if (m.input_shape != expected) {
    throw ConfigError("small-cnn requires input shape 1x28x28, got " + m.input_shape.to_string());
  }
  if (m.rep_dim != 256) {
    throw ConfigError("small-cnn has a fixed representation width of 256, got " +
                      std::to_string(m.rep_dim));
  }
  auto& e = m.extractor;
  auto& c1 = e.emplace<nn::Conv2d>(m.input_shape, 16, 5, 1, 0, rng);
  e.emplace<nn::ReLU>(c1.out_width());
  auto& p1 = e.emplace<nn::MaxPool2d>(c1.out_shape(), 2);
  auto& c2 = e.emplace<nn::Conv2d>(p1.out_shape(), 32, 5, 1, 0, rng);
  e.emplace<nn::ReLU>(c2.out_width());
  auto& p2 = e.emplace<nn::MaxPool2d>(c2.out_shape(), 2);
  e.emplace<nn::Linear>(p2.out_width(), 256, rng);
  e.emplace<nn::ReLU>(256);

  auto& h = m.head;
  h.emplace<nn::Linear>(256, 128, rng);
  h.emplace<nn::ReLU>(128);
  h.emplace<nn::Linear>(128, m.num_classes, rng);
}

void build_mlp(ClassifierModel& m, const ArchOptions& opts, nn::Rng& rng) {
  if (m.rep_dim < 1) throw ConfigError("mlp: rep_dim must be positive");
  Index width = m.input_shape.flat();
  for (int hdim : opts.mlp_hidden) {
    if (hdim < 1) throw ConfigError("mlp: hidden widths must be positive");
    m.extractor.emplace<nn::Linear>(width, hdim, rng);
    m.extractor.emplace<nn::ReLU>(hdim);
    width = hdim;
  }
  m.extractor.emplace<nn::Linear>(width, m.rep_dim, rng);
  m.extractor.emplace<nn::ReLU>(m.rep_dim);

  m.head.emplace<nn::Linear>(m.rep_dim, 128, rng);
  m.head.emplace<nn::ReLU>(128);
  m.head.emplace<nn::Linear>(128, m.num_classes, rng);
}

// Stem conv + 4 stages of 2 basic blocks + representation and output linear
// layers: 18 weight layers.
void build_resnet18(ClassifierModel& m, const ArchOptions& opts, nn::Rng& rng) {
  const auto& s = m.input_shape;
  if (s.height < 8 || s.width < 8 || s.height % 8 != 0 || s.width % 8 != 0) {
    throw ConfigError("resnet18-like requires spatial dims divisible by 8 and >= 8, got " +
                      s.to_string());
  }
  const int w = opts.resnet_base_width;
  if (w < 1) throw ConfigError("resnet18-like: base width must be positive");
  auto& e = m.extractor;
  auto& stem = e.emplace<nn::Conv2d>(s, w, 3, 1, 1, rng);
  e.emplace<nn::ReLU>(stem.out_width());
  InputShape shape = stem.out_shape();
  const int widths[4] = {w, 2 * w, 4 * w, 8 * w};
  for (int stage = 0; stage < 4; ++stage) {
    for (int block = 0; block < 2; ++block) {
      const int stride = (stage > 0 && block == 0) ? 2 : 1;
      auto& b = e.emplace<nn::ResidualBlock>(shape, widths[stage], stride, rng);
      shape = b.out_shape();
    }
  }
  e.emplace<nn::GlobalAvgPool>(shape);
  e.emplace<nn::Linear>(shape.channels, m.rep_dim, rng);
  e.emplace<nn::ReLU>(m.rep_dim);

  m.head.emplace<nn::Linear>(m.rep_dim, m.num_classes, rng);
}

void check_batch(const ClassifierModel& m, const Matrix& batch) {
  if (batch.cols() != m.input_shape.flat()) {
    throw InputError("model expects inputs of shape " + m.input_shape.to_string() + " (width " +
                     std::to_string(m.input_shape.flat()) + "), got width " +
                     std::to_string(batch.cols()));
  }
}

}  // namespace

std::string to_string(ArchId arch) {
  switch (arch) {
    case ArchId::SmallCnn:
      return "small-cnn";
    case ArchId::Mlp:
      return "mlp";
    case ArchId::Resnet18Like:
      return "resnet18-like";
  }
  return "unknown";
}

ArchId arch_from_string(const std::string& s) {
  if (s == "small-cnn") return ArchId::SmallCnn;
  if (s == "mlp") return ArchId::Mlp;
  if (s == "resnet18-like") return ArchId::Resnet18Like;
  throw ConfigError("unsupported architecture '" + s + "'");
}

ClassifierModel build_model(ArchId arch, InputShape input_shape, int num_classes,
                            std::uint64_t seed, const ArchOptions& options) {
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (input_shape.channels < 1 || input_shape.height < 1 || input_shape.width < 1) {
    throw ConfigError("input shape must be positive, got " + input_shape.to_string());
  }
  ClassifierModel m;
  m.arch = arch;
  m.input_shape = input_shape;
  m.num_classes = num_classes;
  m.rep_dim = options.rep_dim;
  m.seed = seed;
  nn::Rng rng(seed);
  switch (arch) {
    case ArchId::SmallCnn:
      build_small_cnn(m, rng);
      break;
    case ArchId::Mlp:
      build_mlp(m, options, rng);
      break;
    case ArchId::Resnet18Like:
      build_resnet18(m, options, rng);
      break;
  }
  return m;
}

Matrix extract(const ClassifierModel& model, const Matrix& batch) {
  check_batch(model, batch);
  if (batch.rows() <= kEvalChunk) return model.extractor.forward(batch);
  Matrix out(batch.rows(), model.rep_dim);
  for (Index start = 0; start < batch.rows(); start += kEvalChunk) {
    const Index len = std::min(kEvalChunk, batch.rows() - start);
    out.middleRows(start, len) = model.extractor.forward(batch.middleRows(start, len));
  }
  return out;
}

Matrix classify(const ClassifierModel& model, const Matrix& reps) {
  if (reps.cols() != model.rep_dim) {
    throw InputError("classifier head expects width " + std::to_string(model.rep_dim) + ", got " +
                     std::to_string(reps.cols()));
  }
  return model.head.forward(reps);
}

Matrix predict(const ClassifierModel& model, const Matrix& batch) {
  return classify(model, extract(model, batch));
}

std::vector<int> predict_labels(const ClassifierModel& model, const Matrix& batch) {
  const Matrix logits = predict(model, batch);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Index i = 0; i < logits.rows(); ++i) {
    Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return out;
}

std::string model_hash(const ClassifierModel& model) {
  Fnv1a h;
  h.update(to_string(model.arch));
  for (const Matrix* p : model.extractor.params()) h.update(*p);
  for (const Matrix* p : model.head.params()) h.update(*p);
  return h.hex();
}

std::string head_hash(const ClassifierModel& model) {
  Fnv1a h;
  for (const Matrix* p : model.head.params()) h.update(*p);
  return h.hex();
}

ModelGrads zero_grads(const ClassifierModel& model) {
  return {model.extractor.zero_grads(), model.head.zero_grads()};
}

double cross_entropy_grad(const ClassifierModel& model, const Matrix& inputs,
                          std::span<const int> labels, ModelGrads& grads) {
  check_batch(model, inputs);
  nn::Cache ecache, hcache;
  const Matrix reps = model.extractor.forward(inputs, &ecache);
  const Matrix logits = model.head.forward(reps, &hcache);
  auto ce = nn::cross_entropy(logits, labels);
  const Matrix drep = model.head.backward(ce.grad, hcache, grads.head, true);
  model.extractor.backward(drep, ecache, grads.extractor, false);
  return ce.loss;
}

void ModelOptimizer::step(ClassifierModel& model, const ModelGrads& grads) {
  extractor_.step(model.extractor.params(), grads.extractor);
  head_.step(model.head.params(), grads.head);
}

TrainResult train_supervised(ClassifierModel model, const LabeledDataset& data,
                             std::span<const SampleId> ids, const TrainOptions& options,
                             const EpochCallback& on_epoch) {
  if (options.epochs < 1) throw PreconditionError("training requires epochs >= 1");
  if (options.batch_size < 1) throw PreconditionError("training requires batch_size >= 1");
  std::vector<SampleId> order(ids.begin(), ids.end());
  if (order.empty()) order = data.sample_ids();
  if (order.empty()) throw PreconditionError("training set is empty");

  nn::Rng rng(options.seed);
  ModelOptimizer opt(options.lr);
  TrainResult result;
  const auto n = order.size();
  const auto bs = static_cast<std::size_t>(options.batch_size);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    long batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::span<const SampleId> batch_ids(order.data() + start, std::min(bs, n - start));
      const Matrix x = data.gather_inputs(batch_ids);
      const std::vector<int> y = data.gather_labels(batch_ids);
      ModelGrads grads = zero_grads(model);
      const double loss = cross_entropy_grad(model, x, y, grads);
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch + 1) +
                                  ", batch " + std::to_string(batches + 1),
                              epoch + 1, batches + 1);
      }
      opt.step(model, grads);
      total += loss * static_cast<double>(batch_ids.size());
      ++batches;
    }
    const double mean = total / static_cast<double>(n);
    result.epoch_losses.push_back(mean);
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  result.model = std::move(model);
  return result;
}

TrainResult train_original(ClassifierModel model, const LabeledDataset& data,
                           const TrainOptions& options) {
  if (data.split_tag() != SplitTag::Train) {
    throw PreconditionError("train_original requires a train split");
  }
  return train_supervised(std::move(model), data, {}, options);
}

}  // namespace laf
