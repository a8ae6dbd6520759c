// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "laf/common.hpp"
#include "laf/dataset.hpp"
#include "laf/nn.hpp"

namespace laf {

enum class ArchId { SmallCnn, Mlp, Resnet18Like };

std::string to_string(ArchId arch);
ArchId arch_from_string(const std::string& s);

struct ArchOptions {
  int rep_dim = 256;
  /// Hidden widths of the mlp extractor before the representation layer.
  std::vector<int> mlp_hidden = {128};
  /// Channel width of the first resnet stage (64 for a standard ResNet-18).
  int resnet_base_width = 64;
};

/// A classifier split into a representation extractor and a classifier head.
/// predict(x) is exactly classify(extract(x)).
struct ClassifierModel {
  ArchId arch = ArchId::SmallCnn;
  InputShape input_shape;
  int num_classes = 0;
  int rep_dim = 0;
  std::uint64_t seed = 0;
  nn::Sequential extractor;
  nn::Sequential head;
};

/// Builds a freshly initialized model. Identical arguments give bit-identical
/// parameters.
ClassifierModel build_model(ArchId arch, InputShape input_shape, int num_classes,
                            std::uint64_t seed, const ArchOptions& options = {});

Matrix extract(const ClassifierModel& model, const Matrix& batch);
Matrix classify(const ClassifierModel& model, const Matrix& reps);
Matrix predict(const ClassifierModel& model, const Matrix& batch);

/// Row-wise argmax of predict(), evaluated in chunks.
std::vector<int> predict_labels(const ClassifierModel& model, const Matrix& batch);

/// Hex FNV-1a digest over every parameter of the extractor and head.
std::string model_hash(const ClassifierModel& model);
/// Digest over the head parameters only.
std::string head_hash(const ClassifierModel& model);

/// Gradient buffers for the extractor and head, aligned with their params().
struct ModelGrads {
  std::vector<Matrix> extractor;
  std::vector<Matrix> head;
};

ModelGrads zero_grads(const ClassifierModel& model);

/// Mean cross-entropy of `model` on (inputs, labels) with gradients for every
/// parameter.
double cross_entropy_grad(const ClassifierModel& model, const Matrix& inputs,
                          std::span<const int> labels, ModelGrads& grads);

/// Adam state for a whole model (extractor followed by head).
class ModelOptimizer {
 public:
  explicit ModelOptimizer(double lr) : extractor_(lr), head_(lr) {}
  void step(ClassifierModel& model, const ModelGrads& grads);

 private:
  nn::Adam extractor_;
  nn::Adam head_;
};

struct TrainOptions {
  int epochs = 10;
  double lr = 1e-3;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

struct TrainResult {
  ClassifierModel model;
  std::vector<double> epoch_losses;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Mini-batch Adam on cross-entropy over `ids` (all samples when empty).
/// Throws DivergenceError on a non-finite batch loss.
TrainResult train_supervised(ClassifierModel model, const LabeledDataset& data,
                             std::span<const SampleId> ids, const TrainOptions& options,
                             const EpochCallback& on_epoch = {});

/// Trains the original model g_D on every sample of a training split.
TrainResult train_original(ClassifierModel model, const LabeledDataset& data,
                           const TrainOptions& options);

}  // namespace laf
