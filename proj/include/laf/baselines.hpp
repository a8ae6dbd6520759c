// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "laf/model.hpp"
#include "laf/scenario.hpp"

namespace laf {

enum class BaselineMethod { Retrain, NegGrad };

std::string to_string(BaselineMethod m);

struct BaselineSpec {
  BaselineMethod method = BaselineMethod::Retrain;
  int epochs = 20;
  double lr = 1e-3;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

/// Fresh model of the same architecture trained on remaining ids only.
ClassifierModel retrain_baseline(ArchId arch, const LabeledDataset& data, const ForgetSplit& split,
                                 const BaselineSpec& spec, const ArchOptions& arch_options = {});

/// CE(remaining batch) - CE(forgetting batch) for one equal-size batch pair.
/// Gradients over the whole model are added to `grads` when non-null.
double neggrad_loss_grad(const ClassifierModel& model, const Matrix& x_r, std::span<const int> y_r,
                         const Matrix& x_f, std::span<const int> y_f, ModelGrads* grads,
                         double* ce_r = nullptr, double* ce_f = nullptr);

struct NegGradTrace {
  std::vector<double> epoch_ce_f;  // mean forgetting-batch CE per epoch
  std::vector<double> epoch_ce_r;
};

/// Fine-tunes model_d on paired batches with the NegGrad objective. Each
/// epoch walks D_f once against a fresh equal-size remaining sample.
ClassifierModel neggrad_baseline(const ClassifierModel& model_d, const LabeledDataset& data,
                                 const ForgetSplit& split, const BaselineSpec& spec,
                                 NegGradTrace* trace = nullptr);

}  // namespace laf
