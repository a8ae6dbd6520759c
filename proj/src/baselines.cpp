// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#include "laf/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace laf {

std::string to_string(BaselineMethod m) { return m == BaselineMethod::Retrain ? "retrain" : "neggrad"; }

ClassifierModel retrain_baseline(ArchId arch, const LabeledDataset& data, const ForgetSplit& split,
                                 const BaselineSpec& spec, const ArchOptions& arch_options) {
  if (spec.epochs < 1) throw PreconditionError("retrain requires epochs >= 1");
  if (split.remaining_ids.empty()) throw PreconditionError("retrain: empty remaining set");
  ClassifierModel fresh = build_model(arch, data.input_shape(), data.num_classes(), spec.seed, arch_options);
  TrainOptions opts{spec.epochs, spec.lr, spec.batch_size, spec.seed};
  return train_supervised(std::move(fresh), data, split.remaining_ids, opts).model;
}

double neggrad_loss_grad(const ClassifierModel& model, const Matrix& x_r, std::span<const int> y_r,
                         const Matrix& x_f, std::span<const int> y_f, ModelGrads* grads,
                         double* ce_r, double* ce_f) {
  if (x_r.rows() != x_f.rows()) throw PreconditionError("neggrad: batch sizes differ");
  nn::Cache er, hr, ef, hf;
  const bool g = grads != nullptr;
  const Matrix reps_r = model.extractor.forward(x_r, g ? &er : nullptr);
  const Matrix logits_r = model.head.forward(reps_r, g ? &hr : nullptr);
  const Matrix reps_f = model.extractor.forward(x_f, g ? &ef : nullptr);
  const Matrix logits_f = model.head.forward(reps_f, g ? &hf : nullptr);
  auto lr = nn::cross_entropy(logits_r, y_r);
  auto lf = nn::cross_entropy(logits_f, y_f);
  if (ce_r) *ce_r = lr.loss;
  if (ce_f) *ce_f = lf.loss;
  if (g) {
    const Matrix dr = model.head.backward(lr.grad, hr, grads->head, true);
    model.extractor.backward(dr, er, grads->extractor, false);
    const Matrix neg = -lf.grad;
    const Matrix df = model.head.backward(neg, hf, grads->head, true);
    model.extractor.backward(df, ef, grads->extractor, false);
  }
  return lr.loss - lf.loss;
}

ClassifierModel neggrad_baseline(const ClassifierModel& model_d, const LabeledDataset& data,
                                 const ForgetSplit& split, const BaselineSpec& spec,
                                 NegGradTrace* trace) {
  if (spec.epochs < 1) throw PreconditionError("neggrad requires epochs >= 1");
  if (spec.batch_size < 1) throw PreconditionError("neggrad requires batch_size >= 1");
  if (split.forgetting_ids.empty() || split.remaining_ids.empty()) {
    throw PreconditionError("neggrad: both remaining and forgetting sets must be non-empty");
  }
  ClassifierModel model = model_d;
  ModelOptimizer opt(spec.lr);
  std::mt19937_64 rng(spec.seed);
  const std::size_t n_f = split.forgetting_ids.size();
  const auto bs = static_cast<std::size_t>(spec.batch_size);
  double last_r = 0.0, last_f = 0.0;
  for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
    std::vector<SampleId> f_ids = split.forgetting_ids;
    std::shuffle(f_ids.begin(), f_ids.end(), rng);
    std::vector<SampleId> r_ids;
    r_ids.reserve(n_f);
    std::uniform_int_distribution<std::size_t> pick(0, split.remaining_ids.size() - 1);
    if (split.remaining_ids.size() >= n_f) {
      r_ids = split.remaining_ids;
      std::shuffle(r_ids.begin(), r_ids.end(), rng);
      r_ids.resize(n_f);
    } else {
      for (std::size_t i = 0; i < n_f; ++i) r_ids.push_back(split.remaining_ids[pick(rng)]);
    }
    double sum_r = 0.0, sum_f = 0.0;
    int batch = 0;
    for (std::size_t start = 0; start < n_f; start += bs) {
      const std::size_t len = std::min(bs, n_f - start);
      const std::span<const SampleId> fs(f_ids.data() + start, len);
      const std::span<const SampleId> rs(r_ids.data() + start, len);
      ++batch;
      ModelGrads grads = zero_grads(model);
      double ce_r = 0.0, ce_f = 0.0;
      const double loss = neggrad_loss_grad(model, data.gather_inputs(rs), data.gather_labels(rs),
                                            data.gather_inputs(fs), data.gather_labels(fs), &grads,
                                            &ce_r, &ce_f);
      if (!std::isfinite(loss)) {
        throw DivergenceError("neggrad diverged at epoch " + std::to_string(epoch) + ", batch " +
                                  std::to_string(batch) + "; last finite CE_r " +
                                  std::to_string(last_r) + ", CE_f " + std::to_string(last_f),
                              epoch, batch);
      }
      last_r = ce_r;
      last_f = ce_f;
      sum_r += ce_r;
      sum_f += ce_f;
      opt.step(model, grads);
    }
    if (trace) {
      trace->epoch_ce_r.push_back(sum_r / batch);
      trace->epoch_ce_f.push_back(sum_f / batch);
    }
  }
  return model;
}

}  // namespace laf
