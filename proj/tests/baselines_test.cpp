// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <memory>

#include "laf/baselines.hpp"
#include "laf/eval.hpp"
#include "test_util.hpp"

namespace laf {
namespace {

using testing::numeric_grads;
using testing::random_matrix;
using testing::relative_error;

TEST(NegGrad, LossIsRemainingMinusForgetting) {
  auto m = testing::toy_model(4, 3, 5, 1);
  const Matrix xr = random_matrix(4, 4, 1), xf = random_matrix(4, 4, 2);
  const std::vector<int> yr{0, 1, 2, 0}, yf{2, 2, 1, 0};
  double ce_r = 0.0, ce_f = 0.0;
  const double loss = neggrad_loss_grad(m, xr, yr, xf, yf, nullptr, &ce_r, &ce_f);
  ModelGrads scratch = zero_grads(m);
  EXPECT_NEAR(ce_r, cross_entropy_grad(m, xr, yr, scratch), 1e-12);
  EXPECT_NEAR(ce_f, cross_entropy_grad(m, xf, yf, scratch), 1e-12);
  EXPECT_NEAR(loss, ce_r - ce_f, 1e-12);
}

TEST(NegGrad, GradientAscendsOnForgettingBatch) {
  auto m = testing::toy_model(4, 3, 5, 2);
  const Matrix xr = random_matrix(3, 4, 3), xf = random_matrix(3, 4, 4);
  const std::vector<int> yr{0, 1, 2}, yf{1, 1, 0};
  ModelGrads g = zero_grads(m);
  neggrad_loss_grad(m, xr, yr, xf, yf, &g);
  auto params = m.extractor.params();
  for (auto* p : m.head.params()) params.push_back(p);
  std::vector<Matrix> analytic = g.extractor;
  analytic.insert(analytic.end(), g.head.begin(), g.head.end());
  auto f = [&] { return neggrad_loss_grad(m, xr, yr, xf, yf, nullptr); };
  EXPECT_LT(relative_error(analytic, numeric_grads(params, f)), 1e-4);

  // Identical remaining and forgetting batches cancel exactly.
  ModelGrads ng = zero_grads(m);
  EXPECT_NEAR(neggrad_loss_grad(m, xf, yf, xf, yf, &ng), 0.0, 1e-15);
  for (const auto& gm : ng.head) EXPECT_LT(gm.cwiseAbs().maxCoeff(), 1e-12);
  const std::vector<int> y2{1, 1};
  EXPECT_THROW(neggrad_loss_grad(m, xr, yr, xf.topRows(2), y2, nullptr), PreconditionError);
}

TEST(NegGrad, RaisesForgettingLoss) {
  const auto [train, test] = make_blobs(4, 50, 6, 0.8, 3);
  TrainOptions o;
  o.epochs = 5;
  const auto g = train_original(testing::toy_model(6, 4, 8, 3), train, o).model;
  const auto split = make_data_removal_split(train, 0.5, 0, 0, 1);
  BaselineSpec spec{BaselineMethod::NegGrad, 3, 1e-3, 8, 0};
  NegGradTrace t;
  neggrad_baseline(g, train, split, spec, &t);
  ASSERT_EQ(t.epoch_ce_f.size(), 3u);
  EXPECT_GT(t.epoch_ce_f.back(), t.epoch_ce_f.front());
}

TEST(Retrain, NeverTouchesForgettingInputs) {
  const auto [train, test] = make_blobs(4, 40, 6, 0.5, 4);
  const auto split = make_class_removal_split(train, 0);
  auto audit = std::make_shared<AccessAudit>();
  BaselineSpec spec{BaselineMethod::Retrain, 5, 1e-2, 16, 0};
  ArchOptions opts;
  opts.rep_dim = 8;
  opts.mlp_hidden = {7};
  const auto m = retrain_baseline(ArchId::Mlp, train.with_audit(audit), split, spec, opts);
  EXPECT_EQ(audit->input_reads(split.forgetting_ids), 0u);
  EXPECT_GT(audit->input_reads(split.remaining_ids), 0u);
  const auto r = metrics_report(m, train, test, split, 0);
  EXPECT_DOUBLE_EQ(*r.test_f, 0.0);
  EXPECT_GT(*r.test_r, 90.0);
}

TEST(Retrain, RejectsZeroEpochs) {
  const auto [train, test] = make_blobs(3, 10, 4, 0.5, 1);
  BaselineSpec spec;
  spec.epochs = 0;
  EXPECT_THROW(retrain_baseline(ArchId::Mlp, train, make_class_removal_split(train, 0), spec),
               PreconditionError);
}

}  // namespace
}  // namespace laf
