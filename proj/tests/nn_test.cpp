// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <memory>

#include "laf/model.hpp"
#include "laf/nn.hpp"
#include "test_util.hpp"

namespace laf {
namespace {

using testing::numeric_grad;
using testing::numeric_grads;
using testing::random_matrix;
using testing::relative_error;

constexpr double kTol = 1e-4;

// Checks parameter and input gradients of `layer` under loss = <forward(x), w>.
void check_layer(nn::Layer& layer, Index batch, std::uint64_t seed) {
  Matrix x = random_matrix(batch, layer.in_width(), seed);
  const Matrix w = random_matrix(batch, layer.out_width(), seed + 1);
  auto loss = [&] { return layer.forward(x, nullptr).cwiseProduct(w).sum(); };

  std::vector<Matrix*> params;
  layer.collect_params(params);
  std::vector<Matrix> grads;
  for (auto* p : params) grads.push_back(Matrix::Zero(p->rows(), p->cols()));
  nn::Cache cache;
  layer.forward(x, &cache);
  const Matrix gx = layer.backward(w, cache, grads, true);

  if (!params.empty()) {
    EXPECT_LT(relative_error(grads, numeric_grads(params, loss)), kTol) << layer.kind();
  }
  EXPECT_LT(relative_error({gx}, numeric_grad(x, loss)), kTol) << layer.kind();
}

TEST(LayerGradients, Linear) {
  nn::Rng rng(1);
  nn::Linear l(5, 4, rng);
  check_layer(l, 3, 10);
}

TEST(LayerGradients, ReLU) {
  nn::ReLU r(6);
  check_layer(r, 4, 11);
}

TEST(LayerGradients, Conv2dWithStrideAndPadding) {
  nn::Rng rng(2);
  nn::Conv2d c(InputShape{2, 5, 5}, 3, 3, 2, 1, rng);
  check_layer(c, 2, 12);
}

TEST(LayerGradients, MaxPool) {
  nn::MaxPool2d p(InputShape{2, 4, 4}, 2);
  check_layer(p, 2, 13);
}

TEST(LayerGradients, GlobalAvgPool) {
  nn::GlobalAvgPool p(InputShape{3, 3, 3});
  check_layer(p, 2, 14);
}

TEST(LayerGradients, ResidualBlockWithProjection) {
  nn::Rng rng(3);
  nn::ResidualBlock b(InputShape{2, 4, 4}, 3, 2, rng);
  check_layer(b, 2, 15);
}

TEST(LayerGradients, Sequential) {
  nn::Rng rng(4);
  nn::Sequential s;
  s.emplace<nn::Linear>(4, 6, rng);
  s.emplace<nn::ReLU>(6);
  s.emplace<nn::Linear>(6, 3, rng);
  check_layer(s, 5, 16);
}

TEST(LayerGradients, FrozenParametersStillPropagateInput) {
  nn::Rng rng(5);
  nn::Linear l(3, 2, rng);
  const Matrix x = random_matrix(2, 3, 1);
  nn::Cache cache;
  l.forward(x, &cache);
  const Matrix gx = l.backward(Matrix::Ones(2, 2), cache, {}, true);
  EXPECT_EQ(gx.rows(), 2);
  EXPECT_EQ(gx.cols(), 3);
}

TEST(CrossEntropy, GradientMatchesDifferences) {
  Matrix logits = random_matrix(4, 5, 20);
  const std::vector<int> y{0, 3, 4, 1};
  const auto lg = nn::cross_entropy(logits, y);
  auto f = [&] { return nn::cross_entropy(logits, y).loss; };
  EXPECT_LT(relative_error({lg.grad}, numeric_grad(logits, f)), kTol);
}

TEST(CrossEntropy, RowsAverageToLoss) {
  const Matrix logits = random_matrix(6, 3, 21);
  const std::vector<int> y{0, 1, 2, 2, 1, 0};
  EXPECT_NEAR(nn::cross_entropy_rows(logits, y).mean(), nn::cross_entropy(logits, y).loss, 1e-12);
}

TEST(Softmax, StableForLargeLogits) {
  Matrix logits(1, 3);
  logits << 1000.0, 1001.0, 999.0;
  const Matrix p = nn::softmax(logits);
  EXPECT_TRUE(nn::all_finite(p));
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  EXPECT_GT(p(0, 1), p(0, 0));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Matrix p = Matrix::Constant(1, 3, 1.0);
  Matrix g(1, 3);
  g << 0.5, -2.0, 1e-3;
  nn::Adam adam(0.1);
  adam.step({&p}, {g});
  // Bias-corrected first step is lr * sign(g) up to eps.
  EXPECT_NEAR(p(0, 0), 0.9, 1e-6);
  EXPECT_NEAR(p(0, 1), 1.1, 1e-6);
  EXPECT_NEAR(p(0, 2), 0.9, 1e-4);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Model, CrossEntropyGradientOverWholeModel) {
  auto m = testing::toy_model(4, 3, 5, 7);
  const Matrix x = random_matrix(6, 4, 30);
  const std::vector<int> y{0, 1, 2, 0, 1, 2};
  ModelGrads g = zero_grads(m);
  cross_entropy_grad(m, x, y, g);
  auto f = [&] {
    ModelGrads scratch = zero_grads(m);
    return cross_entropy_grad(m, x, y, scratch);
  };
  auto params = m.extractor.params();
  for (auto* p : m.head.params()) params.push_back(p);
  std::vector<Matrix> analytic = g.extractor;
  analytic.insert(analytic.end(), g.head.begin(), g.head.end());
  EXPECT_LT(relative_error(analytic, numeric_grads(params, f)), kTol);
}

TEST(Model, PredictIsClassifyOfExtract) {
  struct Case {
    ArchId arch;
    InputShape shape;
    int rep_dim;
  };
  for (const Case& c : {Case{ArchId::SmallCnn, {1, 28, 28}, 256}, Case{ArchId::Mlp, {1, 1, 12}, 16},
                        Case{ArchId::Resnet18Like, {1, 16, 16}, 16}}) {
    ArchOptions o;
    o.rep_dim = c.rep_dim;
    o.resnet_base_width = 4;
    const auto m = build_model(c.arch, c.shape, 10, 3, o);
    const Matrix x = random_matrix(3, c.shape.flat(), 40);
    EXPECT_TRUE(predict(m, x).isApprox(classify(m, extract(m, x)))) << to_string(c.arch);
    EXPECT_EQ(extract(m, x).cols(), c.rep_dim);
    EXPECT_EQ(extract(m, x), extract(m, x));
    EXPECT_EQ(extract(m, Matrix(0, c.shape.flat())).rows(), 0);
    const Matrix p = nn::softmax(predict(m, x.topRows(1)));
    EXPECT_EQ(p.cols(), 10);
    EXPECT_NEAR(p.sum(), 1.0, 1e-6);
  }
}

TEST(Model, SmallCnnLayout) {
  const auto m = build_model(ArchId::SmallCnn, InputShape{1, 28, 28}, 10, 0);
  EXPECT_EQ(m.rep_dim, 256);
  std::vector<int> conv_channels;
  for (std::size_t i = 0; i < m.extractor.size(); ++i) {
    if (const auto* c = dynamic_cast<const nn::Conv2d*>(&m.extractor.layer(i))) {
      conv_channels.push_back(c->out_channels());
    }
  }
  EXPECT_EQ(conv_channels, (std::vector<int>{16, 32}));
  EXPECT_EQ(m.head.in_width(), 256);
  EXPECT_EQ(m.head.layer(0).out_width(), 128);
  EXPECT_EQ(m.head.out_width(), 10);
  EXPECT_THROW(build_model(ArchId::SmallCnn, InputShape{3, 32, 32}, 10, 0), ConfigError);
}

TEST(Model, TrainingRejectsZeroEpochs) {
  auto [train, test] = make_blobs(3, 10, 4, 0.5, 1);
  TrainOptions o;
  o.epochs = 0;
  EXPECT_THROW(train_original(testing::toy_model(4, 3, 5, 1), train, o), PreconditionError);
}

TEST(Model, TrainingFitsSeparableBlobs) {
  auto [train, test] = make_blobs(3, 50, 4, 0.3, 2);
  TrainOptions o;
  o.epochs = 20;
  const auto r = train_original(testing::toy_model(4, 3, 8, 2), train, o);
  EXPECT_LT(r.epoch_losses.back(), r.epoch_losses.front());
  const auto pred = predict_labels(r.model, test.gather_inputs(test.sample_ids()));
  const auto labels = test.labels();
  int hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  EXPECT_GT(hits, static_cast<int>(0.9 * pred.size()));
}

TEST(Model, SameSeedSameParameters) {
  const auto a = testing::toy_model(4, 3, 5, 9);
  const auto b = testing::toy_model(4, 3, 5, 9);
  const auto c = testing::toy_model(4, 3, 5, 10);
  EXPECT_EQ(model_hash(a), model_hash(b));
  EXPECT_NE(model_hash(a), model_hash(c));
}

TEST(Model, RejectsWrongInputWidth) {
  const auto m = testing::toy_model(4, 3, 5, 1);
  EXPECT_THROW(predict(m, Matrix::Zero(2, 5)), InputError);
  EXPECT_THROW(build_model(ArchId::Mlp, InputShape{1, 1, 4}, 1, 0), ConfigError);
}

}  // namespace
}  // namespace laf
