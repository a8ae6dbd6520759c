// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "laf/eval.hpp"
#include "laf/scenario.hpp"
#include "test_util.hpp"

namespace laf {
namespace {

using testing::random_matrix;

// One-hot inputs of their own label, C classes.
LabeledDataset one_hot_data(int n, int classes, SplitTag tag) {
  Matrix x = Matrix::Zero(n, classes);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    y[static_cast<std::size_t>(i)] = i % classes;
    x(i, i % classes) = 1.0;
  }
  return testing::make_dataset(x, y, classes, tag);
}

// Mlp whose logits equal its one-hot input, so it is always right on
// one_hot_data.
ClassifierModel identity_model(int classes) {
  ArchOptions o;
  o.rep_dim = classes;
  o.mlp_hidden = {};
  auto m = build_model(ArchId::Mlp, InputShape{1, 1, classes}, classes, 0, o);
  auto& rep = dynamic_cast<nn::Linear&>(m.extractor.layer(0));
  rep.weight().setIdentity();
  rep.bias().setZero();
  auto& h0 = dynamic_cast<nn::Linear&>(m.head.layer(0));
  h0.weight().setIdentity();  // 128 x C
  h0.bias().setZero();
  auto& h1 = dynamic_cast<nn::Linear&>(m.head.layer(2));
  h1.weight().setIdentity();  // C x 128
  h1.bias().setZero();
  return m;
}

ClassifierModel constant_model(int classes, int answer) {
  auto m = identity_model(classes);
  auto& h1 = dynamic_cast<nn::Linear&>(m.head.layer(2));
  h1.weight().setZero();
  h1.bias()(answer) = 1.0;
  return m;
}

TEST(Accuracy, PerfectAndConstantModels) {
  const auto d = one_hot_data(100, 10, SplitTag::Train);
  EXPECT_DOUBLE_EQ(accuracy(identity_model(10), d), 100.0);
  EXPECT_DOUBLE_EQ(accuracy(constant_model(10, 3), d), 10.0);
  EXPECT_THROW(accuracy(identity_model(10), d, std::vector<SampleId>{}), UndefinedMetricError);
}

TEST(AttackFeatures, SortedWithNegLogMax) {
  Matrix p(1, 3);
  p << 0.2, 0.5, 0.3;
  const Matrix f = attack_features(p);
  ASSERT_EQ(f.cols(), 4);
  EXPECT_DOUBLE_EQ(f(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(f(0, 1), 0.3);
  EXPECT_DOUBLE_EQ(f(0, 2), 0.2);
  EXPECT_NEAR(f(0, 3), -std::log(0.5), 1e-15);
}

Matrix softmax_features(Index n, std::uint64_t seed) {
  return attack_features(nn::softmax(random_matrix(n, 10, seed, 2.0)));
}

TEST(Attack, IdenticalDistributionsGiveCoinFlip) {
  const AttackModel a = fit_attack(softmax_features(1000, 1), softmax_features(1000, 2));
  const double asr = attack_success_rate(a, softmax_features(1000, 3));
  EXPECT_NEAR(asr, 50.0, 5.0);
}

TEST(Attack, AlwaysMemberScoresHundred) {
  const auto a = AttackModel::always_member(11);
  EXPECT_DOUBLE_EQ(attack_success_rate(a, softmax_features(1000, 4)), 100.0);
}

TEST(Attack, SeparatesDistinctDistributions) {
  Matrix members = softmax_features(300, 5);
  Matrix others = softmax_features(300, 6);
  members.col(10).array() -= 3.0;
  const AttackModel a = fit_attack(members, others);
  Matrix probe = softmax_features(200, 7);
  probe.col(10).array() -= 3.0;
  EXPECT_GT(attack_success_rate(a, probe), 90.0);
  EXPECT_LT(attack_success_rate(a, softmax_features(200, 8)), 10.0);
}

TEST(Attack, RejectsEmptyAndMismatchedInputs) {
  EXPECT_THROW(fit_attack(Matrix(0, 3), Matrix::Ones(2, 3)), PreconditionError);
  EXPECT_THROW(fit_attack(Matrix::Ones(2, 3), Matrix::Ones(2, 4)), PreconditionError);
  const auto a = fit_attack(softmax_features(20, 1), softmax_features(20, 2));
  EXPECT_THROW(attack_success_rate(a, Matrix(0, 11)), UndefinedMetricError);
  EXPECT_THROW(a.scores(Matrix::Ones(1, 3)), InputError);
}

TEST(MembershipInference, UntrainedModelIsNearChance) {
  // The model never saw any data, so members and non-members are
  // exchangeable.
  const auto [train, test] = make_blobs(10, 250, 8, 1.0, 3);
  const auto m = testing::toy_model(8, 10, 16, 4);
  const auto ids = train.sample_ids();
  const std::vector<SampleId> members(ids.begin(), ids.begin() + 1000);
  const std::vector<SampleId> probes(ids.begin() + 1000, ids.end());
  const auto r = membership_inference_asr(m, train, members, test, probes, 0);
  EXPECT_EQ(r.pool_size, 500u);
  EXPECT_FALSE(r.warning.has_value());
  EXPECT_NEAR(r.asr, 50.0, 7.0);
}

TEST(MembershipInference, SmallPoolsCarryWarning) {
  const auto [train, test] = make_blobs(3, 10, 4, 1.0, 1);
  const auto m = testing::toy_model(4, 3, 5, 2);
  const auto& ids = train.sample_ids();
  const auto r = membership_inference_asr(m, train, ids, test, ids, 0);
  EXPECT_EQ(r.pool_size, 6u);
  ASSERT_TRUE(r.warning.has_value());
}

TEST(Report, ClassRemovalCoversTestSetOnce) {
  const auto [train, test] = make_blobs(4, 40, 6, 0.5, 1);
  const auto split = make_class_removal_split(train, 2);
  const auto m = testing::toy_model(6, 4, 8, 1);
  const auto r = metrics_report(m, train, test, split, 0);
  ASSERT_TRUE(r.test_r && r.test_f);
  EXPECT_FALSE(r.test.has_value());
  const double overall = accuracy(m, test);
  // Test_r covers 3/4 of the balanced test set and Test_f the rest.
  EXPECT_NEAR(0.75 * *r.test_r + 0.25 * *r.test_f, overall, 1e-9);
}

TEST(Report, DeterministicAndSerializable) {
  const auto [train, test] = make_blobs(4, 40, 6, 0.5, 2);
  const auto split = make_data_removal_split(train, 0.4, 2, 3, 1);
  const auto m = testing::toy_model(6, 4, 8, 2);
  auto a = metrics_report(m, train, test, split, 5);
  const auto b = metrics_report(m, train, test, split, 5);
  EXPECT_EQ(to_json(a), to_json(b));
  a.method = "laf";
  const auto back = report_from_json(nlohmann::json::parse(to_json(a).dump()));
  EXPECT_EQ(to_json(back), to_json(a));
  EXPECT_EQ(csv_row(back), csv_row(a));
  const std::string header = csv_header(), row = csv_row(a);
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
  EXPECT_THROW(metrics_report(m, train, train, split, 5), PreconditionError);
  EXPECT_THROW(report_from_json(nlohmann::json{{"scenario", "data-removal"}}), ParseError);
}

TEST(Pca, ExactOnRankTwoData) {
  const Matrix basis = random_matrix(2, 6, 1);
  const Matrix coeffs = random_matrix(40, 2, 2);
  const Matrix points = (coeffs * basis).rowwise() + random_matrix(1, 6, 3).row(0);
  Matrix comp;
  RowVector center;
  const Matrix y = pca2d(points, &comp, &center);
  ASSERT_EQ(y.rows(), 40);
  ASSERT_EQ(y.cols(), 2);
  const Matrix recon = (y * comp.transpose()).rowwise() + center;
  EXPECT_LT((recon - points).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(pca2d(points), y);
  EXPECT_GE(y.col(0).squaredNorm(), y.col(1).squaredNorm());
}

TEST(Pca, RejectsTooFewPoints) {
  EXPECT_THROW(pca2d(random_matrix(1, 4, 1)), PreconditionError);
}

TEST(Export, WritesOneRowPerSample) {
  const auto [train, test] = make_blobs(3, 10, 4, 0.5, 1);
  const auto m = testing::toy_model(4, 3, 5, 1);
  const auto t = export_representations(m, train, train.sample_ids(), Projector::Pca2d);
  EXPECT_EQ(t.coords.rows(), static_cast<Index>(train.size()));
  const auto dir = testing::scratch_dir("export");
  write_representation_csv(t, dir / "reps.csv");
  std::ifstream in(dir / "reps.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "sample_id,label,x,y");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, static_cast<int>(train.size()));

  const auto raw = export_representations(m, train, train.sample_ids(), Projector::None);
  EXPECT_EQ(raw.coords.cols(), 5);
  EXPECT_THROW(projector_from_string("tsne"), ConfigError);
}

}  // namespace
}  // namespace laf
