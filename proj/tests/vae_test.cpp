// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "laf/vae.hpp"
#include "test_util.hpp"

namespace laf {
namespace {

using testing::numeric_grad;
using testing::numeric_grads;
using testing::random_matrix;
using testing::relative_error;

std::vector<Matrix*> vae_params(VaeModel& v) {
  auto p = v.encoder.params();
  for (auto* q : v.decoder.params()) p.push_back(q);
  return p;
}

TEST(Kl, ZeroAtStandardNormal) {
  EXPECT_NEAR(kl_standard_normal(RowVector::Zero(4), RowVector::Ones(4)), 0.0, 1e-15);
}

TEST(Kl, ClosedFormOneDimension) {
  RowVector mu(1), sigma(1);
  mu << 1.0;
  sigma << 2.0;
  EXPECT_NEAR(kl_standard_normal(mu, sigma), 0.5 * (1.0 + 4.0 - 1.0 - std::log(4.0)), 1e-12);
}

TEST(Kl, RejectsNonPositiveSigma) {
  RowVector mu = RowVector::Zero(2);
  RowVector sigma(2);
  sigma << 1.0, 0.0;
  EXPECT_THROW(kl_standard_normal(mu, sigma), DomainError);
}

TEST(Kl, MatchesMonteCarloEstimate) {
  RowVector mu(3), sigma(3);
  mu << 0.5, -1.0, 0.3;
  sigma << 0.8, 1.5, 0.4;
  const double exact = kl_standard_normal(mu, sigma);

  // E_q[log q(z) - log p(z)] with z ~ q.
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n01;
  const int samples = 1'000'000;
  double acc = 0.0;
  for (int s = 0; s < samples; ++s) {
    double term = 0.0;
    for (Index i = 0; i < 3; ++i) {
      const double e = n01(rng);
      const double z = mu(i) + sigma(i) * e;
      term += -std::log(sigma(i)) - 0.5 * e * e + 0.5 * z * z;
    }
    acc += term;
  }
  const double mc = acc / samples;
  EXPECT_LT(std::abs(mc - exact) / exact, 0.01) << "exact " << exact << " mc " << mc;
}

TEST(Kl, BatchRowsMatchSingleRow) {
  GaussianParams p{random_matrix(3, 4, 1), random_matrix(3, 4, 2).array().exp()};
  const Vector rows = kl_standard_normal(p);
  for (Index r = 0; r < 3; ++r) {
    EXPECT_NEAR(rows(r), kl_standard_normal(p.mu.row(r), p.sigma.row(r)), 1e-12);
  }
}

TEST(Reparameterize, MomentsMatchPosterior) {
  const Index n = 200000;
  GaussianParams p{Matrix(n, 2), Matrix(n, 2)};
  p.mu.col(0).setConstant(1.5);
  p.mu.col(1).setConstant(-0.5);
  p.sigma.col(0).setConstant(0.3);
  p.sigma.col(1).setConstant(2.0);
  const Matrix z = reparameterize(p, standard_normal(n, 2, 99));
  const RowVector mean = z.colwise().mean();
  const RowVector sd = ((z.rowwise() - mean).array().square().colwise().sum() / (n - 1)).sqrt();
  EXPECT_NEAR(mean(0), 1.5, 0.01);
  EXPECT_NEAR(mean(1), -0.5, 0.02);
  EXPECT_NEAR(sd(0), 0.3, 0.005);
  EXPECT_NEAR(sd(1), 2.0, 0.02);
}

TEST(Reparameterize, RejectsShapeMismatch) {
  GaussianParams p{Matrix::Zero(2, 3), Matrix::Ones(2, 3)};
  EXPECT_THROW(reparameterize(p, Matrix::Zero(2, 2)), PreconditionError);
}

TEST(StandardNormal, SeedDeterminesDraws) {
  EXPECT_EQ(standard_normal(3, 4, 5), standard_normal(3, 4, 5));
  EXPECT_NE(standard_normal(3, 4, 5), standard_normal(3, 4, 6));
}

TEST(Vae, ShapesAndRoleTags) {
  const auto v = build_vae(VaeRole::HF, 12, 3, 1);
  EXPECT_EQ(to_string(v.role), "h_f");
  const auto p = encode(v, random_matrix(5, 12, 1));
  EXPECT_EQ(p.mu.cols(), 3);
  EXPECT_TRUE((p.sigma.array() > 0).all());
  EXPECT_EQ(reconstruct(v, random_matrix(5, 12, 1), 4).cols(), 12);
  EXPECT_THROW(encode(v, random_matrix(5, 11, 1)), InputError);
}

class VaeLossGradient : public ::testing::TestWithParam<ReconReduction> {};

TEST_P(VaeLossGradient, MatchesFiniteDifferences) {
  auto v = build_vae(VaeRole::H, 6, 2, 3);
  const Matrix reps = random_matrix(4, 6, 7);
  const Matrix noise = standard_normal(4, 2, 8);
  VaeGrads g = zero_grads(v);
  const double value = vae_loss_grad(v, reps, noise, g, GetParam());
  EXPECT_NEAR(value, vae_loss_with_noise(v, reps, noise, GetParam()), 1e-12);

  std::vector<Matrix> analytic = g.encoder;
  analytic.insert(analytic.end(), g.decoder.begin(), g.decoder.end());
  auto f = [&] { return vae_loss_with_noise(v, reps, noise, GetParam()); };
  EXPECT_LT(relative_error(analytic, numeric_grads(vae_params(v), f)), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Reductions, VaeLossGradient,
                         ::testing::Values(ReconReduction::Mean, ReconReduction::Sum),
                         [](const auto& info) { return to_string(info.param); });

TEST(VaeTrace, InputGradientMatchesDifferences) {
  const auto v = build_vae(VaeRole::H, 5, 2, 4);
  Matrix reps = random_matrix(3, 5, 9);
  const Matrix noise = standard_normal(3, 2, 10);
  const Matrix w = random_matrix(3, 5, 11);
  const VaeTrace t(v, reps, noise);
  const Matrix g = t.backward(w, nullptr, nullptr, nullptr);
  auto f = [&] { return VaeTrace(v, reps, noise).recon().cwiseProduct(w).sum(); };
  EXPECT_LT(relative_error({g}, numeric_grad(reps, f)), 1e-4);
}

TEST(Vae, TrainingLowersLoss) {
  const Matrix reps = random_matrix(200, 6, 12);
  VaeTrainOptions o;
  o.epochs = 15;
  o.latent_dim = 3;
  const auto r = train_vae(VaeRole::H, reps, o);
  ASSERT_EQ(r.epoch_losses.size(), 15u);
  EXPECT_LT(r.epoch_losses.back(), r.epoch_losses.front());
}

TEST(Vae, ReductionNamesRoundTrip) {
  for (auto r : {ReconReduction::Mean, ReconReduction::Sum}) {
    EXPECT_EQ(recon_reduction_from_string(to_string(r)), r);
  }
  EXPECT_THROW(recon_reduction_from_string("median"), ConfigError);
}

}  // namespace
}  // namespace laf
