// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

// Variational autoencoders over extractor representations.
//
// One VAE (role h) models the representations of the whole training set,
// the other (role h_f) those of the forgetting set. Encoders emit
// [mu | log sigma^2]; decoders map a latent sample back to representation
// space. Training minimizes reconstruction MSE plus KL to N(0, I).

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "laf/common.hpp"
#include "laf/nn.hpp"

namespace laf {

enum class VaeRole { H, HF };

std::string to_string(VaeRole role);
VaeRole vae_role_from_string(const std::string& s);

struct VaeModel {
  VaeRole role = VaeRole::H;
  int rep_dim = 256;
  int latent_dim = 8;
  std::string train_set = "full";  // "full" or "remaining"
  std::string source_model_hash;
  nn::Sequential encoder;  // rep_dim -> 128 -> 32 -> 2 * latent_dim
  nn::Sequential decoder;  // latent_dim -> 32 -> 128 -> rep_dim
};

VaeModel build_vae(VaeRole role, int rep_dim, int latent_dim, std::uint64_t seed);

/// Per-row Gaussian posterior parameters (rows = samples).
struct GaussianParams {
  Matrix mu;
  Matrix sigma;
};

GaussianParams encode(const VaeModel& vae, const Matrix& reps);

/// z = mu + sigma * noise, elementwise. `noise` must match mu's shape.
Matrix reparameterize(const GaussianParams& params, const Matrix& noise);

/// KL(N(mu, sigma^2) || N(0, I)) = 1/2 sum_i (mu_i^2 + sigma_i^2 - 1 - ln sigma_i^2).
double kl_standard_normal(const RowVector& mu, const RowVector& sigma);
/// Row-wise KL for a batch of posteriors.
Vector kl_standard_normal(const GaussianParams& params);

/// Standard-normal draws, filled row-major from a seeded generator.
Matrix standard_normal(Index rows, Index cols, std::uint64_t seed);

/// decode(reparameterize(encode(reps))) with noise drawn from `noise_seed`.
Matrix reconstruct(const VaeModel& vae, const Matrix& reps, std::uint64_t noise_seed);
Matrix reconstruct_with_noise(const VaeModel& vae, const Matrix& reps, const Matrix& noise);

struct VaeGrads {
  std::vector<Matrix> encoder;
  std::vector<Matrix> decoder;
};

VaeGrads zero_grads(const VaeModel& vae);

/// A differentiable pass reps -> (mu, log_var) -> z -> recon, retaining what
/// backward() needs.
class VaeTrace {
 public:
  VaeTrace(const VaeModel& vae, const Matrix& reps, const Matrix& noise);

  const Matrix& recon() const { return recon_; }
  const Matrix& mu() const { return mu_; }
  const Matrix& log_var() const { return log_var_; }

  /// Backpropagates upstream gradients on recon, mu and log_var (the latter
  /// two optional). Parameter gradients are added to `grads` when non-null.
  /// Returns d/d reps through the VAE, excluding any direct dependence the
  /// caller's loss has on reps.
  Matrix backward(const Matrix& d_recon, const Matrix* d_mu, const Matrix* d_log_var,
                  VaeGrads* grads) const;

 private:
  const VaeModel& vae_;
  Matrix noise_;
  Matrix mu_;
  Matrix log_var_;
  Matrix recon_;
  nn::Cache enc_cache_;
  nn::Cache dec_cache_;
};

/// How the squared reconstruction error is reduced over representation
/// coordinates: averaged (MSE) or summed (squared L2 distance).
enum class ReconReduction { Mean, Sum };

std::string to_string(ReconReduction r);
ReconReduction recon_reduction_from_string(const std::string& s);

/// Mean over rows of [reconstruction error + KL] with one reparameterized
/// sample per row.
double vae_loss(const VaeModel& vae, const Matrix& reps, std::uint64_t noise_seed,
                ReconReduction reduction = ReconReduction::Mean);
double vae_loss_with_noise(const VaeModel& vae, const Matrix& reps, const Matrix& noise,
                           ReconReduction reduction = ReconReduction::Mean);
/// Same value as vae_loss_with_noise, with parameter gradients added to `grads`.
double vae_loss_grad(const VaeModel& vae, const Matrix& reps, const Matrix& noise, VaeGrads& grads,
                     ReconReduction reduction = ReconReduction::Mean);

struct VaeTrainOptions {
  int epochs = 10;
  double lr = 1e-3;
  int batch_size = 32;
  int latent_dim = 8;
  ReconReduction reduction = ReconReduction::Mean;
  std::uint64_t seed = 0;
};

struct VaeTrainResult {
  VaeModel vae;
  std::vector<double> epoch_losses;
};

/// Fits a VAE to a representation matrix (one row per sample).
VaeTrainResult train_vae(VaeRole role, const Matrix& reps, const VaeTrainOptions& options);

}  // namespace laf
