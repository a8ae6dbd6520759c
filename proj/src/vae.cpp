// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#include "laf/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace laf {
namespace {

void check_reps(const VaeModel& vae, const Matrix& reps) {
  if (reps.cols() != vae.rep_dim) {
    throw InputError("vae expects representations of width " + std::to_string(vae.rep_dim) +
                     ", got " + std::to_string(reps.cols()));
  }
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string("vae: non-finite ") + what);
}

}  // namespace

std::string to_string(VaeRole role) { return role == VaeRole::H ? "h" : "h_f"; }

VaeRole vae_role_from_string(const std::string& s) {
  if (s == "h") return VaeRole::H;
  if (s == "h_f") return VaeRole::HF;
  throw ConfigError("unknown vae role '" + s + "'");
}

VaeModel build_vae(VaeRole role, int rep_dim, int latent_dim, std::uint64_t seed) {
  if (rep_dim < 1 || latent_dim < 1) throw ConfigError("vae: dimensions must be positive");
  VaeModel v;
  v.role = role;
  v.rep_dim = rep_dim;
  v.latent_dim = latent_dim;
  nn::Rng rng(seed);
  v.encoder.emplace<nn::Linear>(rep_dim, 128, rng);
  v.encoder.emplace<nn::ReLU>(128);
  v.encoder.emplace<nn::Linear>(128, 32, rng);
  v.encoder.emplace<nn::ReLU>(32);
  v.encoder.emplace<nn::Linear>(32, 2 * latent_dim, rng);
  v.decoder.emplace<nn::Linear>(latent_dim, 32, rng);
  v.decoder.emplace<nn::ReLU>(32);
  v.decoder.emplace<nn::Linear>(32, 128, rng);
  v.decoder.emplace<nn::ReLU>(128);
  v.decoder.emplace<nn::Linear>(128, rep_dim, rng);
  return v;
}

GaussianParams encode(const VaeModel& vae, const Matrix& reps) {
  check_reps(vae, reps);
  const Matrix enc = vae.encoder.forward(reps);
  check_finite(enc, "encoder activations");
  const Index l = vae.latent_dim;
  GaussianParams p;
  p.mu = enc.leftCols(l);
  p.sigma = (0.5 * enc.rightCols(l).array()).exp();
  return p;
}

Matrix reparameterize(const GaussianParams& params, const Matrix& noise) {
  if (noise.rows() != params.mu.rows() || noise.cols() != params.mu.cols()) {
    throw PreconditionError("reparameterize: noise shape must match the latent parameters");
  }
  return params.mu.array() + params.sigma.array() * noise.array();
}

double kl_standard_normal(const RowVector& mu, const RowVector& sigma) {
  if (mu.size() != sigma.size()) throw PreconditionError("kl: mu/sigma size mismatch");
  double kl = 0.0;
  for (Index i = 0; i < mu.size(); ++i) {
    if (!(sigma(i) > 0.0)) throw DomainError("kl: sigma must be strictly positive");
    const double s2 = sigma(i) * sigma(i);
    kl += mu(i) * mu(i) + s2 - 1.0 - std::log(s2);
  }
  return 0.5 * kl;
}

Vector kl_standard_normal(const GaussianParams& params) {
  Vector out(params.mu.rows());
  for (Index r = 0; r < params.mu.rows(); ++r) {
    out(r) = kl_standard_normal(params.mu.row(r), params.sigma.row(r));
  }
  return out;
}

Matrix standard_normal(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix reconstruct_with_noise(const VaeModel& vae, const Matrix& reps, const Matrix& noise) {
  const auto params = encode(vae, reps);
  const Matrix out = vae.decoder.forward(reparameterize(params, noise));
  check_finite(out, "decoder output");
  return out;
}

Matrix reconstruct(const VaeModel& vae, const Matrix& reps, std::uint64_t noise_seed) {
  return reconstruct_with_noise(vae, reps, standard_normal(reps.rows(), vae.latent_dim, noise_seed));
}

VaeGrads zero_grads(const VaeModel& vae) {
  return {vae.encoder.zero_grads(), vae.decoder.zero_grads()};
}

// ---------------------------------------------------------------------------
// VaeTrace

VaeTrace::VaeTrace(const VaeModel& vae, const Matrix& reps, const Matrix& noise)
    : vae_(vae), noise_(noise) {
  check_reps(vae, reps);
  const Index l = vae.latent_dim;
  if (noise.rows() != reps.rows() || noise.cols() != l) {
    throw PreconditionError("vae: noise must be rows x latent_dim");
  }
  const Matrix enc = vae.encoder.forward(reps, &enc_cache_);
  check_finite(enc, "encoder activations");
  mu_ = enc.leftCols(l);
  log_var_ = enc.rightCols(l);
  const Matrix z = mu_.array() + (0.5 * log_var_.array()).exp() * noise_.array();
  recon_ = vae.decoder.forward(z, &dec_cache_);
  check_finite(recon_, "decoder output");
}

Matrix VaeTrace::backward(const Matrix& d_recon, const Matrix* d_mu, const Matrix* d_log_var,
                          VaeGrads* grads) const {
  std::span<Matrix> dec_grads, enc_grads;
  if (grads) {
    dec_grads = grads->decoder;
    enc_grads = grads->encoder;
  }
  const Matrix dz = vae_.decoder.backward(d_recon, dec_cache_, dec_grads, true);
  const Index l = vae_.latent_dim;
  Matrix d_enc(mu_.rows(), 2 * l);
  d_enc.leftCols(l) = dz;
  d_enc.rightCols(l) = dz.array() * noise_.array() * 0.5 * (0.5 * log_var_.array()).exp();
  if (d_mu) d_enc.leftCols(l) += *d_mu;
  if (d_log_var) d_enc.rightCols(l) += *d_log_var;
  return vae_.encoder.backward(d_enc, enc_cache_, enc_grads, true);
}

// ---------------------------------------------------------------------------
// Loss and training

std::string to_string(ReconReduction r) { return r == ReconReduction::Mean ? "mean" : "sum"; }

ReconReduction recon_reduction_from_string(const std::string& s) {
  if (s == "mean") return ReconReduction::Mean;
  if (s == "sum") return ReconReduction::Sum;
  throw ConfigError("unknown reconstruction reduction '" + s + "'");
}

namespace {

double coord_divisor(const VaeModel& vae, ReconReduction r) {
  return r == ReconReduction::Mean ? static_cast<double>(vae.rep_dim) : 1.0;
}

}  // namespace

double vae_loss_with_noise(const VaeModel& vae, const Matrix& reps, const Matrix& noise,
                           ReconReduction reduction) {
  if (reps.rows() == 0) throw PreconditionError("vae_loss: empty representation batch");
  const VaeTrace t(vae, reps, noise);
  const double n = static_cast<double>(reps.rows());
  const double mse = (reps - t.recon()).squaredNorm() / (n * coord_divisor(vae, reduction));
  const double kl =
      0.5 * (t.mu().array().square() + t.log_var().array().exp() - 1.0 - t.log_var().array()).sum() / n;
  const double loss = mse + kl;
  if (!std::isfinite(loss)) throw NumericError("vae_loss: non-finite value");
  return loss;
}

double vae_loss(const VaeModel& vae, const Matrix& reps, std::uint64_t noise_seed,
                ReconReduction reduction) {
  return vae_loss_with_noise(vae, reps, standard_normal(reps.rows(), vae.latent_dim, noise_seed),
                             reduction);
}

double vae_loss_grad(const VaeModel& vae, const Matrix& reps, const Matrix& noise, VaeGrads& grads,
                     ReconReduction reduction) {
  if (reps.rows() == 0) throw PreconditionError("vae_loss: empty representation batch");
  const VaeTrace t(vae, reps, noise);
  const double n = static_cast<double>(reps.rows());
  const double d = coord_divisor(vae, reduction);
  const Matrix resid = reps - t.recon();
  const Matrix var = t.log_var().array().exp();
  const double loss =
      resid.squaredNorm() / (n * d) +
      0.5 * (t.mu().array().square() + var.array() - 1.0 - t.log_var().array()).sum() / n;
  if (!std::isfinite(loss)) throw NumericError("vae_loss: non-finite value");
  const Matrix d_recon = -2.0 / (n * d) * resid;
  const Matrix d_mu = t.mu() / n;
  const Matrix d_lv = 0.5 * (var.array() - 1.0) / n;
  t.backward(d_recon, &d_mu, &d_lv, &grads);
  return loss;
}

VaeTrainResult train_vae(VaeRole role, const Matrix& reps, const VaeTrainOptions& options) {
  if (reps.rows() == 0) throw PreconditionError("train_vae: empty representation stream");
  if (options.epochs < 1) throw PreconditionError("train_vae: epochs must be >= 1");
  if (options.batch_size < 1) throw PreconditionError("train_vae: batch_size must be >= 1");
  VaeTrainResult result;
  result.vae = build_vae(role, static_cast<int>(reps.cols()), options.latent_dim, options.seed);
  VaeModel& vae = result.vae;
  nn::Adam enc_opt(options.lr), dec_opt(options.lr);
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Index> order(static_cast<std::size_t>(reps.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  const Index n = reps.rows();
  const Index bs = options.batch_size;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (Index start = 0; start < n; start += bs) {
      const Index len = std::min(bs, n - start);
      Matrix batch(len, reps.cols());
      for (Index i = 0; i < len; ++i) batch.row(i) = reps.row(order[static_cast<std::size_t>(start + i)]);
      Matrix noise(len, vae.latent_dim);
      for (Index i = 0; i < noise.size(); ++i) noise.data()[i] = normal(rng);
      VaeGrads grads = zero_grads(vae);
      const double loss = vae_loss_grad(vae, batch, noise, grads, options.reduction);
      enc_opt.step(vae.encoder.params(), grads.encoder);
      dec_opt.step(vae.decoder.params(), grads.decoder);
      total += loss * static_cast<double>(len);
    }
    result.epoch_losses.push_back(total / static_cast<double>(n));
  }
  return result;
}

}  // namespace laf
