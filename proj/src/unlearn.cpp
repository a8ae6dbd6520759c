// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#include "laf/unlearn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include <spdlog/spdlog.h>

namespace laf {
namespace {

Matrix stack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

void check_pair(const Matrix& batch_r, const Matrix& batch_f) {
  if (batch_r.rows() == 0 || batch_f.rows() == 0) {
    throw PreconditionError("unlearning batches must be non-empty");
  }
  if (batch_r.rows() != batch_f.rows()) {
    throw PreconditionError("remaining and forgetting batches must have equal size, got " +
                            std::to_string(batch_r.rows()) + " and " +
                            std::to_string(batch_f.rows()));
  }
}

// Adds d(sign * sum_rows q/(q+1) [+ sign * KL]) / d reps to `d_reps` and
// returns the summands. q = ||rep - vae(rep)||^2.
Vector recon_term_grad(const VaeModel& vae, const Matrix& reps, const Matrix& noise, double sign,
                       bool keep_kl, double* kl_sum, Matrix* d_reps) {
  const VaeTrace t(vae, reps, noise);
  const Matrix resid = reps - t.recon();
  const Vector q = resid.rowwise().squaredNorm();
  const Vector summands = q.array() / (q.array() + 1.0);
  double kl = 0.0;
  if (keep_kl) {
    kl = 0.5 * (t.mu().array().square() + t.log_var().array().exp() - 1.0 - t.log_var().array()).sum();
  }
  if (kl_sum) *kl_sum = kl;
  if (d_reps) {
    const Vector w = sign / (q.array() + 1.0).square();
    const Matrix d_direct = 2.0 * (resid.array().colwise() * w.array()).matrix();
    Matrix d_mu, d_lv;
    if (keep_kl) {
      d_mu = sign * t.mu();
      d_lv = sign * 0.5 * (t.log_var().array().exp() - 1.0);
    }
    *d_reps = d_direct + t.backward(-d_direct, keep_kl ? &d_mu : nullptr,
                                    keep_kl ? &d_lv : nullptr, nullptr);
  }
  return summands;
}

std::vector<SampleId> sample_remaining(const std::vector<SampleId>& remaining, std::size_t count,
                                       std::mt19937_64& rng, bool* with_replacement) {
  std::vector<SampleId> out;
  out.reserve(count);
  if (remaining.size() >= count) {
    std::vector<SampleId> pool = remaining;
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      out.push_back(pool[i]);
    }
    if (with_replacement) *with_replacement = false;
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, remaining.size() - 1);
    for (std::size_t i = 0; i < count; ++i) out.push_back(remaining[pick(rng)]);
    if (with_replacement) *with_replacement = true;
  }
  return out;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

std::string to_string(Strategy s) { return s == Strategy::Alternating ? "alternating" : "two-stage"; }

Strategy strategy_from_string(const std::string& s) {
  if (s == "alternating") return Strategy::Alternating;
  if (s == "two-stage") return Strategy::TwoStage;
  throw ConfigError("unknown strategy '" + s + "'");
}

void UnlearnConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs_r < 1) throw ConfigError("epochs_r must be >= 1");
  if (!(lr_ue > 0.0) || !(lr_ra > 0.0)) throw ConfigError("unlearning learning rates must be positive");
  if (repair && !(repair_lr > 0.0)) throw ConfigError("repair_lr must be positive");
  if (vae_train_set != "full" && vae_train_set != "remaining") {
    throw ConfigError("vae_train_set must be 'full' or 'remaining', got '" + vae_train_set + "'");
  }
}

Vector normalized_recon_summands(const Matrix& reps, const VaeModel& vae, std::uint64_t noise_seed) {
  if (reps.rows() == 0) throw PreconditionError("normalized_recon_term: empty representation batch");
  const Matrix resid = reps - reconstruct(vae, reps, noise_seed);
  const Vector q = resid.rowwise().squaredNorm();
  return q.array() / (q.array() + 1.0);
}

double normalized_recon_term(const Matrix& reps, const VaeModel& vae, std::uint64_t noise_seed) {
  return normalized_recon_summands(reps, vae, noise_seed).sum();
}

double ue_loss_grad(const ClassifierModel& model, const VaeModel& h, const VaeModel& h_f,
                    const Matrix& batch_r, const Matrix& batch_f, const Matrix& noise_r,
                    const Matrix& noise_f, bool keep_kl_terms,
                    std::vector<Matrix>* extractor_grads, UeDetail* detail) {
  check_pair(batch_r, batch_f);
  const Index n = batch_r.rows();
  nn::Cache cache;
  const Matrix reps = model.extractor.forward(stack(batch_r, batch_f), extractor_grads ? &cache : nullptr);
  const bool want_grad = extractor_grads != nullptr;
  Matrix d_r, d_f;
  double kl_r = 0.0, kl_f = 0.0;
  const Vector s_r = recon_term_grad(h, reps.topRows(n), noise_r, 1.0, keep_kl_terms, &kl_r,
                                     want_grad ? &d_r : nullptr);
  const Vector s_f = recon_term_grad(h_f, reps.bottomRows(n), noise_f, -1.0, keep_kl_terms, &kl_f,
                                     want_grad ? &d_f : nullptr);
  if (want_grad) {
    model.extractor.backward(stack(d_r, d_f), cache, *extractor_grads, false);
  }
  if (detail) {
    detail->summands_r = s_r;
    detail->summands_f = s_f;
  }
  return s_r.sum() - s_f.sum() + (keep_kl_terms ? kl_r - kl_f : 0.0);
}

double extractor_unlearn_loss(const ClassifierModel& model, const VaeModel& h, const VaeModel& h_f,
                              const Matrix& batch_r, const Matrix& batch_f,
                              std::uint64_t noise_seed) {
  check_pair(batch_r, batch_f);
  std::mt19937_64 seeds(noise_seed);
  const Matrix noise_r = standard_normal(batch_r.rows(), h.latent_dim, seeds());
  const Matrix noise_f = standard_normal(batch_f.rows(), h_f.latent_dim, seeds());
  return ue_loss_grad(model, h, h_f, batch_r, batch_f, noise_r, noise_f, false, nullptr);
}

Vector simloss_rows(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw PreconditionError("simloss: representation shapes differ");
  }
  Vector out(a.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    const double na = a.row(i).norm();
    const double nb = b.row(i).norm();
    if (na == 0.0 || nb == 0.0) {
      spdlog::warn("simloss: zero-norm representation in row {}; cosine taken as 0", i);
      out(i) = 1.0;
    } else {
      out(i) = 1.0 - a.row(i).dot(b.row(i)) / (na * nb);
    }
  }
  return out;
}

namespace {

// d simloss(u, d) / d u for one row; zero when either norm vanishes.
RowVector simloss_grad_row(const RowVector& u, const RowVector& d) {
  const double nu = u.norm();
  const double nd = d.norm();
  if (nu == 0.0 || nd == 0.0) return RowVector::Zero(u.size());
  const double cos = u.dot(d) / (nu * nd);
  return -(d / (nu * nd) - cos * u / (nu * nu));
}

}  // namespace

double alignment_from_reps(const Matrix& u_r, const Matrix& d_r, const Matrix& u_f,
                           const Matrix& d_f, double tau, Matrix* grad_u_r, Matrix* grad_u_f,
                           RaDetail* detail) {
  if (!(tau > 0.0)) throw PreconditionError("tau must be positive");
  if (u_r.rows() == 0 || u_f.rows() == 0) throw PreconditionError("alignment: empty batch");
  const Vector s_r = simloss_rows(u_r, d_r);
  const Vector s_f = simloss_rows(u_f, d_f);
  const Vector a = s_f / tau;
  const double amax = a.maxCoeff();
  const Vector ex = (a.array() - amax).exp();
  const double lse = amax + std::log(ex.sum());
  const double n_r = static_cast<double>(u_r.rows());
  if (detail) {
    detail->terms.clear();
    for (Index i = 0; i < s_r.size(); ++i) detail->terms.push_back(s_r(i) - lse);
  }
  if (grad_u_r) {
    grad_u_r->resize(u_r.rows(), u_r.cols());
    for (Index i = 0; i < u_r.rows(); ++i) grad_u_r->row(i) = simloss_grad_row(u_r.row(i), d_r.row(i));
  }
  if (grad_u_f) {
    const Vector soft = ex / ex.sum();
    grad_u_f->resize(u_f.rows(), u_f.cols());
    for (Index j = 0; j < u_f.rows(); ++j) {
      grad_u_f->row(j) = (-n_r * soft(j) / tau) * simloss_grad_row(u_f.row(j), d_f.row(j));
    }
  }
  return s_r.sum() - n_r * lse;
}

double ra_loss_grad(const ClassifierModel& model_u, const Matrix& reps_d_r, const Matrix& reps_d_f,
                    const Matrix& batch_r, const Matrix& batch_f, double tau,
                    std::vector<Matrix>* extractor_grads, RaDetail* detail) {
  if (batch_r.rows() == 0 || batch_f.rows() == 0) throw PreconditionError("alignment: empty batch");
  const Index n_r = batch_r.rows();
  nn::Cache cache;
  const Matrix reps = model_u.extractor.forward(stack(batch_r, batch_f),
                                                extractor_grads ? &cache : nullptr);
  Matrix g_r, g_f;
  const double loss =
      alignment_from_reps(reps.topRows(n_r), reps_d_r, reps.bottomRows(batch_f.rows()), reps_d_f,
                          tau, extractor_grads ? &g_r : nullptr, extractor_grads ? &g_f : nullptr,
                          detail);
  if (extractor_grads) model_u.extractor.backward(stack(g_r, g_f), cache, *extractor_grads, false);
  return loss;
}

double representation_alignment_loss(const ClassifierModel& model_u, const ClassifierModel& model_d,
                                     const Matrix& batch_r, const Matrix& batch_f, double tau) {
  return ra_loss_grad(model_u, extract(model_d, batch_r), extract(model_d, batch_f), batch_r,
                      batch_f, tau, nullptr);
}

ClassifierModel laf_unlearn(const ClassifierModel& model_d, const LabeledDataset& data,
                            const ForgetSplit& split, const VaeModel& h, const VaeModel& h_f,
                            const UnlearnConfig& cfg, UnlearnTrace* trace) {
  cfg.validate();
  if (split.forgetting_ids.empty()) throw PreconditionError("laf_unlearn: empty forgetting set");
  if (split.remaining_ids.empty()) throw PreconditionError("laf_unlearn: empty remaining set");
  if (h.rep_dim != model_d.rep_dim || h_f.rep_dim != model_d.rep_dim) {
    throw PreconditionError("laf_unlearn: VAE width does not match the extractor");
  }
  ClassifierModel model_u = model_d;
  if (cfg.disable_ue && cfg.disable_ra) return model_u;

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  nn::Adam opt_ue(cfg.lr_ue), opt_ra(cfg.lr_ra);
  const std::size_t n_f = split.forgetting_ids.size();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  auto draw_noise = [&](Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };

  auto ue_step = [&](const Matrix& xr, const Matrix& xf, int epoch, int batch) {
    std::vector<Matrix> grads = model_u.extractor.zero_grads();
    const Matrix nr = draw_noise(xr.rows(), h.latent_dim);
    const Matrix nf = draw_noise(xf.rows(), h_f.latent_dim);
    UeDetail detail;
    const double loss = ue_loss_grad(model_u, h, h_f, xr, xf, nr, nf, cfg.keep_kl_terms, &grads, &detail);
    if (!std::isfinite(loss)) {
      throw DivergenceError("catastrophic unlearning: non-finite L_UE in the extractor-unlearning "
                            "step at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch),
                            epoch, batch);
    }
    opt_ue.step(model_u.extractor.params(), grads);
    if (trace) {
      trace->ue_values.push_back(loss);
      trace->ue_summands.insert(trace->ue_summands.end(), detail.summands_r.begin(), detail.summands_r.end());
      trace->ue_summands.insert(trace->ue_summands.end(), detail.summands_f.begin(), detail.summands_f.end());
    }
    return loss;
  };

  auto ra_step = [&](const Matrix& xr, const Matrix& xf, int epoch, int batch) {
    std::vector<Matrix> grads = model_u.extractor.zero_grads();
    RaDetail detail;
    const double loss = ra_loss_grad(model_u, extract(model_d, xr), extract(model_d, xf), xr, xf,
                                     cfg.tau, &grads, &detail);
    if (!std::isfinite(loss)) {
      throw DivergenceError("catastrophic unlearning: non-finite L_RA in the alignment step at epoch " +
                                std::to_string(epoch) + ", batch " + std::to_string(batch),
                            epoch, batch);
    }
    opt_ra.step(model_u.extractor.params(), grads);
    if (trace) {
      trace->ra_values.push_back(loss);
      trace->ra_terms.insert(trace->ra_terms.end(), detail.terms.begin(), detail.terms.end());
      trace->ra_batch_sizes_f.push_back(static_cast<int>(xf.rows()));
    }
    return loss;
  };

  // One pass over D_f paired with a fresh |D_f|-sized remaining sample.
  auto run_epoch = [&](int epoch, bool do_ue, bool do_ra) {
    const auto t0 = std::chrono::steady_clock::now();
    bool replaced = false;
    const std::vector<SampleId> r_ids = sample_remaining(split.remaining_ids, n_f, rng, &replaced);
    if (replaced) {
      spdlog::warn("laf_unlearn: |D_r| < |D_f|; remaining data sampled with replacement");
    }
    std::vector<SampleId> f_ids = split.forgetting_ids;
    std::shuffle(f_ids.begin(), f_ids.end(), rng);
    double ue_sum = 0.0, ra_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < n_f; start += bs) {
      const std::size_t len = std::min(bs, n_f - start);
      const Matrix xf = data.gather_inputs(std::span<const SampleId>(f_ids.data() + start, len));
      const Matrix xr = data.gather_inputs(std::span<const SampleId>(r_ids.data() + start, len));
      ++batches;
      if (do_ue) ue_sum += ue_step(xr, xf, epoch, batches);
      if (do_ra) ra_sum += ra_step(xr, xf, epoch, batches);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EpochLogRow row{epoch, do_ue ? ue_sum / batches : nan(), do_ra ? ra_sum / batches : nan(), secs};
    spdlog::debug("unlearn epoch {}: L_UE {:.5f} L_RA {:.5f} ({:.2f}s)", row.epoch, row.l_ue, row.l_ra, secs);
    if (trace) trace->epochs.push_back(row);
  };

  const bool do_ue = !cfg.disable_ue;
  const bool do_ra = !cfg.disable_ra;
  if (cfg.strategy == Strategy::Alternating) {
    for (int e = 1; e <= cfg.epochs_r; ++e) run_epoch(e, do_ue, do_ra);
  } else {
    int e = 1;
    if (do_ue) {
      for (int i = 0; i < cfg.epochs_r; ++i) run_epoch(e++, true, false);
    }
    if (do_ra) {
      for (int i = 0; i < cfg.epochs_r; ++i) run_epoch(e++, false, true);
    }
  }
  return model_u;
}

std::vector<SampleId> repair_sample(const ForgetSplit& split, std::uint64_t seed) {
  if (split.remaining_ids.empty()) throw PreconditionError("repair: empty remaining set");
  std::mt19937_64 rng(seed);
  bool replaced = false;
  auto ids = sample_remaining(split.remaining_ids, split.forgetting_ids.size(), rng, &replaced);
  if (replaced) spdlog::warn("repair: |D_r| < |D_f|; sampling remaining data with replacement");
  return ids;
}

ClassifierModel supervised_repair(const ClassifierModel& model, const LabeledDataset& data,
                                  const ForgetSplit& split, double repair_lr, std::uint64_t seed,
                                  int batch_size) {
  if (split.forgetting_ids.empty()) return model;
  const std::vector<SampleId> ids = repair_sample(split, seed);
  TrainOptions opts;
  opts.epochs = 1;
  opts.lr = repair_lr;
  opts.batch_size = batch_size;
  opts.seed = seed + 1;
  return train_supervised(model, data, ids, opts).model;
}

}  // namespace laf
