// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

// Label-free unlearning of a classifier's representation extractor.
//
// Two losses drive the update. The extractor-unlearning loss rewards
// remaining-data representations that the full-data VAE h reconstructs well
// and forgetting-data representations that h_f reconstructs badly, each
// squashed through x / (x + 1). The alignment loss keeps remaining-data
// representations close (in cosine distance) to the original extractor's
// while pushing forgetting-data representations away.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "laf/model.hpp"
#include "laf/scenario.hpp"
#include "laf/vae.hpp"

namespace laf {

enum class Strategy { Alternating, TwoStage };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct UnlearnConfig {
  int epochs_r = 5;
  double tau = 2.0;
  double lr_ue = 1e-3;
  double lr_ra = 1e-3;
  int batch_size = 32;
  Strategy strategy = Strategy::Alternating;
  bool keep_kl_terms = false;
  std::string vae_train_set = "full";  // "full" or "remaining"
  bool disable_ue = false;
  bool disable_ra = false;
  bool repair = false;
  double repair_lr = 1e-3;
  std::uint64_t seed = 0;

  /// Throws ConfigError on an invalid combination.
  void validate() const;
};

/// r^2 / (r^2 + 1) per row, with r^2 the squared reconstruction residual.
Vector normalized_recon_summands(const Matrix& reps, const VaeModel& vae, std::uint64_t noise_seed);
double normalized_recon_term(const Matrix& reps, const VaeModel& vae, std::uint64_t noise_seed);

struct UeDetail {
  Vector summands_r;
  Vector summands_f;
};

/// L_UE for one batch pair with explicit latent noise. When `extractor_grads`
/// is non-null the gradient wrt extractor parameters is added to it.
double ue_loss_grad(const ClassifierModel& model, const VaeModel& h, const VaeModel& h_f,
                    const Matrix& batch_r, const Matrix& batch_f, const Matrix& noise_r,
                    const Matrix& noise_f, bool keep_kl_terms,
                    std::vector<Matrix>* extractor_grads, UeDetail* detail = nullptr);

double extractor_unlearn_loss(const ClassifierModel& model, const VaeModel& h, const VaeModel& h_f,
                              const Matrix& batch_r, const Matrix& batch_f,
                              std::uint64_t noise_seed);

/// 1 - cos(a, b) per row; rows where either side has zero norm score 1.
Vector simloss_rows(const Matrix& a, const Matrix& b);

struct RaDetail {
  /// One term per remaining row: s(x) - log sum_f exp(s(x_f) / tau).
  std::vector<double> terms;
};

/// L_RA from representations. u_* are the unlearned extractor's outputs and
/// d_* the frozen original's. Gradients wrt u_r / u_f are written when the
/// pointers are non-null.
double alignment_from_reps(const Matrix& u_r, const Matrix& d_r, const Matrix& u_f,
                           const Matrix& d_f, double tau, Matrix* grad_u_r, Matrix* grad_u_f,
                           RaDetail* detail = nullptr);

/// L_RA with gradients wrt the extractor of `model_u`. `reps_d_*` are the
/// original extractor's representations of the two batches.
double ra_loss_grad(const ClassifierModel& model_u, const Matrix& reps_d_r, const Matrix& reps_d_f,
                    const Matrix& batch_r, const Matrix& batch_f, double tau,
                    std::vector<Matrix>* extractor_grads, RaDetail* detail = nullptr);

double representation_alignment_loss(const ClassifierModel& model_u, const ClassifierModel& model_d,
                                     const Matrix& batch_r, const Matrix& batch_f, double tau);

struct EpochLogRow {
  int epoch = 0;
  double l_ue = 0.0;  // mean per-batch L_UE, NaN if no UE step ran
  double l_ra = 0.0;  // mean per-batch L_RA, NaN if no RA step ran
  double wall_seconds = 0.0;
};

/// Everything observed during one unlearning run.
struct UnlearnTrace {
  std::vector<double> ue_values;
  std::vector<double> ue_summands;
  std::vector<double> ra_values;
  std::vector<double> ra_terms;
  std::vector<int> ra_batch_sizes_f;
  std::vector<EpochLogRow> epochs;
};

ClassifierModel laf_unlearn(const ClassifierModel& model_d, const LabeledDataset& data,
                            const ForgetSplit& split, const VaeModel& h, const VaeModel& h_f,
                            const UnlearnConfig& cfg, UnlearnTrace* trace = nullptr);

/// One epoch of cross-entropy fine-tuning of the whole model on |D_f|
/// uniformly sampled remaining ids.
ClassifierModel supervised_repair(const ClassifierModel& model, const LabeledDataset& data,
                                  const ForgetSplit& split, double repair_lr, std::uint64_t seed,
                                  int batch_size = 32);

/// Ids used by supervised_repair for a given seed, exposed for inspection.
std::vector<SampleId> repair_sample(const ForgetSplit& split, std::uint64_t seed);

}  // namespace laf
