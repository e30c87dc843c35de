// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "refl/dataset.hpp"
#include "refl/restorer.hpp"
#include "refl/reward_model.hpp"

namespace refl::trainer {

struct ReflConfig {
  double lambda_reward = 0.005;
  double lambda_lpips = 0.02;
  double lambda_dwt = 0.01;
  double lambda_reg = 1.0;
  int truncation = 1;        // N: final denoising steps that carry gradients
  int frm_update_every = 10;  // n
  double lr = 5e-5;
  int iterations = 300;
  int batch_size = 4;
  int frm_batch_size = 4;
  double frm_lr = 1e-4;
  std::uint64_t seed = 1;
  bool ru_enabled = true;
  int checkpoint_every = 0;  // 0 = never

  // Loss weights per base mode: single-step (0.005, 0.02, 0.01, 1),
  // multi-step (0.005, 0.01, 0.01, 1e-4).
  static ReflConfig defaults_for(restorer::Mode mode);
  Json to_json() const;
  // Missing keys keep the values of `base`.
  static ReflConfig from_json(const Json& j, const ReflConfig& base);
  static ReflConfig from_json(const Json& j);
  void validate() const;
};

struct LossComponents {
  double reward = 0.0;
  double lpips = 0.0;
  double dwt = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

// One training example: ground truth, degraded input and its condition tags.
struct ReflExample {
  Image hq;
  Image lq;
  dataset::Attributes attrs;
};

struct ReflBatch {
  nn::Tensor hq;
  nn::Tensor lq;
  std::vector<dataset::Attributes> attrs;
};
ReflBatch make_batch(const std::vector<ReflExample>& data, std::span<const std::size_t> idx);

// -mean R(I_hat, T). The reward model acts as a fixed function here: its
// parameters record no gradient.
nn::Var reward_loss(reward::RewardModel& frm, const nn::Var& restored, std::span<const dataset::Attributes> attrs);

// Mean over the store's trainable tensors of KL(softmax(theta) || softmax(theta_base)).
nn::Var weight_reg_loss(const nn::ParamStore& params, const std::vector<nn::Tensor>& base);

struct TotalLoss {
  nn::Var total;
  LossComponents parts;
};
TotalLoss total_loss(const ReflConfig& cfg, reward::RewardModel& frm, const restorer::Restorer& r,
                     const nn::Var& restored, const ReflBatch& batch);

// Forward through restore() with the last N steps recorded, then backward of
// the total loss. Leaves the denoiser gradients in place and returns the losses.
LossComponents accumulate_gradients(const ReflConfig& cfg, reward::RewardModel& frm, restorer::Restorer& r,
                                    const ReflBatch& batch, std::uint64_t noise_seed,
                                    restorer::RestoreTrace* trace = nullptr);

struct IterationLog {
  int iteration = 0;
  LossComponents loss;
  double frm_score = 0.0;  // mean reward of this iteration's restorations
  double drift = 0.0;      // ||theta - theta_base||_2 after the update
  bool frm_updated = false;
  double frm_loss = 0.0;
  std::uint64_t frm_hash = 0;
  Json to_json() const;
};

struct ReflLog {
  std::vector<IterationLog> iterations;
  int frm_updates = 0;
};

// Owns the two optimizers so that refl_step can be driven one call at a time.
class ReflTrainer {
 public:
  ReflTrainer(const ReflConfig& cfg, restorer::Restorer& r, reward::RewardModel& frm);

  // Exactly one update of the denoiser from total_loss.
  LossComponents refl_step(const ReflBatch& batch, std::uint64_t noise_seed);
  // One FRM update on (I_HQ, restore(I_LQ)) with the current generator.
  double frm_update(const ReflBatch& batch, std::uint64_t noise_seed);

  const ReflConfig& config() const { return cfg_; }
  int frm_updates() const { return frm_updates_; }

 private:
  ReflConfig cfg_;
  restorer::Restorer* r_;
  reward::RewardModel* frm_;
  nn::Adam adam_;
  reward::FrmOptimizer frm_opt_;
  int frm_updates_ = 0;
};

using IterationHook = std::function<void(const IterationLog&, const restorer::Restorer&, const reward::RewardModel&)>;

// Snapshots theta_base if absent, then runs cfg.iterations refl_steps with an
// FRM update after every n-th when ru_enabled.
ReflLog train_refl(const ReflConfig& cfg, reward::RewardModel& frm, restorer::Restorer& r,
                   const std::vector<ReflExample>& train, const IterationHook& hook = nullptr);

struct HackingReport {
  double mean_reward = 0.0;       // mean FRM score of the outputs
  double normalized_reward = 0.0;  // mean tau * (R(out) - R(gt)) / 2, in [-1, 1]
  double mean_ssim = 0.0;
  double mean_perceptual = 0.0;
  double normalized_quality = 0.0;  // mean (ssim - perceptual - 1) / 2, 0 at ground truth
  double gap = 0.0;                 // normalized_reward - normalized_quality
  double diversity = 0.0;           // mean pairwise perceptual distance among outputs
  Json to_json() const;
};

HackingReport hacking_report(const reward::RewardModel& frm, std::span<const Image> outputs,
                             std::span<const Image> ground_truth, std::span<const dataset::Attributes> attrs);
HackingReport hacking_probe(const reward::RewardModel& frm, const restorer::Restorer& r,
                            const std::vector<ReflExample>& test, std::uint64_t noise_seed);

}  // namespace refl::trainer
