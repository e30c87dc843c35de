// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "refl/dataset.hpp"
#include "refl/image.hpp"
#include "refl/io.hpp"
#include "refl/nn/optim.hpp"

namespace refl::reward {

inline constexpr int kRewardCheckpointVersion = 1;
inline constexpr int kAttrEmbedDim = 8;
inline constexpr double kInitialTau = 0.07;
// Lower bound applied to tau after every optimizer step.
inline constexpr double kMinTau = 0.01;

struct FrmConfig {
  int embed_dim = 64;
  double initial_tau = kInitialTau;
  std::uint64_t seed = 7;
};

// Condition-aware scorer: s = <e_i, e_t> / tau with unit-norm embeddings.
// Image encoder: four stride-2 conv blocks, global pool, linear projection.
// Condition encoder: per-attribute embedding tables, concatenated, 2-layer MLP.
// Blocks 1-2 and the embedding tables are frozen by default.
class RewardModel {
 public:
  explicit RewardModel(const FrmConfig& cfg = {});
  RewardModel(RewardModel&&) = default;
  RewardModel& operator=(RewardModel&&) = default;

  // images: [N, 3, H, W] in [0, 1]. Returns unit rows [N, d].
  nn::Var image_embedding(const nn::Var& images) const;
  nn::Var condition_embedding(std::span<const dataset::Attributes> attrs) const;
  // [N] scores, differentiable in pixels and in trainable parameters.
  nn::Var score(const nn::Var& images, std::span<const dataset::Attributes> attrs) const;

  // Inference helpers; no graph is recorded.
  std::vector<double> score(std::span<const Image> images, std::span<const dataset::Attributes> attrs) const;
  double score(const Image& image, const dataset::Attributes& attrs) const;

  double tau() const;
  void set_tau(double tau);
  // Called after each optimizer step.
  void clamp_tau();

  int embed_dim() const { return cfg_.embed_dim; }
  const FrmConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // Sets the trainable flag of every parameter whose name starts with prefix.
  // Returns the number of parameters affected.
  int set_trainable(const std::string& prefix, bool trainable);
  Json freeze_mask() const;
  std::uint64_t hash(bool trainable_only = false) const { return params_.hash(trainable_only); }
  std::uint64_t frozen_hash() const;

  void save(const std::filesystem::path& path) const;
  static RewardModel load(const std::filesystem::path& path);

 private:
  FrmConfig cfg_;
  nn::ParamStore params_;
  std::array<nn::Conv2d, 4> blocks_;
  nn::Linear proj_;
  std::array<nn::Var, dataset::kNumAttributes> tables_;
  nn::Linear mlp1_, mlp2_;
  nn::Var log_tau_;
};

// Numerically stable two-way softmax.
std::pair<double, double> preference_prob(double s1, double s2);

// -sum y_j log p_j with log clamped at 1e-12. y must be one-hot.
double frm_ce_loss(std::pair<double, double> p, std::array<double, 2> y);

// One preference example for FRM training; winner 0 = a, 1 = b.
struct PreferenceExample {
  Image a;
  Image b;
  dataset::Attributes attrs;
  int winner = 0;
};

struct FrmTrainConfig {
  int steps = 2000;
  int batch_size = 16;
  double lr = 1e-3;
  std::uint64_t seed = 11;
};

struct FrmTrainLog {
  std::vector<double> loss;  // per step
};

// Adam over the model's trainable parameters with tau clamping.
class FrmOptimizer {
 public:
  FrmOptimizer(RewardModel& model, double lr);
  // One step on the batch mean of -log P(winner). Returns the loss before the update.
  double step(const nn::Tensor& a, const nn::Tensor& b, std::span<const dataset::Attributes> attrs,
              std::span<const int> winners);
  long steps() const { return adam_.steps(); }

 private:
  RewardModel* model_;
  nn::Adam adam_;
};

FrmTrainLog train_frm(RewardModel& model, const std::vector<PreferenceExample>& data, const FrmTrainConfig& cfg);

// Fraction of examples where the model ranks the winner higher.
double preference_accuracy(const RewardModel& model, const std::vector<PreferenceExample>& data);

// Dynamic update: one step on -log P(I_HQ > I_hat). i_hat is taken by value
// as a constant, so no gradient can reach whatever produced it.
double frm_update_step(FrmOptimizer& opt, const nn::Tensor& i_hq, const nn::Tensor& i_hat,
                       std::span<const dataset::Attributes> attrs);

}  // namespace refl::reward
