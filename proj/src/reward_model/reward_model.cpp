// SPDX-License-Identifier: Apache-2.0
#include "refl/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "refl/error.hpp"

namespace refl::reward {

using nn::Tensor;
using nn::Var;

namespace {

constexpr std::array<int, 5> kWidths = {3, 16, 32, 64, 64};
constexpr double kNormEps = 1e-8;

Tensor embedding_init(int rows, int cols, Rng& rng) {
  Tensor t({rows, cols});
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

}  // namespace

RewardModel::RewardModel(const FrmConfig& cfg) : cfg_(cfg) {
  require(cfg_.embed_dim > 0, "embedding dimension must be positive");
  require(cfg_.initial_tau >= kMinTau, "initial tau must be at least " + std::to_string(kMinTau));
  Rng rng(cfg_.seed);
  for (int b = 0; b < 4; ++b)
    blocks_[b] = nn::Conv2d::create(params_, "image.block" + std::to_string(b + 1), kWidths[b], kWidths[b + 1], 3,
                                    2, rng, /*trainable=*/b >= 2);
  proj_ = nn::Linear::create(params_, "image.proj", kWidths[4], cfg_.embed_dim, rng);
  for (int k = 0; k < dataset::kNumAttributes; ++k)
    tables_[k] = params_.add(std::string("cond.table.") + dataset::kAttributeNames[k],
                             embedding_init(dataset::kAttributeCardinality[k], kAttrEmbedDim, rng), false);
  mlp1_ = nn::Linear::create(params_, "cond.mlp1", kAttrEmbedDim * dataset::kNumAttributes, cfg_.embed_dim, rng);
  mlp2_ = nn::Linear::create(params_, "cond.mlp2", cfg_.embed_dim, cfg_.embed_dim, rng);
  log_tau_ = params_.add("log_tau", Tensor({1}, std::log(cfg_.initial_tau)));
}

Var RewardModel::image_embedding(const Var& images) const {
  require(images.shape().size() == 4 && images.shape()[1] == 3, "reward model expects [N, 3, H, W] images");
  require(images.shape()[2] % 16 == 0 && images.shape()[3] % 16 == 0, "image sides must be multiples of 16");
  Var h = nn::add_scalar(nn::scale(images, 2.0), -1.0);
  for (const auto& b : blocks_) h = nn::silu(b(h));
  return nn::normalize_rows(proj_(nn::global_avg_pool(h)), kNormEps);
}

Var RewardModel::condition_embedding(std::span<const dataset::Attributes> attrs) const {
  require(!attrs.empty(), "no attributes given");
  std::vector<Var> parts;
  for (int k = 0; k < dataset::kNumAttributes; ++k) {
    std::vector<int> idx;
    idx.reserve(attrs.size());
    for (const auto& a : attrs) {
      dataset::validate(a);
      idx.push_back(dataset::attribute_values(a)[k]);
    }
    parts.push_back(nn::embedding(tables_[k], idx));
  }
  const Var h = nn::silu(mlp1_(nn::concat_cols(parts)));
  return nn::normalize_rows(mlp2_(h), kNormEps);
}

Var RewardModel::score(const Var& images, std::span<const dataset::Attributes> attrs) const {
  require(images.shape()[0] == static_cast<int>(attrs.size()), "one attribute set per image required");
  const Var cos = nn::rowwise_dot(image_embedding(images), condition_embedding(attrs));
  return nn::mul_scalar(cos, nn::exp(nn::scale(log_tau_, -1.0)));
}

std::vector<double> RewardModel::score(std::span<const Image> images,
                                       std::span<const dataset::Attributes> attrs) const {
  nn::NoGradGuard guard;
  const Var s = score(Var::constant(to_tensor(images)), attrs);
  return {s.value().values().begin(), s.value().values().end()};
}

double RewardModel::score(const Image& image, const dataset::Attributes& attrs) const {
  return score(std::span<const Image>(&image, 1), std::span<const dataset::Attributes>(&attrs, 1))[0];
}

double RewardModel::tau() const { return std::exp(log_tau_.value()[0]); }

void RewardModel::set_tau(double tau) {
  require(tau >= kMinTau, "tau must be at least " + std::to_string(kMinTau));
  log_tau_.mutable_value()[0] = std::log(tau);
}

void RewardModel::clamp_tau() {
  double& v = log_tau_.mutable_value()[0];
  v = std::max(v, std::log(kMinTau));
}

int RewardModel::set_trainable(const std::string& prefix, bool trainable) {
  int n = 0;
  for (auto& p : params_.entries())
    if (p.name.rfind(prefix, 0) == 0) {
      p.trainable = trainable;
      p.var.set_requires_grad(trainable);
      ++n;
    }
  return n;
}

Json RewardModel::freeze_mask() const {
  Json j = Json::object();
  for (const auto& p : params_.entries()) j[p.name] = p.trainable;
  return j;
}

std::uint64_t RewardModel::frozen_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_.entries())
    if (!p.trainable) h = Rng::splitmix(h ^ p.var.value().hash());
  return h;
}

void RewardModel::save(const std::filesystem::path& path) const {
  Archive ar;
  ar.metadata["kind"] = "reward_model";
  ar.metadata["version"] = kRewardCheckpointVersion;
  ar.metadata["d"] = cfg_.embed_dim;
  ar.metadata["seed"] = cfg_.seed;
  ar.metadata["tau"] = tau();
  ar.metadata["freeze_mask"] = freeze_mask();
  for (const auto& p : params_.entries()) ar.arrays.emplace_back(p.name, p.var.value());
  save_archive(ar, path);
}

RewardModel RewardModel::load(const std::filesystem::path& path) {
  const Archive ar = load_archive(path);
  if (ar.metadata.value("kind", std::string()) != "reward_model")
    fail(ErrorCode::kIo, path.string() + " is not a reward model checkpoint");
  if (ar.metadata.value("version", 0) != kRewardCheckpointVersion)
    fail(ErrorCode::kIo, path.string() + ": unsupported reward model checkpoint version");
  FrmConfig cfg;
  cfg.embed_dim = ar.metadata.at("d").get<int>();
  cfg.seed = ar.metadata.value("seed", cfg.seed);
  RewardModel m(cfg);
  m.params_.load(ar.arrays);
  for (const auto& [name, trainable] : ar.metadata.at("freeze_mask").items()) m.set_trainable(name, trainable.get<bool>());
  return m;
}

std::pair<double, double> preference_prob(double s1, double s2) {
  const double m = std::max(s1, s2);
  const double e1 = std::exp(s1 - m), e2 = std::exp(s2 - m);
  return {e1 / (e1 + e2), e2 / (e1 + e2)};
}

double frm_ce_loss(std::pair<double, double> p, std::array<double, 2> y) {
  const bool one_hot = (y[0] == 1.0 && y[1] == 0.0) || (y[0] == 0.0 && y[1] == 1.0);
  require(one_hot, "preference target must be one-hot");
  require(p.first >= 0 && p.second >= 0 && std::abs(p.first + p.second - 1.0) < 1e-9,
          "preference probabilities must form a distribution");
  return -(y[0] * std::log(std::max(p.first, 1e-12)) + y[1] * std::log(std::max(p.second, 1e-12)));
}

FrmOptimizer::FrmOptimizer(RewardModel& model, double lr)
    : model_(&model), adam_(model.params(), nn::AdamConfig{lr}) {}

double FrmOptimizer::step(const Tensor& a, const Tensor& b, std::span<const dataset::Attributes> attrs,
                          std::span<const int> winners) {
  require(a.shape() == b.shape(), "preference batch sides differ in shape");
  model_->params().set_grad_tracking(true);
  adam_.zero_grad();
  const Var sa = model_->score(Var::constant(a), attrs);
  const Var sb = model_->score(Var::constant(b), attrs);
  const Var loss = nn::pairwise_ce(sa, sb, winners);
  loss.backward();
  adam_.step();
  adam_.zero_grad();
  model_->clamp_tau();
  return loss.value()[0];
}

FrmTrainLog train_frm(RewardModel& model, const std::vector<PreferenceExample>& data, const FrmTrainConfig& cfg) {
  if (data.empty()) fail(ErrorCode::kInvalidArgument, "train_frm: no labeled pairs");
  require(cfg.steps >= 0 && cfg.batch_size > 0, "train_frm: steps and batch size must be positive");
  for (const auto& ex : data) {
    require(ex.winner == 0 || ex.winner == 1, "train_frm: winner must be 0 or 1");
    require_same_shape(ex.a, ex.b, "train_frm pair");
  }
  FrmOptimizer opt(model, cfg.lr);
  Rng rng(cfg.seed);
  FrmTrainLog log;
  const int bs = std::min<int>(cfg.batch_size, static_cast<int>(data.size()));
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<Image> a, b;
    std::vector<dataset::Attributes> attrs;
    std::vector<int> winners;
    for (int k = 0; k < bs; ++k) {
      const auto& ex = data[rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1)];
      a.push_back(ex.a);
      b.push_back(ex.b);
      attrs.push_back(ex.attrs);
      winners.push_back(ex.winner);
    }
    log.loss.push_back(opt.step(to_tensor(a), to_tensor(b), attrs, winners));
  }
  return log;
}

double preference_accuracy(const RewardModel& model, const std::vector<PreferenceExample>& data) {
  if (data.empty()) return 0.0;
  int correct = 0;
  for (const auto& ex : data) {
    const double sa = model.score(ex.a, ex.attrs), sb = model.score(ex.b, ex.attrs);
    correct += ex.winner == 0 ? sa > sb : sb > sa;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double frm_update_step(FrmOptimizer& opt, const Tensor& i_hq, const Tensor& i_hat,
                       std::span<const dataset::Attributes> attrs) {
  if (i_hq.shape() != i_hat.shape())
    fail(ErrorCode::kInvalidArgument, "frm_update_step: shape mismatch " + nn::shape_str(i_hq.shape()) + " vs " +
                                          nn::shape_str(i_hat.shape()));
  const std::vector<int> winners(attrs.size(), 0);
  return opt.step(i_hq, i_hat, attrs, winners);
}

}  // namespace refl::reward
