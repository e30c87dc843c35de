// SPDX-License-Identifier: Apache-2.0
#include "refl/refl_trainer.hpp"

#include <array>
#include <cmath>

#include "refl/error.hpp"
#include "refl/metrics.hpp"
#include "refl/wavelet.hpp"

namespace refl::trainer {

using nn::Tensor;
using nn::Var;

ReflConfig ReflConfig::defaults_for(restorer::Mode mode) {
  ReflConfig c;
  if (mode == restorer::Mode::kMultiStep) {
    c.lambda_lpips = 0.01;
    c.lambda_reg = 1e-4;
  }
  return c;
}

Json ReflConfig::to_json() const {
  return Json{{"lambda_reward", lambda_reward},
              {"lambda_lpips", lambda_lpips},
              {"lambda_dwt", lambda_dwt},
              {"lambda_reg", lambda_reg},
              {"truncation", truncation},
              {"frm_update_every", frm_update_every},
              {"lr", lr},
              {"iterations", iterations},
              {"batch_size", batch_size},
              {"frm_batch_size", frm_batch_size},
              {"frm_lr", frm_lr},
              {"seed", seed},
              {"ru_enabled", ru_enabled},
              {"checkpoint_every", checkpoint_every}};
}

ReflConfig ReflConfig::from_json(const Json& j, const ReflConfig& base) {
  if (!j.is_object()) fail(ErrorCode::kConfig, "refl config must be a JSON object");
  ReflConfig c = base;
  const Json known = c.to_json();
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) fail(ErrorCode::kConfig, "unknown refl config key '" + key + "'");
  try {
    c.lambda_reward = j.value("lambda_reward", c.lambda_reward);
    c.lambda_lpips = j.value("lambda_lpips", c.lambda_lpips);
    c.lambda_dwt = j.value("lambda_dwt", c.lambda_dwt);
    c.lambda_reg = j.value("lambda_reg", c.lambda_reg);
    c.truncation = j.value("truncation", c.truncation);
    c.frm_update_every = j.value("frm_update_every", c.frm_update_every);
    c.lr = j.value("lr", c.lr);
    c.iterations = j.value("iterations", c.iterations);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.frm_batch_size = j.value("frm_batch_size", c.frm_batch_size);
    c.frm_lr = j.value("frm_lr", c.frm_lr);
    c.seed = j.value("seed", c.seed);
    c.ru_enabled = j.value("ru_enabled", c.ru_enabled);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  } catch (const Json::exception& e) {
    fail(ErrorCode::kConfig, std::string("refl config: ") + e.what());
  }
  c.validate();
  return c;
}

ReflConfig ReflConfig::from_json(const Json& j) { return from_json(j, ReflConfig{}); }

void ReflConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::kConfig, "refl config: " + what);
  };
  check(lambda_reward >= 0 && lambda_lpips >= 0 && lambda_dwt >= 0 && lambda_reg >= 0,
        "loss weights must be non-negative");
  check(truncation >= 1, "truncation depth N must be >= 1");
  check(frm_update_every >= 1, "FRM update cadence n must be >= 1");
  check(lr > 0 && frm_lr > 0, "learning rates must be positive");
  check(iterations >= 0, "iterations must be >= 0");
  check(batch_size >= 1 && frm_batch_size >= 1, "batch sizes must be >= 1");
  check(checkpoint_every >= 0, "checkpoint_every must be >= 0");
}

ReflBatch make_batch(const std::vector<ReflExample>& data, std::span<const std::size_t> idx) {
  require(!idx.empty(), "empty batch");
  std::vector<Image> hq, lq;
  ReflBatch b;
  for (std::size_t i : idx) {
    const auto& ex = data.at(i);
    hq.push_back(ex.hq);
    lq.push_back(ex.lq);
    b.attrs.push_back(ex.attrs);
  }
  b.hq = to_tensor(hq);
  b.lq = to_tensor(lq);
  return b;
}

Var reward_loss(reward::RewardModel& frm, const Var& restored, std::span<const dataset::Attributes> attrs) {
  nn::GradTrackingScope frozen(frm.params(), false);
  return nn::scale(nn::mean(frm.score(restored, attrs)), -1.0);
}

Var weight_reg_loss(const nn::ParamStore& params, const std::vector<Tensor>& base) {
  std::vector<Var> terms;
  std::size_t k = 0;
  for (const auto& p : params.entries()) {
    if (!p.trainable) continue;
    if (k >= base.size()) fail(ErrorCode::kInvalidArgument, "weight_reg_loss: base snapshot has too few tensors");
    if (base[k].shape() != p.var.shape())
      fail(ErrorCode::kInvalidArgument, "weight_reg_loss: shape mismatch for " + p.name + ": " +
                                            nn::shape_str(p.var.shape()) + " vs " + nn::shape_str(base[k].shape()));
    terms.push_back(nn::softmax_kl(p.var, base[k]));
    ++k;
  }
  if (k != base.size()) fail(ErrorCode::kInvalidArgument, "weight_reg_loss: base snapshot has too many tensors");
  require(!terms.empty(), "weight_reg_loss: no trainable parameters");
  const std::vector<double> w(terms.size(), 1.0 / static_cast<double>(terms.size()));
  return nn::weighted_sum(terms, w);
}

TotalLoss total_loss(const ReflConfig& cfg, reward::RewardModel& frm, const restorer::Restorer& r,
                     const Var& restored, const ReflBatch& batch) {
  if (!r.has_base()) fail(ErrorCode::kState, "total_loss: theta_base snapshot missing");
  const Var hq = Var::constant(batch.hq);
  const Var l_reward = reward_loss(frm, restored, batch.attrs);
  const Var l_lpips = nn::mean(metrics::perceptual_dist(restored, hq));
  const Var l_dwt = wavelet::dwt_lf_loss(restored, hq);
  const Var l_reg = weight_reg_loss(r.denoiser_params(), r.theta_base());
  const std::array<Var, 4> terms{l_reward, l_lpips, l_dwt, l_reg};
  const std::array<double, 4> w{cfg.lambda_reward, cfg.lambda_lpips, cfg.lambda_dwt, cfg.lambda_reg};
  TotalLoss out;
  out.total = nn::weighted_sum(terms, w);
  out.parts = {l_reward.value()[0], l_lpips.value()[0], l_dwt.value()[0], l_reg.value()[0], out.total.value()[0]};
  return out;
}

LossComponents accumulate_gradients(const ReflConfig& cfg, reward::RewardModel& frm, restorer::Restorer& r,
                                    const ReflBatch& batch, std::uint64_t noise_seed, restorer::RestoreTrace* trace) {
  if (!r.has_base()) fail(ErrorCode::kState, "refl_step: theta_base snapshot missing");
  nn::GradTrackingScope ae_frozen(r.ae_params(), false);
  r.denoiser_params().set_grad_tracking(true);
  const restorer::RestoreOptions opt{r.default_steps(), noise_seed, cfg.truncation};
  const Var restored = r.restore(batch.lq, opt, trace);
  const TotalLoss tl = total_loss(cfg, frm, r, restored, batch);
  if (tl.total.requires_grad()) tl.total.backward();
  return tl.parts;
}

ReflTrainer::ReflTrainer(const ReflConfig& cfg, restorer::Restorer& r, reward::RewardModel& frm)
    : cfg_(cfg), r_(&r), frm_(&frm), adam_(r.denoiser_params(), nn::AdamConfig{cfg.lr}), frm_opt_(frm, cfg.frm_lr) {
  cfg_.validate();
}

LossComponents ReflTrainer::refl_step(const ReflBatch& batch, std::uint64_t noise_seed) {
  const std::uint64_t frm_before = frm_->hash(), base_before = r_->base_hash(), ae_before = r_->ae_params().hash();
  adam_.zero_grad();
  const LossComponents parts = accumulate_gradients(cfg_, *frm_, *r_, batch, noise_seed);
  adam_.step();
  adam_.zero_grad();
  if (frm_->hash() != frm_before || r_->base_hash() != base_before || r_->ae_params().hash() != ae_before)
    fail(ErrorCode::kInternal, "refl_step modified parameters outside the denoiser");
  return parts;
}

double ReflTrainer::frm_update(const ReflBatch& batch, std::uint64_t noise_seed) {
  const std::uint64_t den_before = r_->denoiser_params().hash();
  Tensor restored;
  {
    nn::NoGradGuard g;
    restored = r_->restore(batch.lq, {r_->default_steps(), noise_seed, 0}).value();
  }
  const double loss = reward::frm_update_step(frm_opt_, batch.hq, restored, batch.attrs);
  if (r_->denoiser_params().hash() != den_before) fail(ErrorCode::kInternal, "FRM update modified the restorer");
  ++frm_updates_;
  return loss;
}

Json IterationLog::to_json() const {
  return Json{{"iteration", iteration},
              {"reward", loss.reward},
              {"lpips", loss.lpips},
              {"dwt", loss.dwt},
              {"reg", loss.reg},
              {"total", loss.total},
              {"frm_score", frm_score},
              {"drift", drift},
              {"frm_updated", frm_updated},
              {"frm_loss", frm_loss},
              {"frm_hash", hex64(frm_hash)}};
}

namespace {

std::vector<std::size_t> draw(std::size_t n, int k, Rng& rng) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(k));
  for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
  return idx;
}

}  // namespace

ReflLog train_refl(const ReflConfig& cfg, reward::RewardModel& frm, restorer::Restorer& r,
                   const std::vector<ReflExample>& train, const IterationHook& hook) {
  cfg.validate();
  if (train.empty()) fail(ErrorCode::kInvalidArgument, "train_refl: empty training set");
  if (!r.has_base()) r.snapshot_base();
  ReflTrainer trainer(cfg, r, frm);
  Rng batch_rng(Rng::derive(cfg.seed, 0xB47C));
  Rng frm_rng(Rng::derive(cfg.seed, 0xF23));
  ReflLog log;
  for (int it = 0; it < cfg.iterations; ++it) {
    const ReflBatch batch = make_batch(train, draw(train.size(), cfg.batch_size, batch_rng));
    const std::uint64_t noise = Rng::derive(cfg.seed, 2 * static_cast<std::uint64_t>(it));
    IterationLog entry;
    entry.iteration = it + 1;
    entry.loss = trainer.refl_step(batch, noise);
    entry.frm_score = -entry.loss.reward;
    entry.drift = r.drift();
    if (cfg.ru_enabled && (it + 1) % cfg.frm_update_every == 0) {
      const ReflBatch fb = make_batch(train, draw(train.size(), cfg.frm_batch_size, frm_rng));
      entry.frm_loss = trainer.frm_update(fb, Rng::derive(cfg.seed, 2 * static_cast<std::uint64_t>(it) + 1));
      entry.frm_updated = true;
    }
    entry.frm_hash = frm.hash();
    if (hook) hook(entry, r, frm);
    log.iterations.push_back(entry);
  }
  log.frm_updates = trainer.frm_updates();
  return log;
}

Json HackingReport::to_json() const {
  return Json{{"mean_reward", mean_reward},         {"normalized_reward", normalized_reward},
              {"mean_ssim", mean_ssim},             {"mean_perceptual", mean_perceptual},
              {"normalized_quality", normalized_quality}, {"gap", gap},
              {"diversity", diversity}};
}

HackingReport hacking_report(const reward::RewardModel& frm, std::span<const Image> outputs,
                             std::span<const Image> ground_truth, std::span<const dataset::Attributes> attrs) {
  const std::size_t n = outputs.size();
  if (n < 2) fail(ErrorCode::kInvalidArgument, "hacking probe needs at least two test images");
  require(ground_truth.size() == n && attrs.size() == n, "hacking probe: inputs differ in length");
  const auto r_out = frm.score(outputs, attrs);
  const auto r_gt = frm.score(ground_truth, attrs);
  const double tau = frm.tau();
  HackingReport rep;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = metrics::ssim(outputs[i], ground_truth[i]);
    const double pd = metrics::perceptual_dist(outputs[i], ground_truth[i]);
    rep.mean_reward += r_out[i] / n;
    rep.normalized_reward += tau * (r_out[i] - r_gt[i]) / 2.0 / n;
    rep.mean_ssim += s / n;
    rep.mean_perceptual += pd / n;
    rep.normalized_quality += (s - pd - 1.0) / 2.0 / n;
  }
  rep.gap = rep.normalized_reward - rep.normalized_quality;
  double div = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      div += metrics::perceptual_dist(outputs[i], outputs[j]);
      ++pairs;
    }
  rep.diversity = div / pairs;
  return rep;
}

HackingReport hacking_probe(const reward::RewardModel& frm, const restorer::Restorer& r,
                            const std::vector<ReflExample>& test, std::uint64_t noise_seed) {
  if (test.size() < 2) fail(ErrorCode::kInvalidArgument, "hacking probe needs at least two test images");
  std::vector<Image> lq, gt;
  std::vector<dataset::Attributes> attrs;
  for (const auto& ex : test) {
    lq.push_back(ex.lq);
    gt.push_back(ex.hq);
    attrs.push_back(ex.attrs);
  }
  const auto out = r.restore(lq, {r.default_steps(), noise_seed, 0});
  return hacking_report(frm, out, gt, attrs);
}

}  // namespace refl::trainer
