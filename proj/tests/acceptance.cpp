// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion. Tolerances are pinned below
// and are not configurable. Pass criterion names as arguments to run a subset.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "refl/annotation.hpp"
#include "refl/dataset.hpp"
#include "refl/degradation.hpp"
#include "refl/error.hpp"
#include "refl/eval.hpp"
#include "refl/io.hpp"
#include "refl/metrics.hpp"
#include "refl/orchestrator.hpp"
#include "refl/refl_trainer.hpp"
#include "refl/wavelet.hpp"
#include "support.hpp"

using namespace refl;
namespace fs = std::filesystem;
using nn::Tensor;
using nn::Var;

namespace tol {
constexpr double kDwtRoundTrip = 1e-6;
constexpr double kDwtEnergyRel = 1e-6;
constexpr double kDwtBlind = 1e-9;
constexpr double kDwtSeconds = 5.0;
constexpr double kGradRel = 1e-3;      // ceiling for every gradient oracle
constexpr double kGradRelDwt = 1e-4;   // wavelet loss
constexpr double kGradRelLpips = 1e-4;  // perceptual distance
constexpr double kGradRelCe = 1e-5;    // cross entropy w.r.t. scores
constexpr double kGradRelReg = 1e-5;   // weight regularizer, 5-element tensor
constexpr double kGradSeconds = 60.0;
constexpr double kPrefExact = 1e-12;
constexpr double kNearIdentity = 2.0 / 255.0;
constexpr double kNoiseStdRel = 0.10;
constexpr int kParamDraws = 10000;
constexpr double kSvmTrainAccuracy = 0.99;
constexpr int kPairsPerImage = 6;
constexpr int kHashIterations = 100;
constexpr int kCadenceEvery = 10;
constexpr int kCadenceIterations = 100;
constexpr int kCadenceUpdates = 10;
constexpr int kReflIterations = 300;
constexpr int kTrainFaces = 256;
constexpr double kLmdSlack = 0.10;  // relative worsening allowed
}  // namespace tol

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path work_root() { return fs::temp_directory_path() / "refl_acceptance"; }

Image add(const Image& a, const Image& b) {
  Image out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.pixels()[i] += b.pixels()[i];
  return out;
}

// Zero-sum 2x2 blocks: orthogonal to the Haar LL analysis filter.
Image hf_perturbation(int h, int w, double eps, std::uint64_t seed) {
  Rng rng(seed);
  Image p(h, w, 3);
  for (int r = 0; r < h; r += 2)
    for (int c = 0; c < w; c += 2)
      for (int ch = 0; ch < 3; ++ch) {
        const double a = eps * rng.uniform(-1, 1), b = eps * rng.uniform(-1, 1), d = eps * rng.uniform(-1, 1);
        p.at(r, c, ch) = a;
        p.at(r, c + 1, ch) = b;
        p.at(r + 1, c, ch) = d;
        p.at(r + 1, c + 1, ch) = -(a + b + d);
      }
  return p;
}

// ---------------------------------------------------------------------------

Outcome dwt_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_rt = 0.0, worst_energy = 0.0, worst_blind = 0.0;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const Image x = testing::random_image(64, 64, 100 + seed, -1.0, 2.0);
    const auto sb = wavelet::dwt2(x);
    worst_rt = std::max(worst_rt, max_abs_diff(wavelet::idwt2(sb), x));
    long double ex = 0, eb = 0;
    for (double v : x.pixels()) ex += static_cast<long double>(v) * v;
    for (const Image* band : {&sb.ll, &sb.lh, &sb.hl, &sb.hh})
      for (double v : band->pixels()) eb += static_cast<long double>(v) * v;
    worst_energy = std::max(worst_energy, static_cast<double>(std::abs(ex - eb) / ex));
    for (std::uint64_t k = 0; k < 5; ++k) {
      const Image y = add(x, hf_perturbation(64, 64, 0.2, seed * 31 + k));
      worst_blind = std::max(worst_blind, wavelet::dwt_lf_loss(y, x));
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = worst_rt <= tol::kDwtRoundTrip && worst_energy <= tol::kDwtEnergyRel &&
                    worst_blind <= tol::kDwtBlind && secs < tol::kDwtSeconds;
  return {pass, "round-trip " + fmt("%.2e", worst_rt) + ", energy rel " + fmt("%.2e", worst_energy) +
                    ", L_DWT under HF perturbation " + fmt("%.2e", worst_blind) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome gradient_oracles() {
  using testing::finite_difference;
  using testing::gather;
  using testing::relative_error;
  using testing::sample_coords;
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream detail;
  bool pass = true;
  auto record = [&](const char* name, double err, double limit) {
    pass = pass && err < limit && limit <= tol::kGradRel;
    detail << name << " " << fmt("%.1e", err) << " ";
  };

  {  // wavelet loss, every coordinate
    const Tensor x = to_tensor(testing::random_image(8, 8, 20));
    const Var y = Var::constant(to_tensor(testing::random_image(8, 8, 21)));
    const Var leaf = Var::leaf(x, true);
    wavelet::dwt_lf_loss(leaf, y).backward();
    auto f = [&](const Tensor& t) { return wavelet::dwt_lf_loss(Var::constant(t), y).value()[0]; };
    record("L_DWT", relative_error(gather(leaf.grad(), {}), finite_difference(f, x, {})), tol::kGradRelDwt);
  }
  {  // perceptual distance
    const Tensor x = to_tensor(testing::random_image(16, 16, 5));
    const Var y = Var::constant(to_tensor(testing::random_image(16, 16, 6)));
    const Var leaf = Var::leaf(x, true);
    nn::sum(metrics::perceptual_dist(leaf, y)).backward();
    auto f = [&](const Tensor& t) { return metrics::perceptual_dist(Var::constant(t), y).value()[0]; };
    const auto c = sample_coords(x.size(), 120, 7);
    record("perceptual", relative_error(gather(leaf.grad(), c), finite_difference(f, x, c)), tol::kGradRelLpips);
  }
  {  // reward score w.r.t. pixels
    reward::RewardModel m;
    Rng rng(3);
    std::vector<dataset::Attributes> attrs = {dataset::sample_attributes(rng), dataset::sample_attributes(rng)};
    const Tensor x = to_tensor(std::vector<Image>{testing::random_image(32, 32, 7, 0.1, 0.9),
                                                  testing::random_image(32, 32, 8, 0.1, 0.9)});
    const Var leaf = Var::leaf(x, true);
    nn::sum(m.score(leaf, attrs)).backward();
    auto f = [&](const Tensor& t) {
      nn::NoGradGuard g;
      return nn::sum(m.score(Var::constant(t), attrs)).value()[0];
    };
    const auto c = sample_coords(x.size(), 60, 9);
    record("score", relative_error(gather(leaf.grad(), c), finite_difference(f, x, c)), tol::kGradRel);
  }
  {  // cross entropy w.r.t. the two scores, against p - y and against FD
    double worst = 0.0;
    for (auto [s1, s2, w] : {std::tuple{0.3, -1.2, 0}, std::tuple{2.0, 2.5, 1}, std::tuple{-4.0, 1.0, 0}}) {
      const std::array<double, 2> y = w == 0 ? std::array<double, 2>{1, 0} : std::array<double, 2>{0, 1};
      auto f = [&](const Tensor& s) { return reward::frm_ce_loss(reward::preference_prob(s[0], s[1]), y); };
      const Tensor s({2}, {s1, s2});
      const auto fd = finite_difference(f, s, {});
      const auto p = reward::preference_prob(s1, s2);
      const std::vector<double> identity = {p.first - y[0], p.second - y[1]};
      const Var a = Var::leaf(Tensor({1}, {s1}), true), b = Var::leaf(Tensor({1}, {s2}), true);
      const std::array<int, 1> winners = {w};
      nn::pairwise_ce(a, b, winners).backward();
      const std::vector<double> graph = {a.grad()[0], b.grad()[0]};
      worst = std::max({worst, relative_error(identity, fd), relative_error(graph, fd)});
    }
    record("frm_ce", worst, tol::kGradRelCe);
  }
  {  // weight regularizer on a 5-element tensor
    nn::ParamStore store;
    store.add("w", Tensor({5}, {0.3, -0.7, 1.1, 0.05, -0.4}));
    const std::vector<Tensor> base = {Tensor({5}, {0.1, -0.2, 0.9, 0.4, -0.8})};
    store.zero_grad();
    trainer::weight_reg_loss(store, base).backward();
    const Tensor analytic = store.at("w").var.grad();
    const Tensor keep = store.at("w").var.value();
    auto f = [&](const Tensor& v) {
      store.at("w").var.mutable_value() = v;
      nn::NoGradGuard g;
      const double out = trainer::weight_reg_loss(store, base).value()[0];
      store.at("w").var.mutable_value() = keep;
      return out;
    };
    record("weight_reg", relative_error(gather(analytic, {}), finite_difference(f, keep, {})), tol::kGradRelReg);
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < tol::kGradSeconds;
  detail << fmt("%.1f", secs) << " s";
  return {pass, detail.str()};
}

Outcome preference_algebra() {
  double shift = 0.0, anti = 0.0;
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double s1 = rng.uniform(-20, 20), s2 = rng.uniform(-20, 20), c = rng.uniform(-50, 50);
    const auto p = reward::preference_prob(s1, s2);
    const auto q = reward::preference_prob(s1 + c, s2 + c);
    const auto r = reward::preference_prob(s2, s1);
    shift = std::max({shift, std::abs(p.first - q.first), std::abs(p.second - q.second)});
    anti = std::max({anti, std::abs(p.first - r.second), std::abs(p.second - r.first)});
  }
  const auto p3 = reward::preference_prob(std::log(3.0), 0.0);
  const double closed = std::max(std::abs(p3.first - 0.75), std::abs(p3.second - 0.25));
  const double ce = std::abs(reward::frm_ce_loss({0.5, 0.5}, {1, 0}) - std::numbers::ln2);
  const bool pass = shift <= tol::kPrefExact && anti <= tol::kPrefExact && closed <= tol::kPrefExact &&
                    ce <= tol::kPrefExact;
  return {pass, "shift " + fmt("%.1e", shift) + ", antisymmetry " + fmt("%.1e", anti) + ", (ln 3, 0) " +
                    fmt("%.1e", closed) + ", CE(uniform) - ln 2 " + fmt("%.1e", ce)};
}

Outcome degradation_statistics() {
  using namespace degradation;
  Rng rng(2024);
  int outside = 0;
  double smin = 1e9, smax = -1e9, rmin = 1e9, rmax = -1e9, dmin = 1e9, dmax = -1e9;
  int qmin = 1000, qmax = -1;
  for (int i = 0; i < tol::kParamDraws; ++i) {
    const auto p = sample_degradation_params(rng);
    outside += !(p.sigma >= kSigmaMin && p.sigma <= kSigmaMax && p.r >= kScaleMin && p.r <= kScaleMax &&
                 p.delta >= kDeltaMin && p.delta <= kDeltaMax && p.q >= kQualityMin && p.q <= kQualityMax);
    smin = std::min(smin, p.sigma), smax = std::max(smax, p.sigma);
    rmin = std::min(rmin, p.r), rmax = std::max(rmax, p.r);
    dmin = std::min(dmin, p.delta), dmax = std::max(dmax, p.delta);
    qmin = std::min(qmin, p.q), qmax = std::max(qmax, p.q);
  }
  // The published intervals themselves.
  const bool intervals = kSigmaMin == 0.1 && kSigmaMax == 12.0 && kScaleMin == 1.0 && kScaleMax == 12.0 &&
                         kDeltaMin == 0.0 && kDeltaMax == 15.0 && kQualityMin == 30 && kQualityMax == 100;

  double near = 0.0;
  for (std::uint64_t s = 0; s < 8; ++s) {
    const auto face = dataset::face_synth(s, {}, 64);
    Rng n(s);
    near = std::max(near, max_abs_diff(degrade(face.image, {0.1, 1.0, 0.0, 100}, n), face.image));
  }

  double worst_noise = 0.0;
  for (double delta : {5.0, 10.0, 15.0}) {
    const Image flat(128, 128, 3, 0.5);
    Rng n(static_cast<std::uint64_t>(delta));
    const Image out = add_gaussian_noise(flat, delta, n);
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double d = out.pixels()[i] - 0.5;
      sum += d;
      sq += d * d;
    }
    const double cnt = static_cast<double>(out.size());
    const double sd = std::sqrt((sq - sum * sum / cnt) / (cnt - 1));
    worst_noise = std::max(worst_noise, std::abs(sd - delta / 255.0) / (delta / 255.0));
  }
  const bool pass = outside == 0 && intervals && near <= tol::kNearIdentity && worst_noise <= tol::kNoiseStdRel;
  std::ostringstream d;
  d << outside << "/" << tol::kParamDraws << " draws outside (sigma " << fmt("%.3f", smin) << ".." << fmt("%.3f", smax)
    << ", r " << fmt("%.3f", rmin) << ".." << fmt("%.3f", rmax) << ", delta " << fmt("%.3f", dmin) << ".."
    << fmt("%.3f", dmax) << ", q " << qmin << ".." << qmax << "), near-identity " << fmt("%.2f", near * 255.0)
    << "/255, noise std rel err " << fmt("%.3f", worst_noise);
  return {pass, d.str()};
}

Outcome svm_annotator() {
  using namespace annotation;
  // Separable by construction: label = sign(f0 - f6) with a 0.1 margin.
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  Rng rng(5);
  while (x.size() < 200) {
    std::vector<double> f(kFeatureDim);
    for (auto& v : f) v = rng.uniform(-1.0, 1.0);
    const double m = f[0] - f[6];
    if (std::abs(m) < 0.1) continue;
    x.push_back(f);
    y.push_back(m > 0 ? 1 : -1);
  }
  const auto res = svm_train(x, y);
  int correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) correct += (res.model.predict(x[i]) == Label::kA ? 1 : -1) == y[i];
  const double acc = static_cast<double>(correct) / static_cast<double>(x.size());

  // Default annotation setup: ground truth plus the configured variants.
  const orchestrator::AnnotationStage stage;
  const int faces = 30;
  std::vector<CandidateSet> sets;
  for (int i = 0; i < faces; ++i) {
    CandidateSet s;
    s.face_id = "face_" + std::to_string(i);
    s.gt_path = "hq/" + s.face_id + ".png";
    for (const auto& v : stage.variants) s.variant_paths.push_back(v + "/" + s.face_id + ".png");
    sets.push_back(s);
  }
  auto pairs = enumerate_pairs(sets);
  std::map<std::string, int> per_face;
  for (const auto& p : pairs) ++per_face[p.face_id];
  bool six = static_cast<int>(per_face.size()) == faces;
  for (const auto& [id, n] : per_face) six = six && n == tol::kPairsPerImage;

  Rng fr(11);
  for (auto& p : pairs) {
    FeatureVector f{};
    for (auto& v : f) v = fr.uniform(0.0, 1.0);
    p.features = f;
  }
  const int budget = 40;
  const auto h = hybrid_label(pairs, budget, simulated_human_choice);
  int unlabeled = 0;
  for (const auto& p : h.pairs) unlabeled += p.label == Label::kUnlabeled;
  // Ground-truth pairs: one per variant per face.
  const int gt_pairs = faces * static_cast<int>(stage.variants.size());
  const int total = static_cast<int>(pairs.size());
  const bool counts = h.fixed_rule == gt_pairs && h.human == budget && h.svm_labeled == total - gt_pairs - budget &&
                      unlabeled == 0;
  std::ostringstream d;
  d << "train accuracy " << fmt("%.3f", acc) << " (" << to_string(res.best.params.kernel) << "), partition "
    << h.fixed_rule << "/" << h.human << "/" << h.svm_labeled << " of " << total << ", pairs per image "
    << (per_face.empty() ? 0 : per_face.begin()->second);
  return {acc >= tol::kSvmTrainAccuracy && counts && six, d.str()};
}

restorer::RestorerConfig tiny_restorer(restorer::Mode mode) {
  restorer::RestorerConfig c;
  c.mode = mode;
  c.ae_width = 8;
  c.unet_width = 8;
  c.time_dim = 8;
  c.ddim_steps = 4;
  return c;
}

std::vector<trainer::ReflExample> examples(int n, int size, std::uint64_t seed) {
  std::vector<trainer::ReflExample> out;
  for (int i = 0; i < n; ++i) {
    const std::uint64_t item = Rng::derive(seed, i);
    Rng rng(item);
    const auto attrs = dataset::sample_attributes(rng);
    const auto face = dataset::face_synth(item, attrs, size);
    out.push_back({face.image, degradation::degrade(face.image, degradation::sample_degradation_params(rng), rng),
                   attrs});
  }
  return out;
}

void jitter(restorer::Restorer& r, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : r.denoiser_params().entries())
    for (std::size_t i = 0; i < p.var.value().size(); ++i) p.var.mutable_value()[i] += sigma * rng.normal();
}

std::vector<Tensor> den_grads(restorer::Restorer& r) {
  std::vector<Tensor> g;
  for (const auto& p : r.denoiser_params().entries()) g.push_back(p.var.grad());
  return g;
}

Outcome truncation_contract() {
  reward::RewardModel frm;
  restorer::Restorer r(tiny_restorer(restorer::Mode::kMultiStep));
  jitter(r, 0.02, 11);
  r.snapshot_base();
  const auto data = examples(2, 32, 8);
  const std::vector<std::size_t> idx{0, 1};
  const auto batch = trainer::make_batch(data, idx);
  const auto cfg = trainer::ReflConfig::defaults_for(restorer::Mode::kMultiStep);

  restorer::RestoreTrace trace;
  r.denoiser_params().zero_grad();
  trainer::accumulate_gradients(cfg, frm, r, batch, 17, &trace);
  const auto truncated = den_grads(r);

  // Oracle: only the final DDIM step, rebuilt from the recorded latent.
  r.denoiser_params().zero_grad();
  {
    nn::GradTrackingScope ae(r.ae_params(), false);
    nn::GradTrackingScope f(frm.params(), false);
    const Var z = r.ddim_step(Var::constant(trace.last_input), trace.last_t, trace.last_t_prev,
                              Var::constant(trace.cond));
    trainer::total_loss(cfg, frm, r, r.decode(z), batch).total.backward();
  }
  const auto oracle = den_grads(r);
  double diff = 0.0, norm = 0.0;
  for (std::size_t k = 0; k < oracle.size(); ++k)
    for (std::size_t i = 0; i < oracle[k].size(); ++i) {
      diff = std::max(diff, std::abs(truncated[k][i] - oracle[k][i]));
      norm = std::max(norm, std::abs(oracle[k][i]));
    }
  r.denoiser_params().zero_grad();

  // Hash invariance over a full training run without reward-model updates.
  auto run_cfg = cfg;
  run_cfg.iterations = tol::kHashIterations;
  run_cfg.batch_size = 2;
  run_cfg.ru_enabled = false;
  const auto more = examples(6, 32, 9);
  const std::uint64_t base_h = r.base_hash(), ae_h = r.ae_params().hash(), frm_h = frm.hash(),
                      den_h = r.denoiser_params().hash();
  int violations = 0;
  trainer::train_refl(run_cfg, frm, r, more,
                      [&](const trainer::IterationLog&, const restorer::Restorer& rr, const reward::RewardModel& f) {
                        violations += rr.base_hash() != base_h || rr.ae_params().hash() != ae_h || f.hash() != frm_h;
                      });
  const bool moved = r.denoiser_params().hash() != den_h;
  std::ostringstream d;
  d << "max |truncated - last-step oracle| " << fmt("%.1e", diff) << " (grad scale " << fmt("%.1e", norm) << "), "
    << violations << "/" << tol::kHashIterations << " iterations changed theta_base/E,D/FRM, denoiser "
    << (moved ? "moved" : "did not move");
  return {diff == 0.0 && norm > 0.0 && violations == 0 && moved, d.str()};
}

Outcome cadence() {
  trainer::ReflConfig cfg;
  cfg.iterations = tol::kCadenceIterations;
  cfg.frm_update_every = tol::kCadenceEvery;
  cfg.batch_size = 2;
  cfg.frm_batch_size = 2;
  reward::RewardModel frm;
  restorer::Restorer r(tiny_restorer(restorer::Mode::kSingleStep));
  jitter(r, 0.02, 15);
  const auto log = trainer::train_refl(cfg, frm, r, examples(6, 32, 11));
  int flagged = 0, misplaced = 0;
  for (const auto& it : log.iterations) {
    flagged += it.frm_updated;
    misplaced += it.frm_updated != (it.iteration % tol::kCadenceEvery == 0);
  }
  std::ostringstream d;
  d << log.frm_updates << " FRM updates in " << log.iterations.size() << " iterations (n=" << tol::kCadenceEvery
    << "), " << misplaced << " off-cadence";
  return {log.frm_updates == tol::kCadenceUpdates && flagged == tol::kCadenceUpdates && misplaced == 0, d.str()};
}

// ---------------------------------------------------------------------------
// Desk-scale experiment shared by the directional and hacking criteria.

// Pretraining is shortened from the 1500/1500 defaults to keep the run under ten minutes.
constexpr int kAcceptancePretrainSteps = 400;

orchestrator::RunConfig desk_config(const fs::path& dir) {
  orchestrator::RunConfig c;
  c.run_dir = dir.string();
  c.pretrain.ae_steps = kAcceptancePretrainSteps;
  c.pretrain.denoiser_steps = kAcceptancePretrainSteps;
  c.refl.iterations = tol::kReflIterations;
  return c;
}

struct DeskRun {
  bool ready = false;
  std::string error;
  orchestrator::RunConfig cfg;
  Json eval_means;
  double drift = 0.0;
  int train_faces = 0;
};

DeskRun& desk_run() {
  static DeskRun run;
  static bool attempted = false;
  if (attempted) return run;
  attempted = true;
  try {
    run.cfg = desk_config(work_root() / "desk");
    fs::remove_all(run.cfg.run_dir);
    const auto res = orchestrator::run_pipeline(run.cfg, {}, {false, [](const std::string& m) {
                                                               std::fprintf(stderr, "  [desk] %s\n", m.c_str());
                                                             }});
    for (const auto& r : res) {
      if (r.stage == "dataset") run.train_faces = r.summary["train"].get<int>();
      if (r.stage == "refl-train") run.drift = r.summary["final_drift"].get<double>();
      if (r.stage == "eval") run.eval_means = r.summary["means"];
    }
    run.ready = true;
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

// Re-runs refl-train (and eval) on a copy of the desk run with a different ReFL config.
// Upstream stages are reused: their fingerprints do not depend on the run directory.
orchestrator::StageResult variant_refl(const std::string& name, const trainer::ReflConfig& refl) {
  const auto& base = desk_run();
  auto cfg = base.cfg;
  cfg.run_dir = (work_root() / name).string();
  cfg.refl = refl;
  fs::remove_all(cfg.run_dir);
  fs::copy(base.cfg.run_dir, cfg.run_dir, fs::copy_options::recursive);
  const auto res = orchestrator::run_pipeline(cfg, {"refl-train"}, {true, nullptr});
  return res.at(0);
}

Outcome directional_refl() {
  const auto& run = desk_run();
  if (!run.ready) return {false, "desk run failed: " + run.error};
  const double score_base = run.eval_means["face_reward"]["base"].get<double>();
  const double score_refl = run.eval_means["face_reward"]["refl"].get<double>();
  const double lmd_base = run.eval_means["lmd_proxy"]["base"].get<double>();
  const double lmd_refl = run.eval_means["lmd_proxy"]["refl"].get<double>();

  auto ablation = run.cfg.refl;
  ablation.lambda_reg = 0.0;
  const double drift_noreg = variant_refl("desk_noreg", ablation).summary["final_drift"].get<double>();

  const bool a = score_refl > score_base;
  const bool b = lmd_refl <= (1.0 + tol::kLmdSlack) * lmd_base;
  const bool c = drift_noreg > run.drift;
  std::ostringstream d;
  d << run.train_faces << " train faces, " << tol::kReflIterations << " iterations: (a) FRM score "
    << fmt("%.4f", score_base) << " -> " << fmt("%.4f", score_refl) << (a ? "" : " [not higher]") << "; (b) lmd_proxy "
    << fmt("%.5f", lmd_base) << " -> " << fmt("%.5f", lmd_refl) << " (" << fmt("%+.1f", 100.0 * (lmd_refl / lmd_base - 1.0))
    << "%)" << (b ? "" : " [over 10%]") << "; (c) drift lambda_reg=" << run.cfg.refl.lambda_reg << " "
    << fmt("%.5g", run.drift) << " vs lambda_reg=0 " << fmt("%.5g", drift_noreg) << (c ? "" : " [not larger]");
  return {a && b && c && run.train_faces == tol::kTrainFaces, d.str()};
}

Outcome hacking_probe() {
  const auto& run = desk_run();
  if (!run.ready) return {false, "desk run failed: " + run.error};
  auto adversarial = run.cfg.refl;
  adversarial.lambda_lpips = adversarial.lambda_dwt = adversarial.lambda_reg = 0.0;
  adversarial.ru_enabled = false;
  variant_refl("desk_adversarial", adversarial);

  // Both restorers are judged by the same pretrained reward model on the eval split.
  const orchestrator::RunPaths def{run.cfg.run_dir}, adv{work_root() / "desk_adversarial"};
  const auto p_def = orchestrator::hacking_probe(run.cfg, def.checkpoint("restorer_refl"), def.checkpoint("frm"));
  const auto p_adv = orchestrator::hacking_probe(run.cfg, adv.checkpoint("restorer_refl"), def.checkpoint("frm"));
  const bool gap = p_adv.gap > p_def.gap;
  const bool div = p_adv.diversity < p_def.diversity;
  std::ostringstream d;
  d << "gap default " << fmt("%.5f", p_def.gap) << " vs adversarial " << fmt("%.5f", p_adv.gap)
    << (gap ? "" : " [not larger]") << "; diversity default " << fmt("%.5f", p_def.diversity) << " vs adversarial "
    << fmt("%.5f", p_adv.diversity) << (div ? "" : " [not smaller]") << " (reward " << fmt("%.4f", p_def.normalized_reward)
    << "/" << fmt("%.4f", p_adv.normalized_reward) << ", quality " << fmt("%.4f", p_def.normalized_quality) << "/"
    << fmt("%.4f", p_adv.normalized_quality) << ")";
  return {gap && div, d.str()};
}

Outcome determinism() {
  // A reduced end-to-end configuration, run twice from scratch in separate directories.
  auto make = [](const std::string& name) {
    orchestrator::RunConfig c;
    c.run_dir = (work_root() / name).string();
    c.dataset.count = 24;
    c.dataset.size = 32;
    c.dataset.fractions = {0.5, 0.25, 0.25};
    c.restorer.ae_width = c.restorer.unet_width = c.restorer.time_dim = 8;
    c.pretrain.ae_steps = c.pretrain.denoiser_steps = 20;
    c.pretrain.batch_size = 4;
    c.annotation.faces = 6;
    c.annotation.human_budget = 6;
    c.frm.embed_dim = 16;
    c.frm_train.steps = 20;
    c.frm_train.batch_size = 8;
    c.refl.iterations = 10;
    c.refl.batch_size = c.refl.frm_batch_size = 2;
    c.refl.frm_update_every = 5;
    fs::remove_all(c.run_dir);
    return c;
  };
  const auto a = make("det_a"), b = make("det_b");
  orchestrator::run_pipeline(a);
  orchestrator::run_pipeline(b);
  int same = 0, total = 0;
  for (const char* f : {"eval/base/report.json", "eval/base/report.csv", "eval/refl/report.json",
                        "eval/refl/report.csv", "eval/compare.json"}) {
    ++total;
    same += read_text_file(fs::path(a.run_dir) / f) == read_text_file(fs::path(b.run_dir) / f);
  }
  std::ostringstream d;
  d << same << "/" << total << " eval artifacts byte-identical across two runs (seed " << a.seed << ")";
  return {same == total, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"dwt_suite", dwt_suite},
      {"gradient_oracles", gradient_oracles},
      {"preference_algebra", preference_algebra},
      {"degradation_statistics", degradation_statistics},
      {"svm_annotator", svm_annotator},
      {"truncation_contract", truncation_contract},
      {"cadence", cadence},
      {"directional_refl", directional_refl},
      {"hacking_probe", hacking_probe},
      {"determinism", determinism}};
  std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
