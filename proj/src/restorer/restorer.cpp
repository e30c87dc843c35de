// SPDX-License-Identifier: Apache-2.0
#include "refl/restorer.hpp"

#include <cmath>
#include <functional>
#include <numbers>

#include "refl/error.hpp"

namespace refl::restorer {

using nn::Tensor;
using nn::Var;

const char* to_string(Mode m) { return m == Mode::kSingleStep ? "single_step" : "multi_step"; }

Mode mode_from_string(const std::string& s) {
  if (s == "single_step") return Mode::kSingleStep;
  if (s == "multi_step") return Mode::kMultiStep;
  fail(ErrorCode::kConfig, "unknown restorer mode '" + s + "' (expected single_step or multi_step)");
}

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
  require(T >= 1, "schedule needs at least one step");
  require(beta_start > 0 && beta_end < 1 && beta_start <= beta_end, "betas must satisfy 0 < start <= end < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.assign(T + 1, 0.0);
  s.alpha_bar.assign(T + 1, 1.0);
  for (int t = 1; t <= T; ++t) {
    s.beta[t] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * (t - 1) / (T - 1);
    s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - s.beta[t]);
  }
  return s;
}

double NoiseSchedule::abar(int t) const {
  if (t < 0 || t > T) fail(ErrorCode::kInvalidArgument, "timestep " + std::to_string(t) + " outside [0, " +
                                                            std::to_string(T) + "]");
  return alpha_bar[t];
}

std::vector<int> NoiseSchedule::ddim_timesteps(int steps) const {
  require(steps >= 1 && steps <= T, "DDIM step count must lie in [1, T]");
  std::vector<int> ts;
  for (int k = 0; k < steps; ++k) ts.push_back(T - (k * T) / steps);
  return ts;
}

Json RestorerConfig::to_json() const {
  return Json{{"mode", restorer::to_string(mode)}, {"T", T},
              {"beta_start", beta_start}, {"beta_end", beta_end},
              {"ddim_steps", ddim_steps}, {"t_star", t_star},
              {"latent_channels", latent_channels}, {"ae_width", ae_width},
              {"unet_width", unet_width}, {"time_dim", time_dim},
              {"seed", seed}};
}

RestorerConfig RestorerConfig::from_json(const Json& j) {
  RestorerConfig c;
  if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
  c.T = j.value("T", c.T);
  c.beta_start = j.value("beta_start", c.beta_start);
  c.beta_end = j.value("beta_end", c.beta_end);
  c.ddim_steps = j.value("ddim_steps", c.ddim_steps);
  c.t_star = j.value("t_star", c.t_star);
  c.latent_channels = j.value("latent_channels", c.latent_channels);
  c.ae_width = j.value("ae_width", c.ae_width);
  c.unet_width = j.value("unet_width", c.unet_width);
  c.time_dim = j.value("time_dim", c.time_dim);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

void RestorerConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::kConfig, "restorer config: " + what);
  };
  check(T >= 1, "T must be >= 1");
  check(beta_start > 0 && beta_end < 1 && beta_start <= beta_end, "need 0 < beta_start <= beta_end < 1");
  check(ddim_steps >= 1 && ddim_steps <= T, "ddim_steps must lie in [1, T]");
  check(t_star >= 1 && t_star <= T, "t_star must lie in [1, T]");
  check(latent_channels >= 1 && ae_width >= 2 && ae_width % 2 == 0, "bad autoencoder sizes");
  check(unet_width >= 1 && time_dim >= 2 && time_dim % 2 == 0, "bad denoiser sizes");
}

namespace {

// Constant tensor shaped like z holding per-sample coefficient f(t_n).
Tensor per_sample(const nn::Shape& shape, std::span<const int> t, const std::function<double(int)>& f) {
  Tensor out(shape);
  const std::size_t per = out.size() / static_cast<std::size_t>(shape[0]);
  for (int n = 0; n < shape[0]; ++n) {
    const double v = f(t[n]);
    std::fill(out.data() + n * per, out.data() + (n + 1) * per, v);
  }
  return out;
}

Tensor standard_normal(const nn::Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

}  // namespace

Var add_noise(const NoiseSchedule& s, const Var& z, std::span<const int> t, const Var& eps) {
  require(z.shape() == eps.shape(), "add_noise: z and eps differ in shape");
  require(static_cast<int>(t.size()) == z.shape()[0], "add_noise: one timestep per sample required");
  for (int ti : t)
    if (ti < 1 || ti > s.T) fail(ErrorCode::kInvalidArgument, "add_noise: timestep " + std::to_string(ti) + " outside [1, T]");
  const Var a = Var::constant(per_sample(z.shape(), t, [&](int ti) { return std::sqrt(s.abar(ti)); }));
  const Var b = Var::constant(per_sample(z.shape(), t, [&](int ti) { return std::sqrt(1.0 - s.abar(ti)); }));
  return nn::add(nn::mul(a, z), nn::mul(b, eps));
}

Var ldm_objective(const NoiseSchedule& s, const Tensor& z, const Tensor& cond, const EpsPredictor& g, Rng& rng) {
  if (z.empty() || z.rank() != 4) fail(ErrorCode::kInvalidArgument, "ldm loss needs a non-empty latent batch");
  require(z.shape() == cond.shape(), "ldm loss: latent and condition differ in shape");
  std::vector<int> t(static_cast<std::size_t>(z.dim(0)));
  for (auto& ti : t) ti = static_cast<int>(rng.uniform_int(1, s.T));
  const Var eps = Var::constant(standard_normal(z.shape(), rng));
  const Var zt = add_noise(s, Var::constant(z), t, eps);
  return nn::mean(nn::square(nn::sub(g(zt, Var::constant(cond), t), eps)));
}

Var ddim_update(const NoiseSchedule& s, const Var& z_t, const Var& eps_hat, int t, int t_prev) {
  if (!(t > t_prev && t_prev >= 0 && t <= s.T))
    fail(ErrorCode::kInvalidArgument, "ddim step needs T >= t > t_prev >= 0, got t=" + std::to_string(t) +
                                          ", t_prev=" + std::to_string(t_prev));
  const double a = s.abar(t), ap = s.abar(t_prev);
  const Var x0 = nn::scale(nn::sub(z_t, nn::scale(eps_hat, std::sqrt(1.0 - a))), 1.0 / std::sqrt(a));
  if (t_prev == 0) return x0;
  return nn::add(nn::scale(x0, std::sqrt(ap)), nn::scale(eps_hat, std::sqrt(1.0 - ap)));
}

Tensor timestep_embedding(std::span<const int> t, int dim) {
  const int half = dim / 2;
  Tensor out({static_cast<int>(t.size()), dim});
  for (std::size_t n = 0; n < t.size(); ++n)
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      out[n * dim + i] = std::sin(t[n] * freq);
      out[n * dim + half + i] = std::cos(t[n] * freq);
    }
  return out;
}

Autoencoder::Autoencoder(nn::ParamStore& store, const RestorerConfig& cfg, Rng& rng) {
  const int w = cfg.ae_width, hw = cfg.ae_width / 2, c = cfg.latent_channels;
  enc_.push_back(nn::Conv2d::create(store, "enc.0", 3, hw, 3, 1, rng));
  enc_.push_back(nn::Conv2d::create(store, "enc.1", hw, w, 3, 2, rng));
  enc_.push_back(nn::Conv2d::create(store, "enc.2", w, w, 3, 2, rng));
  enc_.push_back(nn::Conv2d::create(store, "enc.3", w, c, 3, 1, rng, true, 0.5));
  dec_.push_back(nn::Conv2d::create(store, "dec.0", c, w, 3, 1, rng));
  dec_.push_back(nn::Conv2d::create(store, "dec.1", w, w, 3, 1, rng));
  dec_.push_back(nn::Conv2d::create(store, "dec.2", w, hw, 3, 1, rng));
  dec_.push_back(nn::Conv2d::create(store, "dec.3", hw, hw, 3, 1, rng));
  dec_.push_back(nn::Conv2d::create(store, "dec.4", hw, 3, 3, 1, rng, true, 0.5));
  store.at("dec.4.bias").var.mutable_value().fill(0.5);
}

Var Autoencoder::encode(const Var& images) const {
  Var h = nn::add_scalar(nn::scale(images, 2.0), -1.0);
  for (std::size_t i = 0; i + 1 < enc_.size(); ++i) h = nn::silu(enc_[i](h));
  return enc_.back()(h);
}

Var Autoencoder::decode(const Var& z) const {
  Var h = nn::silu(dec_[0](z));
  h = nn::silu(dec_[1](h));
  h = nn::silu(dec_[2](nn::upsample_nearest2x(h)));
  h = nn::silu(dec_[3](nn::upsample_nearest2x(h)));
  return dec_[4](h);
}

Denoiser::ResBlock Denoiser::make_block(nn::ParamStore& store, const std::string& name, int in, int out,
                                        int temb_dim, Rng& rng) {
  ResBlock b;
  b.conv1 = nn::Conv2d::create(store, name + ".conv1", in, out, 3, 1, rng);
  b.temb = nn::Linear::create(store, name + ".temb", temb_dim, out, rng);
  b.conv2 = nn::Conv2d::create(store, name + ".conv2", out, out, 3, 1, rng, true, 0.5);
  if (in != out) {
    b.skip = nn::Conv2d::create(store, name + ".skip", in, out, 1, 1, rng);
    b.has_skip = true;
  }
  return b;
}

Denoiser::Denoiser(nn::ParamStore& store, const RestorerConfig& cfg, Rng& rng) : time_dim_(cfg.time_dim) {
  const int w = cfg.unet_width, c = cfg.latent_channels, td = 2 * w;
  t1_ = nn::Linear::create(store, "time.fc1", cfg.time_dim, td, rng);
  t2_ = nn::Linear::create(store, "time.fc2", td, td, rng);
  in_ = nn::Conv2d::create(store, "in", 2 * c, w, 3, 1, rng);
  r_hi_ = make_block(store, "hi", w, w, td, rng);
  down_ = nn::Conv2d::create(store, "down", w, 2 * w, 3, 2, rng);
  r_mid1_ = make_block(store, "mid1", 2 * w, 2 * w, td, rng);
  r_mid2_ = make_block(store, "mid2", 2 * w, 2 * w, td, rng);
  up_ = nn::Conv2d::create(store, "up", 2 * w, w, 3, 1, rng);
  r_dec_ = make_block(store, "dec", 2 * w, w, td, rng);
  out_ = nn::Conv2d::create(store, "out", w, c, 3, 1, rng);
  // Start from a zero prediction.
  store.at("out.weight").var.mutable_value().fill(0.0);
}

Var Denoiser::res(const ResBlock& b, const Var& x, const Var& temb) const {
  Var h = b.conv1(nn::silu(x));
  h = nn::add_spatial_bias(h, b.temb(nn::silu(temb)));
  h = b.conv2(nn::silu(h));
  return nn::add(b.has_skip ? b.skip(x) : x, h);
}

Var Denoiser::operator()(const Var& z_t, const Var& cond, std::span<const int> t) const {
  require(z_t.shape() == cond.shape(), "denoiser: z_t and condition differ in shape");
  require(z_t.shape()[2] % 2 == 0 && z_t.shape()[3] % 2 == 0, "denoiser: latent sides must be even");
  const Var temb = t2_(nn::silu(t1_(Var::constant(timestep_embedding(t, time_dim_)))));
  const Var h0 = res(r_hi_, in_(nn::concat_channels(z_t, cond)), temb);
  Var m = res(r_mid1_, down_(nn::silu(h0)), temb);
  m = res(r_mid2_, m, temb);
  const Var u = up_(nn::upsample_nearest2x(nn::silu(m)));
  const Var d = res(r_dec_, nn::concat_channels(u, h0), temb);
  return out_(nn::silu(d));
}

Restorer::Restorer(const RestorerConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  schedule_ = NoiseSchedule::linear(cfg_.T, cfg_.beta_start, cfg_.beta_end);
  Rng rng(Rng::derive(cfg_.seed, 0xAE));
  ae_ = std::make_unique<Autoencoder>(ae_params_, cfg_, rng);
  Rng drng(Rng::derive(cfg_.seed, 0xD0));
  den_ = std::make_unique<Denoiser>(den_params_, cfg_, drng);
}

void Restorer::set_latent_scale(double s) {
  require(std::isfinite(s) && s > 0, "latent scale must be positive");
  latent_scale_ = s;
}

Var Restorer::encode(const Var& images) const {
  const auto& s = images.shape();
  require(s.size() == 4 && s[1] == 3, "encode expects [N, 3, H, W] images");
  if (s[2] % 4 != 0 || s[3] % 4 != 0)
    fail(ErrorCode::kInvalidArgument, "image sides must be divisible by 4, got " + nn::shape_str(s));
  return nn::scale(ae_->encode(images), latent_scale_);
}

Var Restorer::decode(const Var& z, bool clamp) const {
  require(z.shape().size() == 4 && z.shape()[1] == cfg_.latent_channels, "decode expects [N, C, h, w] latents");
  const Var x = ae_->decode(nn::scale(z, 1.0 / latent_scale_));
  return clamp ? nn::clamp01(x) : x;
}

Var Restorer::predict_eps(const Var& z_t, const Var& cond, std::span<const int> t) const {
  return (*den_)(z_t, cond, t);
}

Var Restorer::ddim_step(const Var& z_t, int t, int t_prev, const Var& cond) const {
  if (!(t > t_prev && t_prev >= 0 && t <= cfg_.T))
    fail(ErrorCode::kInvalidArgument, "ddim step needs T >= t > t_prev >= 0, got t=" + std::to_string(t) +
                                          ", t_prev=" + std::to_string(t_prev));
  const std::vector<int> ts(static_cast<std::size_t>(z_t.shape()[0]), t);
  return ddim_update(schedule_, z_t, predict_eps(z_t, cond, ts), t, t_prev);
}

Var Restorer::ldm_loss(const Tensor& hq, const Tensor& lq, Rng& rng) const {
  require(!hq.empty() && hq.shape() == lq.shape(), "ldm_loss: empty or mismatched batch");
  Tensor z, c;
  {
    nn::NoGradGuard g;
    z = encode(Var::constant(hq)).value();
    c = encode(Var::constant(lq)).value();
  }
  return ldm_objective(
      schedule_, z, c, [this](const Var& zt, const Var& cv, std::span<const int> t) { return predict_eps(zt, cv, t); },
      rng);
}

Var Restorer::adaptation_loss(const Tensor& hq, const Tensor& lq, Rng& rng) const {
  require(!hq.empty() && hq.shape() == lq.shape(), "adaptation_loss: empty or mismatched batch");
  Tensor z, c;
  {
    nn::NoGradGuard g;
    z = encode(Var::constant(hq)).value();
    c = encode(Var::constant(lq)).value();
  }
  const std::vector<int> t(static_cast<std::size_t>(z.shape()[0]), cfg_.t_star);
  const Var cv = Var::constant(c);
  const Var zt = add_noise(schedule_, cv, t, Var::constant(standard_normal(z.shape(), rng)));
  return nn::mean(nn::square(nn::sub(ddim_step(zt, cfg_.t_star, 0, cv), Var::constant(z))));
}

int Restorer::default_steps() const { return cfg_.mode == Mode::kSingleStep ? 1 : cfg_.ddim_steps; }

Var Restorer::restore(const Tensor& lq, const RestoreOptions& opt, RestoreTrace* trace) const {
  require(lq.rank() == 4 && lq.dim(0) > 0, "restore expects a non-empty [N, 3, H, W] batch");
  if (cfg_.mode == Mode::kSingleStep && opt.steps != 1)
    fail(ErrorCode::kInvalidArgument, "single_step mode restores with exactly 1 step, got " + std::to_string(opt.steps));
  require(opt.steps >= 1, "restore needs at least one step");
  require(opt.grad_steps >= 0, "grad_steps must be non-negative");
  Tensor c;
  {
    nn::NoGradGuard g;
    c = encode(Var::constant(lq)).value();
  }
  const Var cv = Var::constant(c);
  Rng rng(opt.noise_seed);
  std::vector<int> ts;
  Var z;
  if (cfg_.mode == Mode::kSingleStep) {
    ts = {cfg_.t_star};
    const std::vector<int> t(static_cast<std::size_t>(c.dim(0)), cfg_.t_star);
    nn::NoGradGuard g;
    z = add_noise(schedule_, cv, t, Var::constant(standard_normal(c.shape(), rng)));
  } else {
    ts = schedule_.ddim_timesteps(opt.steps);
    z = Var::constant(standard_normal(c.shape(), rng));
  }
  const int total = static_cast<int>(ts.size());
  const int first_grad = total - std::min(opt.grad_steps, total);
  for (int k = 0; k < total; ++k) {
    const int t = ts[k], t_prev = k + 1 < total ? ts[k + 1] : 0;
    if (k == total - 1 && trace) {
      trace->cond = c;
      trace->last_input = z.value();
      trace->last_t = t;
      trace->last_t_prev = t_prev;
    }
    if (k < first_grad) {
      nn::NoGradGuard g;
      z = ddim_step(z, t, t_prev, cv);
    } else {
      z = ddim_step(z, t, t_prev, cv);
    }
  }
  if (opt.grad_steps == 0) {
    nn::NoGradGuard g;
    return decode(z);
  }
  return decode(z);
}

std::vector<Image> Restorer::restore(std::span<const Image> lq, const RestoreOptions& opt) const {
  RestoreOptions o = opt;
  o.grad_steps = 0;
  nn::NoGradGuard g;
  return images_from_tensor(restore(to_tensor(lq), o).value());
}

void Restorer::snapshot_base() { theta_base_ = den_params_.snapshot(true); }

std::uint64_t Restorer::base_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : theta_base_) h = Rng::splitmix(h ^ t.hash());
  return h;
}

double Restorer::drift() const {
  if (!has_base()) fail(ErrorCode::kState, "no base snapshot; call snapshot_base first");
  double s = 0.0;
  std::size_t k = 0;
  for (const auto& p : den_params_.entries()) {
    if (!p.trainable) continue;
    const auto& cur = p.var.value();
    const auto& base = theta_base_.at(k++);
    for (std::size_t i = 0; i < cur.size(); ++i) s += (cur[i] - base[i]) * (cur[i] - base[i]);
  }
  return std::sqrt(s);
}

void Restorer::save(const std::filesystem::path& path) const {
  Archive ar;
  ar.metadata["kind"] = "restorer";
  ar.metadata["version"] = kRestorerCheckpointVersion;
  ar.metadata["config"] = cfg_.to_json();
  ar.metadata["latent_scale"] = latent_scale_;
  ar.metadata["base_tensors"] = theta_base_.size();
  for (const auto& p : ae_params_.entries()) ar.arrays.emplace_back("ae/" + p.name, p.var.value());
  for (const auto& p : den_params_.entries()) ar.arrays.emplace_back("den/" + p.name, p.var.value());
  for (std::size_t i = 0; i < theta_base_.size(); ++i)
    ar.arrays.emplace_back("base/" + std::to_string(i), theta_base_[i]);
  save_archive(ar, path);
}

Restorer Restorer::load(const std::filesystem::path& path) {
  const Archive ar = load_archive(path);
  if (ar.metadata.value("kind", std::string()) != "restorer")
    fail(ErrorCode::kIo, path.string() + " is not a restorer checkpoint");
  if (ar.metadata.value("version", 0) != kRestorerCheckpointVersion)
    fail(ErrorCode::kIo, path.string() + ": unsupported restorer checkpoint version");
  Restorer r(RestorerConfig::from_json(ar.metadata.at("config")));
  r.ae_params_.load(ar.arrays, "ae/");
  r.den_params_.load(ar.arrays, "den/");
  r.latent_scale_ = ar.metadata.at("latent_scale").get<double>();
  const std::size_t nb = ar.metadata.value("base_tensors", std::size_t{0});
  for (std::size_t i = 0; i < nb; ++i) r.theta_base_.push_back(ar.array("base/" + std::to_string(i)));
  return r;
}

namespace {

Tensor gather_batch(const std::vector<TrainingPair>& data, const std::vector<std::size_t>& idx, bool hq) {
  std::vector<Image> imgs;
  imgs.reserve(idx.size());
  for (std::size_t i : idx) imgs.push_back(hq ? data[i].hq : data[i].lq);
  return to_tensor(imgs);
}

// Cosine decay to 5% of the base rate.
double cosine_lr(double base, int step, int total) {
  const double progress = total > 1 ? static_cast<double>(step) / (total - 1) : 1.0;
  return base * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

std::vector<std::size_t> draw(std::size_t n, int k, Rng& rng) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(k));
  for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
  return idx;
}

}  // namespace

PretrainLog pretrain(Restorer& r, const std::vector<TrainingPair>& data, const PretrainConfig& cfg,
                     const PretrainHook& hook) {
  if (data.empty()) fail(ErrorCode::kInvalidArgument, "pretrain: empty dataset");
  require(cfg.batch_size > 0 && cfg.ae_steps >= 0 && cfg.denoiser_steps >= 0, "pretrain: bad step counts");
  for (const auto& p : data) require_same_shape(p.hq, p.lq, "pretrain pair");
  PretrainLog log;
  Rng rng(cfg.seed);
  const int bs = std::min<int>(cfg.batch_size, static_cast<int>(data.size()));

  if (cfg.ae_steps > 0) {
    nn::Adam opt(r.ae_params(), nn::AdamConfig{cfg.ae_lr});
    nn::GradTrackingScope freeze_den(r.denoiser_params(), false);
    const double keep_scale = r.latent_scale();
    r.set_latent_scale(1.0);
    for (int step = 0; step < cfg.ae_steps; ++step) {
      const Tensor x = gather_batch(data, draw(data.size(), bs, rng), true);
      opt.set_lr(cosine_lr(cfg.ae_lr, step, cfg.ae_steps));
      opt.zero_grad();
      const Var xv = Var::constant(x);
      const Var loss = nn::mean(nn::square(nn::sub(r.decode(r.encode(xv), false), xv)));
      loss.backward();
      opt.step();
      log.ae_loss.push_back(loss.value()[0]);
    }
    opt.zero_grad();
    // Unit-variance latents for the diffusion stage.
    nn::NoGradGuard g;
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < data.size(); i += 16) {
      std::vector<std::size_t> idx;
      for (std::size_t j = i; j < std::min(data.size(), i + 16); ++j) idx.push_back(j);
      const Tensor z = r.encode(Var::constant(gather_batch(data, idx, true))).value();
      for (double v : z.values()) {
        sum += v;
        sq += v * v;
      }
      count += z.size();
    }
    const double mean = sum / count, var = sq / count - mean * mean;
    r.set_latent_scale(var > 1e-12 ? 1.0 / std::sqrt(var) : keep_scale);
  }

  if (cfg.denoiser_steps > 0) {
    nn::Adam opt(r.denoiser_params(), nn::AdamConfig{cfg.denoiser_lr});
    nn::GradTrackingScope freeze_ae(r.ae_params(), false);
    const bool adapt = r.config().mode == Mode::kSingleStep && cfg.adaptation_weight > 0;
    for (int step = 0; step < cfg.denoiser_steps; ++step) {
      const auto idx = draw(data.size(), bs, rng);
      const Tensor hq = gather_batch(data, idx, true), lq = gather_batch(data, idx, false);
      opt.set_lr(cosine_lr(cfg.denoiser_lr, step, cfg.denoiser_steps));
      opt.zero_grad();
      Var loss = r.ldm_loss(hq, lq, rng);
      if (adapt) loss = nn::add(loss, nn::scale(r.adaptation_loss(hq, lq, rng), cfg.adaptation_weight));
      loss.backward();
      opt.step();
      log.denoiser_loss.push_back(loss.value()[0]);
      if (hook) hook(step + 1, r);
    }
    opt.zero_grad();
  }
  return log;
}

}  // namespace refl::restorer
