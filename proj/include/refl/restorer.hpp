// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "refl/image.hpp"
#include "refl/io.hpp"
#include "refl/nn/optim.hpp"

namespace refl::restorer {

inline constexpr int kRestorerCheckpointVersion = 1;

enum class Mode { kMultiStep, kSingleStep };
const char* to_string(Mode m);
Mode mode_from_string(const std::string& s);

// Linear-beta schedule. Index 0 is the clean sample (alpha_bar = 1).
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;       // [T + 1], beta[0] unused
  std::vector<double> alpha_bar;  // [T + 1]

  static NoiseSchedule linear(int T, double beta_start, double beta_end);
  double abar(int t) const;
  // Evenly spaced descending DDIM timesteps, e.g. T=50, steps=10 -> 50, 45, ..., 5.
  std::vector<int> ddim_timesteps(int steps) const;
};

struct RestorerConfig {
  Mode mode = Mode::kSingleStep;
  int T = 50;
  double beta_start = 6e-4;
  double beta_end = 0.12;
  int ddim_steps = 10;
  int t_star = 25;  // single-step noising level
  int latent_channels = 4;
  int ae_width = 32;
  int unet_width = 32;
  int time_dim = 32;
  std::uint64_t seed = 1;

  Json to_json() const;
  static RestorerConfig from_json(const Json& j);
  void validate() const;
};

// z_t = sqrt(abar_t) z + sqrt(1 - abar_t) eps, t in [1, T].
nn::Var add_noise(const NoiseSchedule& s, const nn::Var& z, std::span<const int> t, const nn::Var& eps);

// Noise predictor g(z_t, c, t).
using EpsPredictor = std::function<nn::Var(const nn::Var& z_t, const nn::Var& cond, std::span<const int> t)>;

// mean || eps - g(z_t, c, t) ||^2 with t uniform on [1, T] per sample and eps ~ N(0, I).
nn::Var ldm_objective(const NoiseSchedule& s, const nn::Tensor& z, const nn::Tensor& cond, const EpsPredictor& g,
                      Rng& rng);

// Deterministic DDIM (eta = 0) update given the predicted noise.
nn::Var ddim_update(const NoiseSchedule& s, const nn::Var& z_t, const nn::Var& eps_hat, int t, int t_prev);

// Sinusoidal timestep features [N, dim] (constant).
nn::Tensor timestep_embedding(std::span<const int> t, int dim);

// Toy conv autoencoder, 4x spatial downsampling.
class Autoencoder {
 public:
  Autoencoder(nn::ParamStore& store, const RestorerConfig& cfg, Rng& rng);
  nn::Var encode(const nn::Var& images) const;  // raw latent, before scaling
  nn::Var decode(const nn::Var& z) const;       // unclamped

 private:
  std::vector<nn::Conv2d> enc_, dec_;
};

// U-shaped conditional noise predictor g(z_t, c_LQ, t).
class Denoiser {
 public:
  Denoiser(nn::ParamStore& store, const RestorerConfig& cfg, Rng& rng);
  nn::Var operator()(const nn::Var& z_t, const nn::Var& cond, std::span<const int> t) const;

 private:
  struct ResBlock {
    nn::Conv2d conv1, conv2, skip;
    nn::Linear temb;
    bool has_skip = false;
  };
  nn::Var res(const ResBlock& b, const nn::Var& x, const nn::Var& temb) const;
  static ResBlock make_block(nn::ParamStore& store, const std::string& name, int in, int out, int temb_dim, Rng& rng);

  int time_dim_;
  nn::Linear t1_, t2_;
  nn::Conv2d in_, down_, up_, out_;
  ResBlock r_hi_, r_mid1_, r_mid2_, r_dec_;
};

struct RestoreOptions {
  int steps = 1;
  std::uint64_t noise_seed = 0;
  // How many final denoising steps record gradients; earlier steps run
  // without a graph (truncated backpropagation).
  int grad_steps = 0;
};

// Latent trajectory bookkeeping, exposed for truncation checks.
struct RestoreTrace {
  nn::Tensor cond;              // c_LQ
  nn::Tensor last_input;        // z_t entering the final step
  int last_t = 0;
  int last_t_prev = 0;
};

class Restorer {
 public:
  explicit Restorer(const RestorerConfig& cfg = {});
  Restorer(Restorer&&) = default;
  Restorer& operator=(Restorer&&) = default;

  const RestorerConfig& config() const { return cfg_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  void set_mode(Mode m) { cfg_.mode = m; }

  nn::ParamStore& ae_params() { return ae_params_; }
  const nn::ParamStore& ae_params() const { return ae_params_; }
  nn::ParamStore& denoiser_params() { return den_params_; }
  const nn::ParamStore& denoiser_params() const { return den_params_; }

  // images [N, 3, H, W], H and W divisible by 4 -> [N, C, H/4, W/4].
  nn::Var encode(const nn::Var& images) const;
  nn::Var decode(const nn::Var& z, bool clamp = true) const;
  double latent_scale() const { return latent_scale_; }
  void set_latent_scale(double s);

  nn::Var predict_eps(const nn::Var& z_t, const nn::Var& cond, std::span<const int> t) const;
  // Deterministic DDIM (eta = 0) update, t > t_prev >= 0.
  nn::Var ddim_step(const nn::Var& z_t, int t, int t_prev, const nn::Var& cond) const;
  nn::Var ldm_loss(const nn::Tensor& hq, const nn::Tensor& lq, Rng& rng) const;
  // Single-step adaptation: || x0_hat(noised z_LQ at t*) - z_HQ ||^2.
  nn::Var adaptation_loss(const nn::Tensor& hq, const nn::Tensor& lq, Rng& rng) const;

  // Restored images [N, 3, H, W] in [0, 1].
  nn::Var restore(const nn::Tensor& lq, const RestoreOptions& opt, RestoreTrace* trace = nullptr) const;
  std::vector<Image> restore(std::span<const Image> lq, const RestoreOptions& opt) const;
  // Mode default: 1 step in single-step mode, ddim_steps otherwise.
  int default_steps() const;

  // Frozen copy of the denoiser's trainable parameters.
  void snapshot_base();
  bool has_base() const { return !theta_base_.empty(); }
  const std::vector<nn::Tensor>& theta_base() const { return theta_base_; }
  std::uint64_t base_hash() const;
  // ||theta - theta_base||_2 over the denoiser's trainable parameters.
  double drift() const;

  void save(const std::filesystem::path& path) const;
  static Restorer load(const std::filesystem::path& path);

 private:
  RestorerConfig cfg_;
  NoiseSchedule schedule_;
  nn::ParamStore ae_params_, den_params_;
  std::unique_ptr<Autoencoder> ae_;
  std::unique_ptr<Denoiser> den_;
  double latent_scale_ = 1.0;
  std::vector<nn::Tensor> theta_base_;
};

struct TrainingPair {
  Image hq;
  Image lq;
};

struct PretrainConfig {
  int ae_steps = 1500;
  int denoiser_steps = 1500;
  int batch_size = 8;
  double ae_lr = 2e-3;
  double denoiser_lr = 1e-3;
  // Weight of the adaptation term in single-step mode.
  double adaptation_weight = 1.0;
  std::uint64_t seed = 3;
};

struct PretrainLog {
  std::vector<double> ae_loss;
  std::vector<double> denoiser_loss;
};

// Called after every denoiser step with the 1-based step count.
using PretrainHook = std::function<void(int step, const Restorer&)>;

// Autoencoder on reconstruction MSE, then latent scale, then the denoiser.
PretrainLog pretrain(Restorer& r, const std::vector<TrainingPair>& data, const PretrainConfig& cfg,
                     const PretrainHook& hook = nullptr);

}  // namespace refl::restorer
