// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>

#include "refl/image.hpp"
#include "refl/nn/ops.hpp"

namespace refl::metrics {

inline constexpr double kPsnrCap = 100.0;
inline constexpr int kHistogramBins = 32;
inline constexpr double kHistogramMax = 0.25;
inline constexpr std::uint64_t kPerceptualSeed = 1234;

// SSIM with an 11x11 Gaussian window (sigma 1.5), valid filtering, channel mean.
double ssim(const Image& x, const Image& y);
// 10 log10(1 / MSE), capped at 100 dB when MSE < 1e-10.
double psnr(const Image& x, const Image& y);

// Random-feature perceptual distance: three fixed 3x3 stride-2 conv+ReLU layers
// (16, 32, 32 channels, seed 1234) on 2x-1 scaled inputs; features are
// unit-normalized per location and the squared difference is summed over
// channels, averaged over space, then averaged over layers.
double perceptual_dist(const Image& x, const Image& y);
// Batched NCHW form: returns per-sample distances [N]. Differentiable in both inputs.
nn::Var perceptual_dist(const nn::Var& x, const nn::Var& y);

// Mean forward-difference gradient magnitude of the luma image.
double sharpness(const Image& x);
// 1.4826 * median absolute deviation of the HH Haar band (all channels pooled).
double noise_level(const Image& x);
// 32-bin histogram of luma gradient magnitudes over [0, 0.25], normalized.
std::array<double, kHistogramBins> gradient_histogram(const Image& x);
// -KL(histogram(x) || reference histogram).
double naturalness(const Image& x);
const std::array<double, kHistogramBins>& naturalness_reference();
// Mean histogram of `count` clean synthetic faces (used to regenerate the shipped table).
std::array<double, kHistogramBins> compute_naturalness_reference(int count, std::uint64_t seed);

struct MetricVector {
  double ssim = 0, psnr = 0, perceptual_dist = 0, sharpness = 0, noise_level = 0, naturalness = 0;
  std::array<double, 6> values() const { return {ssim, psnr, perceptual_dist, sharpness, noise_level, naturalness}; }
};
inline constexpr std::array<const char*, 6> kMetricNames = {"ssim",      "psnr",        "perceptual_dist",
                                                            "sharpness", "noise_level", "naturalness"};

// Full-reference entries compare against ref; no-reference entries use img only.
MetricVector image_metrics(const Image& img, const Image& ref);
// [metrics(a) ; metrics(b)] in MetricVector order.
std::array<double, 12> pair_features(const Image& a, const Image& b, const Image& ref);

}  // namespace refl::metrics
