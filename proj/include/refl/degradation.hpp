// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "refl/image.hpp"
#include "refl/io.hpp"
#include "refl/rng.hpp"

namespace refl::degradation {

// Blur sigma (px), downsample factor r, noise level delta (8-bit units),
// JPEG-style quality q.
struct DegradationParams {
  double sigma = 0.1;
  double r = 1.0;
  double delta = 0.0;
  int q = 100;
};

inline constexpr double kSigmaMin = 0.1, kSigmaMax = 12.0;
inline constexpr double kScaleMin = 1.0, kScaleMax = 12.0;
inline constexpr double kDeltaMin = 0.0, kDeltaMax = 15.0;
inline constexpr int kQualityMin = 30, kQualityMax = 100;

DegradationParams sample_degradation_params(Rng& rng);
void validate(const DegradationParams& p);
Json to_json(const DegradationParams& p);
DegradationParams params_from_json(const Json& j);

// Normalized 1-D taps of radius ceil(3 sigma); the 2-D kernel is their outer product.
std::vector<double> gaussian_taps(double sigma);
struct Kernel2D {
  int radius = 0;
  std::vector<double> weights;  // (2 radius + 1)^2, row-major
  double at(int dy, int dx) const { return weights[(dy + radius) * (2 * radius + 1) + dx + radius]; }
};
Kernel2D gaussian_kernel(double sigma);

// Separable blur with replicated borders.
Image gaussian_blur(const Image& img, double sigma);
// Bilinear resampling with half-pixel centres.
Image resize_bilinear(const Image& img, int height, int width);
// Block average when r is an integer dividing both sides, else bilinear to round(H/r).
Image downsample(const Image& img, double r);
Image add_gaussian_noise(const Image& img, double delta, Rng& rng);
Image jpeg_like_compress(const Image& img, int quality);
// 8x8 quantization table for a quality factor (libjpeg scaling of the luminance table).
std::array<int, 64> quantization_table(int quality);

// blur -> downsample -> noise -> compress -> upsample to the input size -> clip.
Image degrade(const Image& img, const DegradationParams& p, Rng& rng);

}  // namespace refl::degradation
