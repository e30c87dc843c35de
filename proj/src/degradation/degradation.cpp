// SPDX-License-Identifier: Apache-2.0
#include "refl/degradation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "refl/error.hpp"

namespace refl::degradation {

namespace {

constexpr std::array<int, 64> kLuminance = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                                            14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                                            18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                                            49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

// Orthonormal 8-point DCT-II basis: basis[k][n].
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int k = 0; k < 8; ++k)
      for (int n = 0; n < 8; ++n)
        b[k][n] = (k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0)) *
                  std::cos(std::numbers::pi * (2 * n + 1) * k / 16.0);
    return b;
  }();
  return basis;
}

}  // namespace

DegradationParams sample_degradation_params(Rng& rng) {
  DegradationParams p;
  p.sigma = rng.uniform(kSigmaMin, kSigmaMax);
  p.r = rng.uniform(kScaleMin, kScaleMax);
  p.delta = rng.uniform(kDeltaMin, kDeltaMax);
  p.q = static_cast<int>(std::lround(rng.uniform(kQualityMin, kQualityMax)));
  return p;
}

void validate(const DegradationParams& p) {
  require(std::isfinite(p.sigma) && p.sigma > 0.0, "sigma must be positive");
  require(std::isfinite(p.r) && p.r >= 1.0, "downsample factor must be >= 1");
  require(std::isfinite(p.delta) && p.delta >= 0.0, "noise level must be nonnegative");
  require(p.q >= 1 && p.q <= 100, "quality must lie in [1, 100]");
}

Json to_json(const DegradationParams& p) {
  return Json{{"sigma", p.sigma}, {"r", p.r}, {"delta", p.delta}, {"q", p.q}};
}

DegradationParams params_from_json(const Json& j) {
  DegradationParams p{j.at("sigma").get<double>(), j.at("r").get<double>(), j.at("delta").get<double>(),
                      j.at("q").get<int>()};
  validate(p);
  return p;
}

std::vector<double> gaussian_taps(double sigma) {
  require(std::isfinite(sigma) && sigma > 0.0, "gaussian kernel needs sigma > 0");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += taps[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& t : taps) t /= total;
  return taps;
}

Kernel2D gaussian_kernel(double sigma) {
  const auto taps = gaussian_taps(sigma);
  Kernel2D k;
  k.radius = static_cast<int>(taps.size() / 2);
  k.weights.resize(taps.size() * taps.size());
  double total = 0.0;
  for (std::size_t i = 0; i < taps.size(); ++i)
    for (std::size_t j = 0; j < taps.size(); ++j) total += k.weights[i * taps.size() + j] = taps[i] * taps[j];
  for (auto& w : k.weights) w /= total;
  return k;
}

Image gaussian_blur(const Image& img, double sigma) {
  const auto taps = gaussian_taps(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  const int h = img.height(), w = img.width(), c = img.channels();
  Image tmp(h, w, c), out(h, w, c);
  for (int r = 0; r < h; ++r)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) acc += taps[k + radius] * img.at(r, std::clamp(x + k, 0, w - 1), ch);
        tmp.at(r, x, ch) = acc;
      }
  for (int r = 0; r < h; ++r)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k) acc += taps[k + radius] * tmp.at(std::clamp(r + k, 0, h - 1), x, ch);
        out.at(r, x, ch) = acc;
      }
  return out;
}

Image resize_bilinear(const Image& img, int height, int width) {
  require(height >= 1 && width >= 1, "resize target must be positive");
  const int h = img.height(), w = img.width(), c = img.channels();
  if (h == height && w == width) return img;
  Image out(height, width, c);
  const double sy = static_cast<double>(h) / height, sx = static_cast<double>(w) / width;
  for (int r = 0; r < height; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, h - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, w - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      for (int ch = 0; ch < c; ++ch)
        out.at(r, x, ch) = (1 - ty) * ((1 - tx) * img.at(y0, x0, ch) + tx * img.at(y0, x1, ch)) +
                           ty * ((1 - tx) * img.at(y1, x0, ch) + tx * img.at(y1, x1, ch));
    }
  }
  return out;
}

Image downsample(const Image& img, double r) {
  require(r >= 1.0, "downsample factor must be >= 1");
  const int h = img.height(), w = img.width(), c = img.channels();
  const double ri = std::round(r);
  const int k = static_cast<int>(ri);
  if (std::abs(r - ri) < 1e-12 && h % k == 0 && w % k == 0) {
    if (k == 1) return img;
    Image out(h / k, w / k, c);
    const double norm = 1.0 / (k * k);
    for (int r0 = 0; r0 < h / k; ++r0)
      for (int x0 = 0; x0 < w / k; ++x0)
        for (int ch = 0; ch < c; ++ch) {
          double acc = 0.0;
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) acc += img.at(r0 * k + dy, x0 * k + dx, ch);
          out.at(r0, x0, ch) = acc * norm;
        }
    return out;
  }
  return resize_bilinear(img, std::max(1, static_cast<int>(std::lround(h / r))),
                         std::max(1, static_cast<int>(std::lround(w / r))));
}

Image add_gaussian_noise(const Image& img, double delta, Rng& rng) {
  require(delta >= 0.0, "noise level must be nonnegative");
  Image out = img;
  if (delta == 0.0) return out;
  const double sd = delta / 255.0;
  for (auto& v : out.pixels()) v += sd * rng.normal();
  return out;
}

std::array<int, 64> quantization_table(int quality) {
  require(quality >= 1 && quality <= 100, "quality must lie in [1, 100]");
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> q{};
  for (int i = 0; i < 64; ++i) q[i] = std::min(255, (kLuminance[i] * scale + 50) / 100);
  return q;
}

Image jpeg_like_compress(const Image& img, int quality) {
  const auto table = quantization_table(quality);
  const auto& basis = dct_basis();
  const int h = img.height(), w = img.width(), c = img.channels();
  const int ph = (h + 7) / 8 * 8, pw = (w + 7) / 8 * 8;
  Image out(h, w, c);
  std::array<double, 64> block{}, coef{}, tmp{};
  for (int ch = 0; ch < c; ++ch)
    for (int by = 0; by < ph; by += 8)
      for (int bx = 0; bx < pw; bx += 8) {
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            block[y * 8 + x] = 255.0 * img.at(std::min(by + y, h - 1), std::min(bx + x, w - 1), ch) - 128.0;
        // Rows then columns.
        for (int y = 0; y < 8; ++y)
          for (int k = 0; k < 8; ++k) {
            double acc = 0.0;
            for (int n = 0; n < 8; ++n) acc += basis[k][n] * block[y * 8 + n];
            tmp[y * 8 + k] = acc;
          }
        for (int k = 0; k < 8; ++k)
          for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int n = 0; n < 8; ++n) acc += basis[k][n] * tmp[n * 8 + x];
            coef[k * 8 + x] = acc;
          }
        for (int i = 1; i < 64; ++i)
          if (table[i] > 0) coef[i] = std::round(coef[i] / table[i]) * table[i];
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int k = 0; k < 8; ++k) acc += basis[k][y] * coef[k * 8 + x];
            tmp[y * 8 + x] = acc;
          }
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            double acc = 0.0;
            for (int k = 0; k < 8; ++k) acc += basis[k][x] * tmp[y * 8 + k];
            block[y * 8 + x] = acc;
          }
        for (int y = 0; y < 8 && by + y < h; ++y)
          for (int x = 0; x < 8 && bx + x < w; ++x)
            out.at(by + y, bx + x, ch) = std::clamp((block[y * 8 + x] + 128.0) / 255.0, 0.0, 1.0);
      }
  return out;
}

Image degrade(const Image& img, const DegradationParams& p, Rng& rng) {
  validate(p);
  Image x = gaussian_blur(img, p.sigma);
  x = downsample(x, p.r);
  x = add_gaussian_noise(x, p.delta, rng);
  x = jpeg_like_compress(x, p.q);
  x = resize_bilinear(x, img.height(), img.width());
  return clip01(std::move(x));
}

}  // namespace refl::degradation
