// SPDX-License-Identifier: Apache-2.0
#include "refl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "refl/dataset.hpp"
#include "refl/error.hpp"
#include "refl/nn/layers.hpp"
#include "refl/wavelet.hpp"

namespace refl::metrics {

namespace {

constexpr std::array<double, kHistogramBins> kReference = {
#include "naturalness_reference.inc"
};

constexpr double kHistSmoothing = 1e-4;

std::vector<double> ssim_window() {
  std::vector<double> w(11);
  double total = 0.0;
  for (int i = 0; i < 11; ++i) total += w[i] = std::exp(-0.5 * (i - 5) * (i - 5) / (1.5 * 1.5));
  for (auto& v : w) v /= total;
  return w;
}

// Valid separable filtering of one channel plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w, const std::vector<double>& win) {
  const int k = static_cast<int>(win.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
  for (int r = 0; r < h; ++r)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += win[i] * plane[static_cast<std::size_t>(r) * w + x + i];
      tmp[static_cast<std::size_t>(r) * ow + x] = acc;
    }
  for (int r = 0; r < oh; ++r)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += win[i] * tmp[static_cast<std::size_t>(r + i) * ow + x];
      out[static_cast<std::size_t>(r) * ow + x] = acc;
    }
  return out;
}

std::vector<double> luma(const Image& x) {
  std::vector<double> y(static_cast<std::size_t>(x.height()) * x.width());
  for (int r = 0; r < x.height(); ++r)
    for (int c = 0; c < x.width(); ++c) {
      double v = 0.0;
      if (x.channels() == 3)
        v = 0.299 * x.at(r, c, 0) + 0.587 * x.at(r, c, 1) + 0.114 * x.at(r, c, 2);
      else
        for (int ch = 0; ch < x.channels(); ++ch) v += x.at(r, c, ch) / x.channels();
      y[static_cast<std::size_t>(r) * x.width() + c] = v;
    }
  return y;
}

std::vector<double> gradient_magnitudes(const Image& x) {
  const int h = x.height(), w = x.width();
  std::vector<double> out;
  if (h < 2 || w < 2) return out;
  const auto y = luma(x);
  out.reserve(static_cast<std::size_t>(h - 1) * (w - 1));
  for (int r = 0; r + 1 < h; ++r)
    for (int c = 0; c + 1 < w; ++c) {
      const double v = y[static_cast<std::size_t>(r) * w + c];
      out.push_back(std::hypot(y[static_cast<std::size_t>(r) * w + c + 1] - v, y[static_cast<std::size_t>(r + 1) * w + c] - v));
    }
  return out;
}

struct PerceptualNet {
  std::array<nn::Var, 3> weight, bias;
};

const PerceptualNet& perceptual_net() {
  static const PerceptualNet net = [] {
    PerceptualNet n;
    Rng rng(kPerceptualSeed);
    const std::array<int, 4> ch = {3, 16, 32, 32};
    for (int l = 0; l < 3; ++l) {
      n.weight[l] = nn::Var::constant(nn::he_normal({ch[l + 1], ch[l], 3, 3}, ch[l] * 9, rng));
      nn::Tensor b({ch[l + 1]});
      for (auto& v : b.values()) v = 0.1 * rng.normal();
      n.bias[l] = nn::Var::constant(std::move(b));
    }
    return n;
  }();
  return net;
}

}  // namespace

double ssim(const Image& x, const Image& y) {
  require_same_shape(x, y, "ssim");
  require(x.height() >= 11 && x.width() >= 11, "ssim needs images of at least 11x11");
  static const std::vector<double> win = ssim_window();
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int h = x.height(), w = x.width();
  double total = 0.0;
  for (int ch = 0; ch < x.channels(); ++ch) {
    std::vector<double> px(static_cast<std::size_t>(h) * w), py(px.size()), pxx(px.size()), pyy(px.size()),
        pxy(px.size());
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * w + c;
        px[i] = x.at(r, c, ch);
        py[i] = y.at(r, c, ch);
        pxx[i] = px[i] * px[i];
        pyy[i] = py[i] * py[i];
        pxy[i] = px[i] * py[i];
      }
    const auto mx = filter_valid(px, h, w, win), my = filter_valid(py, h, w, win);
    const auto sxx = filter_valid(pxx, h, w, win), syy = filter_valid(pyy, h, w, win),
               sxy = filter_valid(pxy, h, w, win);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / x.channels();
}

double psnr(const Image& x, const Image& y) {
  require_same_shape(x, y, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.pixels()[i] - y.pixels()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(std::max<std::size_t>(1, x.size()));
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

nn::Var perceptual_dist(const nn::Var& x, const nn::Var& y) {
  require(x.shape() == y.shape(), "perceptual_dist: shape mismatch " + nn::shape_str(x.shape()) + " vs " +
                                      nn::shape_str(y.shape()));
  require(x.value().rank() == 4, "perceptual_dist expects NCHW input");
  const auto& net = perceptual_net();
  nn::Var fx = nn::add_scalar(nn::scale(x, 2.0), -1.0);
  nn::Var fy = nn::add_scalar(nn::scale(y, 2.0), -1.0);
  nn::Var total;
  for (int l = 0; l < 3; ++l) {
    fx = nn::relu(nn::conv2d(fx, net.weight[l], net.bias[l], 2, 1));
    fy = nn::relu(nn::conv2d(fy, net.weight[l], net.bias[l], 2, 1));
    const nn::Var d = nn::mean_per_sample(nn::square(nn::sub(nn::normalize_channels(fx, 1e-8),
                                                             nn::normalize_channels(fy, 1e-8))));
    const nn::Var layer = nn::scale(d, fx.value().dim(1));
    total = total.defined() ? nn::add(total, layer) : layer;
  }
  return nn::scale(total, 1.0 / 3.0);
}

double perceptual_dist(const Image& x, const Image& y) {
  require_same_shape(x, y, "perceptual_dist");
  nn::NoGradGuard guard;
  return perceptual_dist(nn::Var::constant(to_tensor(x)), nn::Var::constant(to_tensor(y))).value()[0];
}

double sharpness(const Image& x) {
  const auto g = gradient_magnitudes(x);
  if (g.empty()) return 0.0;
  double acc = 0.0;
  for (double v : g) acc += v;
  return acc / static_cast<double>(g.size());
}

double noise_level(const Image& x) {
  if (x.height() < 2 || x.width() < 2) return 0.0;
  const int h = x.height() / 2 * 2, w = x.width() / 2 * 2;
  Image even(h, w, x.channels());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < x.channels(); ++ch) even.at(r, c, ch) = x.at(r, c, ch);
  const Image hh = wavelet::dwt2(even).hh;
  std::vector<double> v(hh.pixels().begin(), hh.pixels().end());
  auto median = [](std::vector<double>& a) {
    const std::size_t mid = a.size() / 2;
    std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(mid), a.end());
    double m = a[mid];
    if (a.size() % 2 == 0) m = 0.5 * (m + *std::max_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(mid)));
    return m;
  };
  const double med = median(v);
  for (auto& e : v) e = std::abs(e - med);
  return 1.4826 * median(v);
}

std::array<double, kHistogramBins> gradient_histogram(const Image& x) {
  std::array<double, kHistogramBins> hist{};
  const auto g = gradient_magnitudes(x);
  if (g.empty()) return hist;
  for (double v : g) {
    const int bin = std::min(kHistogramBins - 1, static_cast<int>(v / kHistogramMax * kHistogramBins));
    hist[bin] += 1.0;
  }
  for (auto& h : hist) h /= static_cast<double>(g.size());
  return hist;
}

const std::array<double, kHistogramBins>& naturalness_reference() { return kReference; }

double naturalness(const Image& x) {
  const auto p = gradient_histogram(x);
  const auto& q = naturalness_reference();
  double qsum = 0.0;
  for (double v : q) qsum += v;
  const double norm_p = 1.0 + kHistogramBins * kHistSmoothing;
  const double norm_q = qsum + kHistogramBins * kHistSmoothing;
  double kl = 0.0;
  for (int i = 0; i < kHistogramBins; ++i) {
    const double pi = (p[i] + kHistSmoothing) / norm_p, qi = (q[i] + kHistSmoothing) / norm_q;
    kl += pi * std::log(pi / qi);
  }
  return -kl;
}

std::array<double, kHistogramBins> compute_naturalness_reference(int count, std::uint64_t seed) {
  require(count > 0, "reference needs at least one face");
  std::array<double, kHistogramBins> acc{};
  for (int i = 0; i < count; ++i) {
    const std::uint64_t item = Rng::derive(seed, static_cast<std::uint64_t>(i));
    Rng attr_rng(Rng::derive(item, 0xA77));
    const auto face = dataset::face_synth(item, dataset::sample_attributes(attr_rng));
    const auto h = gradient_histogram(face.image);
    for (int b = 0; b < kHistogramBins; ++b) acc[b] += h[b] / count;
  }
  return acc;
}

MetricVector image_metrics(const Image& img, const Image& ref) {
  require_same_shape(img, ref, "image_metrics");
  MetricVector m;
  m.ssim = ssim(img, ref);
  m.psnr = psnr(img, ref);
  m.perceptual_dist = perceptual_dist(img, ref);
  m.sharpness = sharpness(img);
  m.noise_level = noise_level(img);
  m.naturalness = naturalness(img);
  return m;
}

std::array<double, 12> pair_features(const Image& a, const Image& b, const Image& ref) {
  require_same_shape(a, b, "pair_features");
  const auto va = image_metrics(a, ref).values(), vb = image_metrics(b, ref).values();
  std::array<double, 12> out{};
  std::copy(va.begin(), va.end(), out.begin());
  std::copy(vb.begin(), vb.end(), out.begin() + 6);
  return out;
}

}  // namespace refl::metrics
