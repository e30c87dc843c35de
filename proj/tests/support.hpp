// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "refl/image.hpp"
#include "refl/nn/tensor.hpp"
#include "refl/rng.hpp"

namespace refl::testing {

// Central finite differences of f at x along the listed coordinates
// (all coordinates when `coords` is empty).
inline std::vector<double> finite_difference(const std::function<double(const nn::Tensor&)>& f, nn::Tensor x,
                                             const std::vector<std::size_t>& coords, double h = 1e-6) {
  std::vector<std::size_t> idx = coords;
  if (idx.empty())
    for (std::size_t i = 0; i < x.size(); ++i) idx.push_back(i);
  std::vector<double> out;
  for (std::size_t i : idx) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    out.push_back((up - down) / (2.0 * h));
  }
  return out;
}

// ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-12) {
  double num = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(num) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

inline std::vector<double> gather(const nn::Tensor& t, const std::vector<std::size_t>& coords) {
  std::vector<double> out;
  if (coords.empty()) return std::vector<double>(t.values().begin(), t.values().end());
  for (std::size_t i : coords) out.push_back(t[i]);
  return out;
}

inline std::vector<std::size_t> sample_coords(std::size_t n, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1)));
  return out;
}

inline Image random_image(int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Image img(h, w, 3);
  for (auto& v : img.pixels()) v = rng.uniform(lo, hi);
  return img;
}

inline nn::Tensor random_tensor(nn::Shape shape, std::uint64_t seed, double sd = 1.0) {
  Rng rng(seed);
  nn::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = sd * rng.normal();
  return t;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("refl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace refl::testing
