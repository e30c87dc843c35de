// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "refl/nn/tensor.hpp"

namespace refl {

// H x W x C intensities, interleaved (HWC), nominally in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels = 3, double fill = 0.0);

  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return c_; }
  std::size_t size() const { return px_.size(); }
  bool empty() const { return px_.empty(); }

  double& at(int row, int col, int ch) { return px_[(static_cast<std::size_t>(row) * w_ + col) * c_ + ch]; }
  double at(int row, int col, int ch) const { return px_[(static_cast<std::size_t>(row) * w_ + col) * c_ + ch]; }

  std::span<double> pixels() { return px_; }
  std::span<const double> pixels() const { return px_; }

  bool same_shape(const Image& o) const { return h_ == o.h_ && w_ == o.w_ && c_ == o.c_; }
  bool operator==(const Image& o) const { return same_shape(o) && px_ == o.px_; }

 private:
  int h_ = 0, w_ = 0, c_ = 0;
  std::vector<double> px_;
};

void require_same_shape(const Image& a, const Image& b, const char* what);
Image clip01(Image img);
double max_abs_diff(const Image& a, const Image& b);
std::uint64_t image_hash(const Image& img);

// 8-bit sRGB-agnostic PNG I/O (values are stored as round(255 * v)).
Image load_png(const std::filesystem::path& path);
void save_png(const Image& img, const std::filesystem::path& path);

// Batch conversion to/from NCHW tensors.
nn::Tensor to_tensor(std::span<const Image> images);
nn::Tensor to_tensor(const Image& image);
Image image_from_tensor(const nn::Tensor& batch, int index);
std::vector<Image> images_from_tensor(const nn::Tensor& batch);

}  // namespace refl
