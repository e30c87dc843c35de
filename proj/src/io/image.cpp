// SPDX-License-Identifier: Apache-2.0
#include "refl/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "refl/error.hpp"

namespace refl {

Image::Image(int height, int width, int channels, double fill)
    : h_(height), w_(width), c_(channels),
      px_(static_cast<std::size_t>(std::max(0, height)) * std::max(0, width) * std::max(0, channels), fill) {
  require(height >= 0 && width >= 0 && channels >= 0, "negative image dimension");
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b))
    fail(ErrorCode::kInvalidArgument,
         std::string(what) + ": shape mismatch " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
             "x" + std::to_string(a.channels()) + " vs " + std::to_string(b.height()) + "x" +
             std::to_string(b.width()) + "x" + std::to_string(b.channels()));
}

Image clip01(Image img) {
  for (auto& v : img.pixels()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

double max_abs_diff(const Image& a, const Image& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.pixels()[i] - b.pixels()[i]));
  return m;
}

std::uint64_t image_hash(const Image& img) {
  nn::Tensor t({img.height(), img.width(), img.channels()},
               std::vector<double>(img.pixels().begin(), img.pixels().end()));
  return t.hash();
}

Image load_png(const std::filesystem::path& path) {
  png_image im;
  std::memset(&im, 0, sizeof im);
  im.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&im, path.c_str()))
    fail(ErrorCode::kIo, "cannot read PNG " + path.string() + ": " + im.message);
  im.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(im));
  if (!png_image_finish_read(&im, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&im);
    fail(ErrorCode::kIo, "cannot decode PNG " + path.string() + ": " + im.message);
  }
  Image out(static_cast<int>(im.height), static_cast<int>(im.width), 3);
  for (std::size_t i = 0; i < out.size(); ++i) out.pixels()[i] = buf[i] / 255.0;
  return out;
}

void save_png(const Image& img, const std::filesystem::path& path) {
  require(img.channels() == 3, "save_png expects 3 channels");
  std::vector<png_byte> buf(img.size());
  for (std::size_t i = 0; i < img.size(); ++i)
    buf[i] = static_cast<png_byte>(std::lround(std::clamp(img.pixels()[i], 0.0, 1.0) * 255.0));
  png_image im;
  std::memset(&im, 0, sizeof im);
  im.version = PNG_IMAGE_VERSION;
  im.width = static_cast<png_uint_32>(img.width());
  im.height = static_cast<png_uint_32>(img.height());
  im.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&im, path.c_str(), 0, buf.data(), 0, nullptr))
    fail(ErrorCode::kIo, "cannot write PNG " + path.string() + ": " + im.message);
}

nn::Tensor to_tensor(std::span<const Image> images) {
  require(!images.empty(), "to_tensor: empty batch");
  const int h = images[0].height(), w = images[0].width(), c = images[0].channels();
  const int n = static_cast<int>(images.size());
  nn::Tensor t({n, c, h, w});
  for (int b = 0; b < n; ++b) {
    require_same_shape(images[0], images[b], "to_tensor");
    for (int ch = 0; ch < c; ++ch)
      for (int r = 0; r < h; ++r)
        for (int col = 0; col < w; ++col)
          t[((static_cast<std::size_t>(b) * c + ch) * h + r) * w + col] = images[b].at(r, col, ch);
  }
  return t;
}

nn::Tensor to_tensor(const Image& image) { return to_tensor(std::span<const Image>(&image, 1)); }

Image image_from_tensor(const nn::Tensor& batch, int index) {
  require(batch.rank() == 4, "image_from_tensor expects NCHW");
  const int c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  require(index >= 0 && index < batch.dim(0), "image_from_tensor: index out of range");
  Image img(h, w, c);
  for (int ch = 0; ch < c; ++ch)
    for (int r = 0; r < h; ++r)
      for (int col = 0; col < w; ++col)
        img.at(r, col, ch) = batch[((static_cast<std::size_t>(index) * c + ch) * h + r) * w + col];
  return img;
}

std::vector<Image> images_from_tensor(const nn::Tensor& batch) {
  std::vector<Image> out;
  for (int i = 0; i < batch.dim(0); ++i) out.push_back(image_from_tensor(batch, i));
  return out;
}

}  // namespace refl
