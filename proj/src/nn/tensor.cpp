// SPDX-License-Identifier: Apache-2.0
#include "refl/nn/tensor.hpp"

#include <cstring>
#include <sstream>

#include "refl/error.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace refl::nn {

namespace {

#if defined(__GLIBC__)
// Feature maps and im2col buffers are a few MB and short-lived. With glibc's
// default thresholds each one is an mmap/munmap pair plus page faults, which
// cost about a third of a training step.
const bool kAllocatorTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();
#endif

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    require(d >= 0, "negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  require(data_.size() == shape_numel(shape_), "tensor data does not match shape " + shape_str(shape_));
}

double Tensor::item() const {
  require(data_.size() == 1, "item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  require(shape_numel(shape) == data_.size(),
          "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::uint64_t Tensor::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (int d : shape_) mix(&d, sizeof d);
  mix(data_.data(), data_.size() * sizeof(double));
  return h;
}

}  // namespace refl::nn
