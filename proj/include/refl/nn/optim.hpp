// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "refl/nn/layers.hpp"

namespace refl::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over the trainable entries of one ParamStore. Frozen entries and
// entries without a gradient are left untouched.
class Adam {
 public:
  Adam(ParamStore& store, AdamConfig cfg);

  void step();
  void zero_grad() { store_->zero_grad(); }
  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  ParamStore* store_;
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace refl::nn
