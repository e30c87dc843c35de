// SPDX-License-Identifier: Apache-2.0
#include "refl/nn/optim.hpp"

#include <cmath>

namespace refl::nn {

Adam::Adam(ParamStore& store, AdamConfig cfg) : store_(&store), cfg_(cfg) {
  for (const auto& p : store.entries()) {
    m_.push_back(Tensor::zeros_like(p.var.value()));
    v_.push_back(Tensor::zeros_like(p.var.value()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto& entries = store_->entries();
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto& p = entries[k];
    if (!p.trainable || !p.var.has_grad()) continue;
    const Tensor& g = p.var.node()->grad;
    Tensor& w = p.var.mutable_value();
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      w[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
    }
  }
}

}  // namespace refl::nn
