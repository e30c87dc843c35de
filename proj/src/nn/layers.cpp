// SPDX-License-Identifier: Apache-2.0
#include "refl/nn/layers.hpp"

#include <cmath>

#include "refl/error.hpp"

namespace refl::nn {

Var ParamStore::add(const std::string& name, Tensor init, bool trainable) {
  if (index_.count(name)) fail(ErrorCode::kInternal, "duplicate parameter name " + name);
  Var v = Var::leaf(std::move(init), trainable);
  index_[name] = params_.size();
  params_.push_back({name, v, trainable});
  return v;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorCode::kNotFound, "unknown parameter " + name);
  return params_[it->second];
}

Parameter& ParamStore::at(const std::string& name) {
  return const_cast<Parameter&>(static_cast<const ParamStore&>(*this).at(name));
}

void ParamStore::set_grad_tracking(bool on) {
  for (auto& p : params_) p.var.set_requires_grad(on && p.trainable);
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

std::size_t ParamStore::numel(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (!trainable_only || p.trainable) n += p.var.value().size();
  return n;
}

std::vector<Tensor> ParamStore::snapshot(bool trainable_only) const {
  std::vector<Tensor> out;
  for (const auto& p : params_)
    if (!trainable_only || p.trainable) out.push_back(p.var.value());
  return out;
}

void ParamStore::load(const std::vector<std::pair<std::string, Tensor>>& arrays, const std::string& prefix) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : arrays) by_name[name] = &t;
  for (auto& p : params_) {
    auto it = by_name.find(prefix + p.name);
    if (it == by_name.end()) fail(ErrorCode::kIo, "checkpoint is missing parameter " + prefix + p.name);
    if (it->second->shape() != p.var.shape())
      fail(ErrorCode::kIo, "checkpoint parameter " + prefix + p.name + " has shape " +
                               shape_str(it->second->shape()) + ", expected " + shape_str(p.var.shape()));
    p.var.mutable_value() = *it->second;
  }
}

std::uint64_t ParamStore::hash(bool trainable_only) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    if (trainable_only && !p.trainable) continue;
    h = Rng::splitmix(h ^ p.var.value().hash());
  }
  return h;
}

Tensor he_normal(Shape shape, int fan_in, Rng& rng, double gain) {
  Tensor t(std::move(shape));
  const double std = gain * std::sqrt(2.0 / std::max(1, fan_in));
  for (auto& v : t.values()) v = std * rng.normal();
  return t;
}

Conv2d Conv2d::create(ParamStore& store, const std::string& name, int in, int out, int kernel, int stride,
                      Rng& rng, bool trainable, double gain) {
  Conv2d c;
  c.weight = store.add(name + ".weight", he_normal({out, in, kernel, kernel}, in * kernel * kernel, rng, gain),
                       trainable);
  c.bias = store.add(name + ".bias", Tensor({out}), trainable);
  c.stride = stride;
  c.pad = kernel / 2;
  return c;
}

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out, Rng& rng, bool trainable,
                      double gain) {
  Linear l;
  l.weight = store.add(name + ".weight", he_normal({out, in}, in, rng, gain), trainable);
  l.bias = store.add(name + ".bias", Tensor({out}), trainable);
  return l;
}

}  // namespace refl::nn
