// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "refl/nn/ops.hpp"
#include "refl/rng.hpp"

namespace refl::nn {

struct Parameter {
  std::string name;
  Var var;
  bool trainable = true;
};

// Ordered, named collection of leaf parameters owned by one model.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Var add(const std::string& name, Tensor init, bool trainable = true);

  std::vector<Parameter>& entries() { return params_; }
  const std::vector<Parameter>& entries() const { return params_; }
  const Parameter& at(const std::string& name) const;
  Parameter& at(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  // requires_grad := trainable && on. Frozen params never get gradients.
  void set_grad_tracking(bool on);
  void zero_grad();
  std::size_t numel(bool trainable_only = false) const;

  // Deep copy of the current values, in declaration order.
  std::vector<Tensor> snapshot(bool trainable_only = false) const;
  void load(const std::vector<std::pair<std::string, Tensor>>& arrays, const std::string& prefix = "");
  std::uint64_t hash(bool trainable_only = false) const;

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

// Restores grad tracking on scope exit; used to treat a model as a constant
// function inside another model's loss.
class GradTrackingScope {
 public:
  GradTrackingScope(ParamStore& store, bool on) : store_(store) { store_.set_grad_tracking(on); }
  ~GradTrackingScope() { store_.set_grad_tracking(true); }
  GradTrackingScope(const GradTrackingScope&) = delete;
  GradTrackingScope& operator=(const GradTrackingScope&) = delete;

 private:
  ParamStore& store_;
};

Tensor he_normal(Shape shape, int fan_in, Rng& rng, double gain = 1.0);

struct Conv2d {
  Var weight;
  Var bias;
  int stride = 1;
  int pad = 1;

  static Conv2d create(ParamStore& store, const std::string& name, int in, int out, int kernel, int stride,
                       Rng& rng, bool trainable = true, double gain = 1.0);
  Var operator()(const Var& x) const { return conv2d(x, weight, bias, stride, pad); }
};

struct Linear {
  Var weight;
  Var bias;

  static Linear create(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                       bool trainable = true, double gain = 1.0);
  Var operator()(const Var& x) const { return linear(x, weight, bias); }
};

}  // namespace refl::nn
