// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "refl/nn/tensor.hpp"

namespace refl::nn {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Which parents needed a gradient when this node was built. Frozen inputs
  // stay frozen for this graph even if their flag is switched back on later.
  std::vector<char> parent_needs_grad;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

// Handle to a node in the dynamic graph. Copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var leaf(Tensor value, bool requires_grad);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient or zeros of the value's shape.
  Tensor grad() const;
  void zero_grad() { node_->grad = Tensor(); }

  // Reverse-mode sweep from a single-element output.
  void backward() const;
  Var detach() const { return constant(node_->value); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

// Disables graph recording in scope: ops return constants.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op result. `backward` is dropped when no input needs a gradient.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

}  // namespace refl::nn
