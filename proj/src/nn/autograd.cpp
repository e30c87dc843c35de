// SPDX-License-Identifier: Apache-2.0
#include "refl/nn/autograd.hpp"

#include <unordered_set>

#include "refl/error.hpp"

namespace refl::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
  if (grad.empty() && !value.empty()) grad = Tensor::zeros_like(value);
  return grad;
}

Var Var::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor::zeros_like(node_->value);
  return node_->grad;
}

void Var::backward() const {
  require(node_ && node_->value.size() == 1, "backward() needs a single-element output");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      const std::size_t i = next++;
      Node* p = n->parents[i].get();
      if (n->parent_needs_grad[i] && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // Interior gradients are not needed after the sweep; leaves keep theirs.
  for (Node* n : order)
    if (n->backward) n->grad = Tensor();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (!g_grad_enabled) return Var(std::move(n));
  bool any = false;
  for (const auto& v : inputs) any = any || v.requires_grad();
  if (!any) return Var(std::move(n));
  n->requires_grad = true;
  n->parents.reserve(inputs.size());
  n->parent_needs_grad.reserve(inputs.size());
  for (auto& v : inputs) {
    n->parents.push_back(v.ptr());
    n->parent_needs_grad.push_back(v.requires_grad() ? 1 : 0);
  }
  n->backward = std::move(backward);
  return Var(std::move(n));
}

}  // namespace refl::nn
