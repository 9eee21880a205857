#pragma once

// Minimal reverse-mode automatic differentiation over Tensor.
//
// A Var is a shared handle to a graph node. Ops record their inputs and a
// backward closure only when gradient recording is enabled and at least one
// input requires a gradient; otherwise the result is a plain constant.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dagan/tensor.hpp"

namespace dagan::ag {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool has_grad() const { return !grad.empty(); }
  // Zero-filled gradient buffer, allocated on first use.
  Tensor& grad_buffer();
  void accumulate(const Tensor& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  explicit operator bool() const { return defined(); }

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return node_->has_grad(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad = Tensor(); }
  float item() const { return node_->value.item(); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Leaf holding a constant (no gradient).
Var constant(Tensor value);
// Leaf that accumulates gradients (a learnable parameter or a probe input).
Var leaf(Tensor value, bool requires_grad = true);
// Same value, cut from the graph.
Var detach(const Var& v);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Backpropagates from a single-element output, seeding d(out)/d(out) = 1.
void backward(const Var& output);

// Helper used by op implementations: builds a result node wired to `inputs`
// when recording is active.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

}  // namespace dagan::ag
