#include "dagan/autograd.hpp"

#include <unordered_set>
#include <utility>

#include "dagan/error.hpp"

namespace dagan::ag {
namespace {
thread_local bool g_grad_enabled = true;
}

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0f);
  return grad;
}

void Node::accumulate(const Tensor& g) {
  if (g.shape() != value.shape()) {
    throw ArgumentError("gradient shape " + g.shape().str() + " != value shape " +
                        value.shape().str());
  }
  if (grad.empty()) {
    grad = g;
    return;
  }
  float* dst = grad.data();
  const float* src = g.data();
  for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

Var detach(const Var& v) { return constant(v.value()); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.defined() && in.requires_grad()) {
        n->requires_grad = true;
        break;
      }
    }
  }
  if (n->requires_grad) {
    n->inputs.reserve(inputs.size());
    for (auto& in : inputs) n->inputs.push_back(in.defined() ? in.shared() : nullptr);
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

void backward(const Var& output) {
  if (!output.defined()) throw ArgumentError("backward on undefined var");
  if (output.value().numel() != 1) {
    throw ArgumentError("backward needs a single-element output, got " + output.shape().str());
  }
  if (!output.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(output.node(), 0);
  seen.insert(output.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  output.node()->accumulate(Tensor(output.shape(), 1.0f));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->has_grad()) n->backward(*n);
  }
}

}  // namespace dagan::ag
