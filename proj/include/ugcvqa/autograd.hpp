// Copyright (c) 2026, The ugcvqa Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

// Minimal reverse-mode differentiation over Tensor values.
//
// Every op returns a Var whose node keeps the op inputs and a backward
// closure. Calling backward(root, seed) walks the graph in reverse
// topological order and accumulates gradients into the input nodes; leaves
// bound to a Param accumulate straight into Param::grad so gradients from
// several frames (or several videos of a batch) add up across graphs.
//
// With a NoGradGuard alive, ops record nothing and intermediate values are
// released as soon as the caller drops them.

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ugcvqa/tensor.hpp"

namespace ugcvqa {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T{0}); }
};

namespace ag {

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) {
    detail::grad_mode() = false;
  }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Node {
 public:
  using NodePtr = std::shared_ptr<Node>;
  using BackwardFn =
      std::function<void(const Tensor<T>& grad_out, std::span<const NodePtr>)>;

  explicit Node(Tensor<T> value) : value_(std::move(value)) {}
  explicit Node(Param<T>* param) : param_(param) {}

  const Tensor<T>& value() const { return param_ ? param_->value : value_; }

  // Gradient buffer, zero-initialised on first access.
  Tensor<T>& grad() {
    if (param_) return param_->grad;
    if (grad_.empty() && !value_.empty()) grad_ = Tensor<T>(value_.shape());
    return grad_;
  }
  bool has_grad() const { return param_ != nullptr || !grad_.empty(); }

  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  BackwardFn backward;

 private:
  Tensor<T> value_;
  Tensor<T> grad_;
  Param<T>* param_ = nullptr;
};

template <typename T>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<T>>;

  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor<T>& value() const { return node_->value(); }
  const Shape& shape() const { return node_->value().shape(); }
  int64_t dim(size_t i) const { return shape().at(i); }
  bool requires_grad() const { return node_->requires_grad; }
  bool defined() const { return node_ != nullptr; }

  // Accumulated gradient; valid after backward() for leaves that require it.
  const Tensor<T>& grad() const { return node_->grad(); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

template <typename T>
Var<T> constant(Tensor<T> value) {
  return Var<T>(std::make_shared<Node<T>>(std::move(value)));
}

template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>(std::move(value));
  node->requires_grad = requires_grad && grad_enabled();
  return Var<T>(std::move(node));
}

template <typename T>
Var<T> param(Param<T>& p) {
  auto node = std::make_shared<Node<T>>(&p);
  node->requires_grad = p.trainable && grad_enabled();
  return Var<T>(std::move(node));
}

// Wraps an op result. The backward closure receives the upstream gradient
// and the op inputs; it must only touch grad() of inputs that require it.
template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs,
               typename Node<T>::BackwardFn backward) {
  auto node = std::make_shared<Node<T>>(std::move(value));
  if (!grad_enabled()) return Var<T>(std::move(node));
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return Var<T>(std::move(node));
  node->requires_grad = true;
  node->inputs.reserve(inputs.size());
  for (auto& in : inputs) node->inputs.push_back(in.node());
  node->backward = std::move(backward);
  return Var<T>(std::move(node));
}

// Propagates `seed` (shaped like root) back through the graph.
template <typename T>
void backward(const Var<T>& root, const Tensor<T>& seed) {
  using NodePtr = std::shared_ptr<Node<T>>;
  if (!root.requires_grad()) return;
  if (seed.shape() != root.shape()) {
    throw ShapeError("backward seed shape " + shape_str(seed.shape()) +
                     " does not match root " + shape_str(root.shape()));
  }

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad() += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (!node->backward || !node->has_grad()) continue;
    node->backward(node->grad(), std::span<const NodePtr>(node->inputs));
  }
}

template <typename T>
void backward(const Var<T>& root) {
  backward(root, Tensor<T>(root.shape(), T{1}));
}

}  // namespace ag
}  // namespace ugcvqa
