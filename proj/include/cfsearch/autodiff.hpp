// Copyright 2026 The cfsearch Authors.
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

// Tape-free reverse-mode differentiation over tensors. Each Var owns a node
// holding its value, an optional gradient and a closure that pushes its
// gradient to the parents. backward() visits the graph in reverse
// topological order.
//
// Gradients of leaves (parameters) accumulate across backward() calls until
// zero_grad(); gradients of interior nodes are reset at the start of every
// backward() so the same graph can be differentiated repeatedly.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "cfsearch/tensor.hpp"

namespace cfsearch {

struct Node {
  Tensor value;
  Tensor grad;  // empty until first touched
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var parameter(Tensor value);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& mutable_grad() { return node_->grad_buffer(); }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }

  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

// Seeds d(root)/d(root) = 1 (root must hold a single value) and propagates.
void backward(const Var& root);

// Within the guard's scope, new ops record no graph (evaluation mode).
// Per thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Builds an op result. `backward_fn` is kept only when grad mode is on and
// some parent requires a gradient.
Var make_result(Tensor value, std::vector<Var> parents,
                std::function<void(Node&)> backward_fn);

// Adds `g` into the parent's gradient if that parent is differentiable.
void accumulate(Node& parent, const Tensor& g);

}  // namespace cfsearch
