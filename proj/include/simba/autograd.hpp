// Copyright (c) 2026 The Simba Authors. All Rights Reserved.
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

// Helpers for defining fused differentiable ops outside ops.cpp.

#include "simba/tensor.hpp"

#include <algorithm>
#include <functional>
#include <memory>
#include <vector>

namespace simba::detail {

template <typename S>
using NodeP = std::shared_ptr<Node<S>>;

/// Wraps `data` as an op output. The node is attached to the graph only when
/// grad mode is on and some input requires grad.
template <typename S>
Tensor<S> record(Shape shape, std::vector<S> data, const char* op, std::vector<NodeP<S>> inputs,
                 std::function<void(Node<S>&)> fn) {
  auto node = std::make_shared<Node<S>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  const bool track =
      grad_enabled() && std::any_of(inputs.begin(), inputs.end(), [](const auto& n) { return n && n->requires_grad; });
  if (track) {
    node->requires_grad = true;
    node->op = op;
    node->inputs = std::move(inputs);
    node->backward_fn = std::move(fn);
  }
  return Tensor<S>(std::move(node));
}

/// True when input `i` of `out` needs its gradient.
template <typename S>
bool wants(const Node<S>& out, std::size_t i) {
  return i < out.inputs.size() && out.inputs[i] && out.inputs[i]->requires_grad;
}

}  // namespace simba::detail
