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

#include "simba/tensor.hpp"

#include "simba/errors.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

namespace simba {

namespace {
thread_local bool g_grad_enabled = true;
}

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw DimensionError("negative extent in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Scalar(0), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::full(Shape shape, Scalar value, bool requires_grad) {
  auto node = std::make_shared<detail::Node<Scalar>>();
  node->data.assign(static_cast<std::size_t>(simba::numel(shape)), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from(Shape shape, std::vector<Scalar> values, bool requires_grad) {
  if (simba::numel(shape) != static_cast<Index>(values.size())) {
    throw DimensionError("shape " + to_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node<Scalar>>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::scalar(Scalar value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

template <typename Scalar>
Index Tensor<Scalar>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw RankError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape()));
  }
  return node_->shape[static_cast<std::size_t>(axis)];
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (numel() != 1) throw RankError("item() on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

template <typename Scalar>
Scalar Tensor<Scalar>::at(std::initializer_list<Index> index) const {
  if (static_cast<int>(index.size()) != rank()) {
    throw RankError("index rank does not match shape " + to_string(shape()));
  }
  Index flat = 0;
  int axis = 0;
  for (Index i : index) {
    const Index extent = node_->shape[static_cast<std::size_t>(axis++)];
    if (i < 0 || i >= extent) throw DimensionError("index out of range for shape " + to_string(shape()));
    flat = flat * extent + i;
  }
  return node_->data[static_cast<std::size_t>(flat)];
}

template <typename Scalar>
Tensor<Scalar>& Tensor<Scalar>::set_requires_grad(bool flag) {
  node_->requires_grad = flag;
  return *this;
}

template <typename Scalar>
void Tensor<Scalar>::zero_grad() {
  node_->grad.clear();
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::clone() const {
  return from(shape(), node_->data, node_->requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach() const {
  return from(shape(), node_->data, false);
}

template <typename Scalar>
void Tensor<Scalar>::backward() const {
  simba::backward(*this);
}

template <typename Scalar>
std::vector<detail::Node<Scalar>*> topological_order(const Tensor<Scalar>& root) {
  using NodeT = detail::Node<Scalar>;
  std::vector<NodeT*> order;
  if (!root.node()->requires_grad) return order;
  std::unordered_set<NodeT*> visited;
  // Iterative post-order DFS; deep stacks of modules overflow recursion.
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw RankError("backward() needs a single-element loss, got shape " +
                    (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;
  const auto order = topological_order(loss);
  for (auto* node : order) {
    if (!node->is_leaf()) node->grad.assign(node->data.size(), Scalar(0));
  }
  loss.node()->ensure_grad()[0] += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = *it;
    if (!node->is_leaf()) node->backward_fn(*node);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);
template std::vector<detail::Node<float>*> topological_order(const Tensor<float>&);
template std::vector<detail::Node<double>*> topological_order(const Tensor<double>&);

}  // namespace simba
