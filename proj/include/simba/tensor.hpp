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

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace simba {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixXR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
class Tensor;

namespace detail {

/// One value in the define-by-run graph. Op outputs own references to their
/// inputs, so the graph lives exactly as long as some handle to its root.
template <typename Scalar>
struct Node {
  Shape shape;
  std::vector<Scalar> data;
  std::vector<Scalar> grad;  // allocated on first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs that require it.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  std::vector<Scalar>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), Scalar(0));
    return grad;
  }
};

}  // namespace detail

/// Process-wide switch used by evaluation: ops run without recording.
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

/// Dense row-major N-d array. Copies share the underlying node; use clone()
/// for an independent value.
template <typename Scalar>
class Tensor {
 public:
  using scalar_type = Scalar;
  using NodePtr = std::shared_ptr<detail::Node<Scalar>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Scalar> values, bool requires_grad = false);
  static Tensor scalar(Scalar value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  Index dim(int axis) const;
  int rank() const { return static_cast<int>(node_->shape.size()); }
  Index numel() const { return static_cast<Index>(node_->data.size()); }

  std::span<const Scalar> data() const { return node_->data; }
  // Only for parameter initialization and optimizer updates on leaves.
  std::span<Scalar> mutable_data() { return node_->data; }
  Eigen::Map<const ArrayX<Scalar>> array() const {
    return {node_->data.data(), static_cast<Eigen::Index>(node_->data.size())};
  }
  Scalar item() const;
  Scalar at(std::initializer_list<Index> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Scalar> grad() const { return node_->grad; }
  std::span<Scalar> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  const char* op_name() const { return node_->op; }
  Tensor clone() const;
  Tensor detach() const;

  void backward() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Reverse-mode sweep from a single-element tensor. Leaf gradients
/// accumulate across calls; interior gradients are recomputed each call.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss);

/// Nodes reachable from `root` that require grad, inputs before consumers.
/// Backward visits this list in reverse.
template <typename Scalar>
std::vector<detail::Node<Scalar>*> topological_order(const Tensor<Scalar>& root);

extern template class Tensor<float>;
extern template class Tensor<double>;

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace simba
