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

// Shared plumbing for trainable blocks: parameter registry and initializers.

#include "simba/tensor.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace simba {

using Rng = std::mt19937_64;

template <typename S>
struct NamedTensor {
  std::string name;
  Tensor<S> tensor;
  bool trainable = true;  // false for running statistics
  bool decay = false;     // weight decay applies (conv and linear weights)
};

template <typename S>
using ParameterList = std::vector<NamedTensor<S>>;

template <typename S>
void add_weight(ParameterList<S>& out, const std::string& name, const Tensor<S>& t) {
  out.push_back({name, t, true, true});
}
template <typename S>
void add_param(ParameterList<S>& out, const std::string& name, const Tensor<S>& t) {
  out.push_back({name, t, true, false});
}
template <typename S>
void add_buffer(ParameterList<S>& out, const std::string& name, const Tensor<S>& t) {
  out.push_back({name, t, false, false});
}

/// Uniform(-bound, bound). Draws in double so float and double models built
/// from the same seed agree up to rounding.
template <typename S>
Tensor<S> uniform_tensor(Shape shape, double bound, Rng& rng, bool requires_grad = true) {
  auto t = Tensor<S>::zeros(std::move(shape), requires_grad);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.mutable_data()) v = static_cast<S>(dist(rng));
  return t;
}

/// Fan-in scaled uniform, +-sqrt(1/fan_in).
template <typename S>
Tensor<S> fan_in_uniform(Shape shape, Index fan_in, Rng& rng) {
  return uniform_tensor<S>(std::move(shape), std::sqrt(1.0 / static_cast<double>(fan_in)), rng);
}

template <typename S>
Index trainable_count(const ParameterList<S>& params) {
  Index n = 0;
  for (const auto& p : params)
    if (p.trainable) n += p.tensor.numel();
  return n;
}

}  // namespace simba
