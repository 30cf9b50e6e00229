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

#include "simba/module.hpp"
#include "simba/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

namespace simba::test {

inline TensorD randn(Shape shape, Rng& rng, bool requires_grad = false, double scale = 1.0) {
  auto t = TensorD::zeros(std::move(shape), requires_grad);
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& v : t.mutable_data()) v = dist(rng);
  return t;
}

inline TensorD uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false) {
  auto t = TensorD::zeros(std::move(shape), requires_grad);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.mutable_data()) v = dist(rng);
  return t;
}

template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
  double m = 0;
  auto x = std::span(a.data(), a.size());
  auto y = std::span(b.data(), b.size());
  const std::size_t n = std::min(x.size(), y.size());
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::abs(static_cast<double>(x[i]) - static_cast<double>(y[i])));
  return x.size() == y.size() ? m : INFINITY;
}

inline double max_abs_diff(const TensorD& a, const TensorD& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (Index i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline bool bit_equal(const TensorD& a, const TensorD& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace simba::test
