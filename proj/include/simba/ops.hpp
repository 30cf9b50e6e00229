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

// Differentiable primitives. Every function records a node when grad mode is
// on and at least one input requires grad.

#include "simba/tensor.hpp"

#include <cstdint>
#include <vector>

namespace simba {

enum class Mode { train, eval };

// Elementwise; shapes broadcast numpy-style (right aligned, extent 1 stretches).
template <typename S> Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <typename S> Tensor<S> scale(const Tensor<S>& a, S factor);
template <typename S> Tensor<S> add_scalar(const Tensor<S>& a, S value);
template <typename S> Tensor<S> broadcast_to(const Tensor<S>& a, const Shape& shape);
Shape broadcast_shape(const Shape& a, const Shape& b);

template <typename S> Tensor<S> relu(const Tensor<S>& x);
template <typename S> Tensor<S> silu(const Tensor<S>& x);
/// log(1 + e^x), exactly x once x > 20.
template <typename S> Tensor<S> softplus(const Tensor<S>& x);
template <typename S> Tensor<S> exp(const Tensor<S>& x);

/// [M,K] x [K,N] -> [M,N].
template <typename S> Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);
/// x[..., in] * w[out, in]^T + b[out]. `b` may be undefined.
template <typename S> Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b);

/// 1x1 convolution over the channel axis of [N,Cin,T,V] with w[Cout,Cin] and
/// optional (undefined means none) bias b[Cout].
template <typename S>
Tensor<S> pointwise_conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b);

/// Per-channel causal convolution of x[N,T,D] with w[D,K], b[D]:
/// out[n,t,d] = b[d] + sum_k w[d,k] x[n, t-K+1+k, d], zero left padding.
template <typename S>
Tensor<S> depthwise_causal_conv1d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b);

/// Per-channel affine normalization of [N,C,T,V] with running statistics.
template <typename S>
struct BatchNorm2d {
  Tensor<S> gamma;         // [C]
  Tensor<S> beta;          // [C]
  Tensor<S> running_mean;  // [C], not trained
  Tensor<S> running_var;   // [C], not trained
  S momentum = S(0.1);
  S eps = S(1e-5);

  BatchNorm2d() = default;
  explicit BatchNorm2d(Index channels);
  Index channels() const { return gamma.numel(); }
};

/// Train mode normalizes with batch statistics over (N,T,V) and updates the
/// running estimates (unbiased variance); eval mode uses the running estimates.
template <typename S>
Tensor<S> batchnorm2d(const Tensor<S>& x, BatchNorm2d<S>& bn, Mode mode);

/// x / sqrt(mean(x^2 over last axis) + eps) * g.
template <typename S>
Tensor<S> rmsnorm(const Tensor<S>& x, const Tensor<S>& g, S eps);

/// Softmax over the last axis.
template <typename S> Tensor<S> softmax(const Tensor<S>& x);

/// Mean over the batch of -log softmax(logits[n])[labels[n]]; logits [N,K].
template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const std::vector<int>& labels);

template <typename S> Tensor<S> reshape(const Tensor<S>& x, const Shape& shape);
/// out.shape[i] = x.shape[perm[i]].
template <typename S> Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& perm);

/// out[i0..ia..in] = x[i0..index[i0..in]..in] along `axis`, zero where index is
/// negative. `index` has the output shape, which may differ from x only along
/// `axis`.
template <typename S>
Tensor<S> gather(const Tensor<S>& x, int axis, const Shape& out_shape, const std::vector<std::int32_t>& index);

template <typename S> Tensor<S> sum(const Tensor<S>& x);
template <typename S> Tensor<S> mean(const Tensor<S>& x);
template <typename S> Tensor<S> sum_axes(const Tensor<S>& x, std::vector<int> axes, bool keepdim = false);
template <typename S> Tensor<S> mean_axes(const Tensor<S>& x, std::vector<int> axes, bool keepdim = false);

}  // namespace simba
