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
#include "simba/ops.hpp"
#include "simba/tensor.hpp"

namespace simba {

/// Non-local spatial shift: out[n,c,t,v] = x[n,c,t,(v+c) mod V].
template <typename S> Tensor<S> spatial_shift(const Tensor<S>& x);
/// Inverse of spatial_shift: out[n,c,t,v] = x[n,c,t,(v-c) mod V].
template <typename S> Tensor<S> spatial_unshift(const Tensor<S>& x);

/// Offset given to channel c: (c mod (2r+1)) - r.
int temporal_offset(Index channel, int radius);

/// out[n,c,t,v] = x[n,c,t-u(c),v] with u = temporal_offset, zero outside [0,T).
template <typename S> Tensor<S> temporal_shift(const Tensor<S>& x, int radius);

/// ReLU(BN(pointwise_conv2d(spatial_shift(x)))).
template <typename S>
struct ShiftSGcnBlock {
  Tensor<S> w;  // [Cout,Cin]
  Tensor<S> b;  // [Cout]
  BatchNorm2d<S> bn;
  bool activation = true;

  ShiftSGcnBlock() = default;
  ShiftSGcnBlock(Index in_channels, Index out_channels, Rng& rng, bool activation = true);
  Index in_channels() const { return w.dim(1); }
  Index out_channels() const { return w.dim(0); }
  Tensor<S> forward(const Tensor<S>& x, Mode mode);
  void collect(const std::string& prefix, ParameterList<S>& out) const;
};

/// BN(pointwise_conv2d(temporal_shift(x, r))), shape preserving, no activation.
template <typename S>
struct ShiftTcnBlock {
  Tensor<S> w;  // [C,C]
  Tensor<S> b;  // [C]
  BatchNorm2d<S> bn;
  int radius = 1;

  ShiftTcnBlock() = default;
  ShiftTcnBlock(Index channels, int radius, Rng& rng);
  Tensor<S> forward(const Tensor<S>& x, Mode mode);
  void collect(const std::string& prefix, ParameterList<S>& out) const;
};

/// Unit TCN on the module input: BN(1x1 conv without bias), Cin -> C.
template <typename S>
struct UnitTcnResidual {
  Tensor<S> w;  // [C,Cin]
  BatchNorm2d<S> bn;

  UnitTcnResidual() = default;
  UnitTcnResidual(Index in_channels, Index out_channels, Rng& rng);
  Tensor<S> forward(const Tensor<S>& x, Mode mode);
  void collect(const std::string& prefix, ParameterList<S>& out) const;
};

template <typename S>
void collect_batchnorm(const std::string& prefix, const BatchNorm2d<S>& bn, ParameterList<S>& out);

}  // namespace simba
