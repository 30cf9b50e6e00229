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

#include "simba/shift_gcn.hpp"

#include <algorithm>

#include "simba/errors.hpp"

#include <cstdint>
#include <vector>

namespace simba {

namespace {

void require_nctv(const Shape& s, const char* op) {
  if (s.size() != 4) throw DimensionError(std::string(op) + ": expected [N,C,T,V], got " + to_string(s));
}

template <typename S>
Tensor<S> shift_vertices(const Tensor<S>& x, Index direction) {
  require_nctv(x.shape(), "spatial_shift");
  const Index n = x.dim(0), c = x.dim(1), t = x.dim(2), v = x.dim(3);
  std::vector<std::int32_t> index(static_cast<std::size_t>(x.numel()));
  std::size_t i = 0;
  for (Index a = 0; a < n; ++a)
    for (Index ch = 0; ch < c; ++ch) {
      const Index offset = ((direction * ch) % v + v) % v;
      std::int32_t* row = index.data() + i;
      for (Index j = 0; j < v; ++j) row[j] = static_cast<std::int32_t>((j + offset) % v);
      for (Index f = 1; f < t; ++f) std::copy(row, row + v, row + f * v);
      i += static_cast<std::size_t>(t * v);
    }
  return gather(x, 3, x.shape(), index);
}

}  // namespace

template <typename S>
Tensor<S> spatial_shift(const Tensor<S>& x) {
  return shift_vertices(x, 1);
}

template <typename S>
Tensor<S> spatial_unshift(const Tensor<S>& x) {
  return shift_vertices(x, -1);
}

int temporal_offset(Index channel, int radius) {
  return static_cast<int>(channel % (2 * radius + 1)) - radius;
}

template <typename S>
Tensor<S> temporal_shift(const Tensor<S>& x, int radius) {
  require_nctv(x.shape(), "temporal_shift");
  if (radius < 0) throw DomainError("temporal_shift: radius must be >= 0");
  if (radius == 0) return x;
  const Index n = x.dim(0), c = x.dim(1), t = x.dim(2), v = x.dim(3);
  std::vector<std::int32_t> index(static_cast<std::size_t>(x.numel()));
  std::size_t i = 0;
  for (Index a = 0; a < n; ++a)
    for (Index ch = 0; ch < c; ++ch) {
      const int u = temporal_offset(ch, radius);
      for (Index f = 0; f < t; ++f) {
        const Index src = f - u;
        const auto k = static_cast<std::int32_t>(src >= 0 && src < t ? src : -1);
        for (Index j = 0; j < v; ++j) index[i++] = k;
      }
    }
  return gather(x, 2, x.shape(), index);
}

template <typename S>
void collect_batchnorm(const std::string& prefix, const BatchNorm2d<S>& bn, ParameterList<S>& out) {
  add_param(out, prefix + "weight", bn.gamma);
  add_param(out, prefix + "bias", bn.beta);
  add_buffer(out, prefix + "running_mean", bn.running_mean);
  add_buffer(out, prefix + "running_var", bn.running_var);
}

template <typename S>
ShiftSGcnBlock<S>::ShiftSGcnBlock(Index in_channels, Index out_channels, Rng& rng, bool act)
    : w(fan_in_uniform<S>({out_channels, in_channels}, in_channels, rng)),
      b(fan_in_uniform<S>({out_channels}, in_channels, rng)),
      bn(out_channels),
      activation(act) {}

template <typename S>
Tensor<S> ShiftSGcnBlock<S>::forward(const Tensor<S>& x, Mode mode) {
  require_nctv(x.shape(), "ShiftSGcnBlock");
  if (x.dim(1) != in_channels()) {
    throw DimensionError("ShiftSGcnBlock: input " + to_string(x.shape()) + " vs weight " + to_string(w.shape()));
  }
  auto y = batchnorm2d(pointwise_conv2d(spatial_shift(x), w, b), bn, mode);
  return activation ? relu(y) : y;
}

template <typename S>
void ShiftSGcnBlock<S>::collect(const std::string& prefix, ParameterList<S>& out) const {
  add_weight(out, prefix + "conv.weight", w);
  add_param(out, prefix + "conv.bias", b);
  collect_batchnorm(prefix + "bn.", bn, out);
}

template <typename S>
ShiftTcnBlock<S>::ShiftTcnBlock(Index channels, int r, Rng& rng)
    : w(fan_in_uniform<S>({channels, channels}, channels, rng)),
      b(fan_in_uniform<S>({channels}, channels, rng)),
      bn(channels),
      radius(r) {}

template <typename S>
Tensor<S> ShiftTcnBlock<S>::forward(const Tensor<S>& x, Mode mode) {
  require_nctv(x.shape(), "ShiftTcnBlock");
  if (x.dim(1) != w.dim(1)) {
    throw DimensionError("ShiftTcnBlock: input " + to_string(x.shape()) + " vs weight " + to_string(w.shape()));
  }
  return batchnorm2d(pointwise_conv2d(temporal_shift(x, radius), w, b), bn, mode);
}

template <typename S>
void ShiftTcnBlock<S>::collect(const std::string& prefix, ParameterList<S>& out) const {
  add_weight(out, prefix + "conv.weight", w);
  add_param(out, prefix + "conv.bias", b);
  collect_batchnorm(prefix + "bn.", bn, out);
}

template <typename S>
UnitTcnResidual<S>::UnitTcnResidual(Index in_channels, Index out_channels, Rng& rng)
    : w(fan_in_uniform<S>({out_channels, in_channels}, in_channels, rng)), bn(out_channels) {}

template <typename S>
Tensor<S> UnitTcnResidual<S>::forward(const Tensor<S>& x, Mode mode) {
  require_nctv(x.shape(), "UnitTcnResidual");
  if (x.dim(1) != w.dim(1)) {
    throw DimensionError("UnitTcnResidual: input " + to_string(x.shape()) + " vs weight " + to_string(w.shape()));
  }
  return batchnorm2d(pointwise_conv2d(x, w, Tensor<S>()), bn, mode);
}

template <typename S>
void UnitTcnResidual<S>::collect(const std::string& prefix, ParameterList<S>& out) const {
  add_weight(out, prefix + "conv.weight", w);
  collect_batchnorm(prefix + "bn.", bn, out);
}

#define SIMBA_INSTANTIATE_SHIFT(S)                                                                 \
  template Tensor<S> spatial_shift(const Tensor<S>&);                                              \
  template Tensor<S> spatial_unshift(const Tensor<S>&);                                            \
  template Tensor<S> temporal_shift(const Tensor<S>&, int);                                        \
  template void collect_batchnorm(const std::string&, const BatchNorm2d<S>&, ParameterList<S>&);   \
  template struct ShiftSGcnBlock<S>;                                                               \
  template struct ShiftTcnBlock<S>;                                                                \
  template struct UnitTcnResidual<S>;

SIMBA_INSTANTIATE_SHIFT(float)
SIMBA_INSTANTIATE_SHIFT(double)

}  // namespace simba
