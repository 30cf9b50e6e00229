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

#include "simba/config.hpp"
#include "simba/module.hpp"
#include "simba/ops.hpp"
#include "simba/shift_gcn.hpp"
#include "simba/ssm.hpp"
#include "simba/tensor.hpp"

#include <array>
#include <memory>
#include <optional>
#include <vector>

namespace simba {

/// [N,D,T,V] -> [N,T,V*D] with out[n,t,v*D+d] = x[n,d,t,v].
template <typename S> Tensor<S> flatten_permute(const Tensor<S>& x);
/// Inverse of flatten_permute for the given channel count D.
template <typename S> Tensor<S> unflatten_permute(const Tensor<S>& x, Index channels);

/// Blends each joint's features with the pooled features of its anatomical
/// group: out = W*x + (1-W)*e, where e broadcasts proj(mean over group).
template <typename S>
struct PartitionGate {
  Tensor<S> gate;    // [1,C,1,1]
  Tensor<S> proj_w;  // [C,C]
  Tensor<S> proj_b;  // [C]
  std::vector<int> partitions;
  Index num_partitions = 0;

  PartitionGate() = default;
  /// Throws ConfigError when a joint has no partition.
  PartitionGate(Index channels, std::vector<int> partitions, Index num_partitions, Rng& rng);

  /// One-hot membership [V,K].
  Tensor<S> labels() const;
  Tensor<S> forward(const Tensor<S>& x) const;
  void collect(const std::string& prefix, ParameterList<S>& out) const;

 private:
  Tensor<S> pool_;  // labels with each column divided by its size
};

template <typename S>
struct EncoderOutput {
  Tensor<S> bottleneck;           // x4: [N,D,T,V]
  std::array<Tensor<S>, 3> skips;  // x_l (C), x2 (C/2), x3 (C/4)
};

/// Shapes seen while running one module, for contract checks.
struct ModuleTrace {
  Shape entry;
  std::array<Shape, 3> encoder;
  Shape flattened;
  Shape imamba;
  std::array<Shape, 3> decoder;
  Shape output;
};

/// One Simba module: entry Shift S-GCN, optional partition gate, three-block
/// down-sampling encoder, IMamba over the flattened bottleneck, mirrored
/// decoder with additive skips, then ReLU(ShiftTCN(x7) + Residual(x_in)).
template <typename S>
class SimbaModule {
 public:
  SimbaModule(const SimbaConfig& config, Index in_channels, Rng& rng);

  Tensor<S> forward(const Tensor<S>& x, Mode mode, ModuleTrace* trace = nullptr);
  EncoderOutput<S> encode(const Tensor<S>& x_l, Mode mode);
  Tensor<S> decode(const Tensor<S>& bottleneck, const std::array<Tensor<S>, 3>& skips, Mode mode,
                   std::array<Shape, 3>* stages = nullptr);

  void collect(const std::string& prefix, ParameterList<S>& out) const;

  ShiftSGcnBlock<S> entry;
  std::optional<PartitionGate<S>> gate;
  std::array<ShiftSGcnBlock<S>, 3> encoder;
  std::optional<ssm::IMamba<S>> imamba;  // empty for U-ShiftGCN
  std::array<ShiftSGcnBlock<S>, 3> decoder;
  ShiftTcnBlock<S> tcn;
  UnitTcnResidual<S> residual;

 private:
  Index channels_;
  Index bottleneck_;
};

/// Stack of `depth` modules, global average pool over (T,V), linear head.
template <typename S>
class SimbaModel {
 public:
  SimbaModel(const SimbaConfig& config, std::uint64_t seed);

  /// x: [N,Cin,T,V] -> logits [N,num_classes]. `traces`, when given, gets one
  /// entry per module.
  Tensor<S> forward(const Tensor<S>& x, Mode mode, std::vector<ModuleTrace>* traces = nullptr);

  /// Every named tensor, including BN running statistics (not trainable).
  ParameterList<S> parameters() const;
  Index parameter_count() const { return trainable_count(parameters()); }
  const SimbaConfig& config() const { return config_; }

  std::vector<SimbaModule<S>> modules;
  Tensor<S> head_w;  // [K,C]
  Tensor<S> head_b;  // [K]

 private:
  SimbaConfig config_;
};

extern template class SimbaModel<float>;
extern template class SimbaModel<double>;

}  // namespace simba
