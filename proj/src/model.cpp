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

#include "simba/model.hpp"

#include "simba/errors.hpp"

#include <cstdint>

namespace simba {

template <typename S>
Tensor<S> flatten_permute(const Tensor<S>& x) {
  if (x.rank() != 4) throw DimensionError("flatten_permute: expected [N,D,T,V], got " + to_string(x.shape()));
  const Index n = x.dim(0), d = x.dim(1), t = x.dim(2), v = x.dim(3);
  return reshape(permute(x, {0, 2, 3, 1}), {n, t, v * d});
}

template <typename S>
Tensor<S> unflatten_permute(const Tensor<S>& x, Index channels) {
  if (x.rank() != 3 || channels < 1 || x.dim(2) % channels != 0) {
    throw DimensionError("unflatten_permute: cannot split " + to_string(x.shape()) + " into " +
                         std::to_string(channels) + " channels");
  }
  const Index n = x.dim(0), t = x.dim(1), v = x.dim(2) / channels;
  return permute(reshape(x, {n, t, v, channels}), {0, 3, 1, 2});
}

template <typename S>
PartitionGate<S>::PartitionGate(Index channels, std::vector<int> parts, Index k, Rng& rng)
    : gate(Tensor<S>::full({1, channels, 1, 1}, S(0.5), true)),
      proj_w(fan_in_uniform<S>({channels, channels}, channels, rng)),
      proj_b(fan_in_uniform<S>({channels}, channels, rng)),
      partitions(std::move(parts)),
      num_partitions(k) {
  if (partitions.empty() || k < 1) throw ConfigError("partition gate needs joints and partitions");
  const auto v = static_cast<Index>(partitions.size());
  std::vector<Index> count(static_cast<std::size_t>(k), 0);
  for (Index j = 0; j < v; ++j) {
    const int p = partitions[static_cast<std::size_t>(j)];
    if (p < 0 || p >= k) throw ConfigError("partition gate: joint " + std::to_string(j) + " has no partition");
    ++count[static_cast<std::size_t>(p)];
  }
  std::vector<S> pool(static_cast<std::size_t>(v * k), S(0));
  for (Index j = 0; j < v; ++j) {
    const int p = partitions[static_cast<std::size_t>(j)];
    pool[static_cast<std::size_t>(j * k + p)] = S(1) / static_cast<S>(count[static_cast<std::size_t>(p)]);
  }
  pool_ = Tensor<S>::from({v, k}, std::move(pool));
}

template <typename S>
Tensor<S> PartitionGate<S>::labels() const {
  const auto v = static_cast<Index>(partitions.size());
  auto t = Tensor<S>::zeros({v, num_partitions});
  auto d = t.mutable_data();
  for (Index j = 0; j < v; ++j) d[static_cast<std::size_t>(j * num_partitions + partitions[static_cast<std::size_t>(j)])] = S(1);
  return t;
}

template <typename S>
Tensor<S> PartitionGate<S>::forward(const Tensor<S>& x) const {
  const auto v = static_cast<Index>(partitions.size());
  if (x.rank() != 4 || x.dim(1) != gate.dim(1) || x.dim(3) != v) {
    throw DimensionError("PartitionGate: input " + to_string(x.shape()) + " vs gate " + to_string(gate.shape()) +
                         " over " + std::to_string(v) + " joints");
  }
  const Index n = x.dim(0), c = x.dim(1), t = x.dim(2), k = num_partitions;
  // z: per-partition mean over member joints, [N,C,T,K].
  const auto z = reshape(matmul(reshape(x, {n * c * t, v}), pool_), {n, c, t, k});
  const auto projected = pointwise_conv2d(z, proj_w, proj_b);
  std::vector<std::int32_t> index(static_cast<std::size_t>(x.numel()));
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = partitions[i % static_cast<std::size_t>(v)];
  const auto e = gather(projected, 3, x.shape(), index);
  // W*x + (1-W)*e written as x + (1-W)*(e-x), exact when W == 1 or e == x.
  const auto open = add_scalar(scale(gate, S(-1)), S(1));
  return add(x, mul(open, sub(e, x)));
}

template <typename S>
void PartitionGate<S>::collect(const std::string& prefix, ParameterList<S>& out) const {
  add_param(out, prefix + "gate", gate);
  add_weight(out, prefix + "proj.weight", proj_w);
  add_param(out, prefix + "proj.bias", proj_b);
}

template <typename S>
SimbaModule<S>::SimbaModule(const SimbaConfig& cfg, Index in_channels, Rng& rng)
    : channels_(cfg.channels), bottleneck_(cfg.mamba_channels) {
  cfg.validate();
  const Index c = cfg.channels, d = cfg.mamba_channels;
  entry = ShiftSGcnBlock<S>(in_channels, c, rng);
  if (cfg.partition_gate) gate.emplace(c, cfg.partitions, cfg.num_partitions, rng);
  encoder = {ShiftSGcnBlock<S>(c, c / 2, rng), ShiftSGcnBlock<S>(c / 2, c / 4, rng), ShiftSGcnBlock<S>(c / 4, d, rng)};
  if (cfg.use_imamba) {
    ssm::IMambaOptions opt;
    opt.d_model = cfg.d_model();
    opt.state = cfg.state;
    opt.conv_kernel = cfg.conv_kernel;
    opt.prenorm = cfg.prenorm;
    opt.norm_eps = cfg.norm_eps;
    opt.scan_chunk = cfg.scan_chunk;
    imamba.emplace(opt, rng);
  }
  decoder = {ShiftSGcnBlock<S>(d, c / 4, rng), ShiftSGcnBlock<S>(c / 4, c / 2, rng), ShiftSGcnBlock<S>(c / 2, c, rng)};
  tcn = ShiftTcnBlock<S>(c, cfg.temporal_radius, rng);
  residual = UnitTcnResidual<S>(in_channels, c, rng);
}

template <typename S>
EncoderOutput<S> SimbaModule<S>::encode(const Tensor<S>& x_l, Mode mode) {
  if (x_l.rank() != 4 || x_l.dim(1) != channels_) {
    throw DimensionError("encoder: expected " + std::to_string(channels_) + " channels, got " + to_string(x_l.shape()));
  }
  auto x2 = encoder[0].forward(x_l, mode);
  auto x3 = encoder[1].forward(x2, mode);
  auto x4 = encoder[2].forward(x3, mode);
  return {x4, {x_l, x2, x3}};
}

template <typename S>
Tensor<S> SimbaModule<S>::decode(const Tensor<S>& bottleneck, const std::array<Tensor<S>, 3>& skips, Mode mode,
                                 std::array<Shape, 3>* stages) {
  auto join = [](const Tensor<S>& up, const Tensor<S>& skip) {
    if (up.shape() != skip.shape()) {
      throw DimensionError("decoder skip mismatch: " + to_string(up.shape()) + " vs " + to_string(skip.shape()));
    }
    return add(up, skip);
  };
  auto x5 = join(decoder[0].forward(bottleneck, mode), skips[2]);
  auto x6 = join(decoder[1].forward(x5, mode), skips[1]);
  auto x7 = join(decoder[2].forward(x6, mode), skips[0]);
  if (stages) *stages = {x5.shape(), x6.shape(), x7.shape()};
  return x7;
}

template <typename S>
Tensor<S> SimbaModule<S>::forward(const Tensor<S>& x, Mode mode, ModuleTrace* trace) {
  auto x_l = entry.forward(x, mode);
  if (trace) trace->entry = x_l.shape();
  if (gate) x_l = gate->forward(x_l);
  auto enc = encode(x_l, mode);
  if (trace) {
    trace->encoder = {enc.skips[1].shape(), enc.skips[2].shape(), enc.bottleneck.shape()};
  }
  auto flat = flatten_permute(enc.bottleneck);
  if (trace) trace->flattened = flat.shape();
  auto mixed = imamba ? imamba->forward(flat) : flat;
  if (trace) trace->imamba = mixed.shape();
  const auto xn = unflatten_permute(mixed, bottleneck_);
  auto x7 = decode(xn, enc.skips, mode, trace ? &trace->decoder : nullptr);
  auto out = relu(add(tcn.forward(x7, mode), residual.forward(x, mode)));
  if (trace) trace->output = out.shape();
  return out;
}

template <typename S>
void SimbaModule<S>::collect(const std::string& prefix, ParameterList<S>& out) const {
  entry.collect(prefix + "entry.", out);
  if (gate) gate->collect(prefix + "gate.", out);
  for (std::size_t i = 0; i < encoder.size(); ++i) encoder[i].collect(prefix + "encoder." + std::to_string(i) + ".", out);
  if (imamba) imamba->collect(prefix + "imamba.", out);
  for (std::size_t i = 0; i < decoder.size(); ++i) decoder[i].collect(prefix + "decoder." + std::to_string(i) + ".", out);
  tcn.collect(prefix + "tcn.", out);
  residual.collect(prefix + "residual.", out);
}

template <typename S>
SimbaModel<S>::SimbaModel(const SimbaConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  modules.reserve(static_cast<std::size_t>(config_.depth));
  for (Index i = 0; i < config_.depth; ++i) {
    modules.emplace_back(config_, i == 0 ? config_.in_channels : config_.channels, rng);
  }
  head_w = fan_in_uniform<S>({config_.num_classes, config_.channels}, config_.channels, rng);
  head_b = fan_in_uniform<S>({config_.num_classes}, config_.channels, rng);
}

template <typename S>
Tensor<S> SimbaModel<S>::forward(const Tensor<S>& x, Mode mode, std::vector<ModuleTrace>* traces) {
  if (x.rank() != 4 || x.dim(1) != config_.in_channels || x.dim(3) != config_.joints) {
    throw DimensionError("SimbaModel: expected [N," + std::to_string(config_.in_channels) + ",T," +
                         std::to_string(config_.joints) + "], got " + to_string(x.shape()));
  }
  Tensor<S> h = x;
  for (auto& m : modules) {
    ModuleTrace* tr = nullptr;
    if (traces) tr = &traces->emplace_back();
    h = m.forward(h, mode, tr);
  }
  return linear(mean_axes(h, {2, 3}), head_w, head_b);
}

template <typename S>
ParameterList<S> SimbaModel<S>::parameters() const {
  ParameterList<S> out;
  for (std::size_t i = 0; i < modules.size(); ++i) modules[i].collect("modules." + std::to_string(i) + ".", out);
  add_weight(out, "head.weight", head_w);
  add_param(out, "head.bias", head_b);
  return out;
}

#define SIMBA_INSTANTIATE_MODEL(S)                                   \
  template Tensor<S> flatten_permute(const Tensor<S>&);              \
  template Tensor<S> unflatten_permute(const Tensor<S>&, Index);     \
  template struct PartitionGate<S>;                                  \
  template class SimbaModule<S>;                                     \
  template class SimbaModel<S>;

SIMBA_INSTANTIATE_MODEL(float)
SIMBA_INSTANTIATE_MODEL(double)

}  // namespace simba
