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

#include <doctest.h>

#include "helpers.hpp"
#include "simba/config.hpp"
#include "simba/errors.hpp"
#include "simba/gradcheck.hpp"
#include "simba/model.hpp"
#include "simba/ops.hpp"

using namespace simba;
using simba::test::bit_equal;
using simba::test::max_abs_diff;
using simba::test::randn;

namespace {

SimbaConfig toy(bool imamba = true) {
  SimbaConfig c;
  c.in_channels = 3;
  c.channels = 8;
  c.mamba_channels = 2;
  c.joints = 4;
  c.state = 2;
  c.depth = 2;
  c.num_classes = 3;
  c.use_imamba = imamba;
  return c;
}

void zero(TensorD& t) {
  for (auto& v : t.mutable_data()) v = 0;
}

void set_identity(TensorD& w) {
  zero(w);
  for (Index i = 0; i < w.dim(0); ++i) w.mutable_data()[static_cast<std::size_t>(i * w.dim(1) + i)] = 1;
}

TensorD reverse_frames(const TensorD& x) {
  auto y = x.clone();
  const Index n = x.dim(0), c = x.dim(1), t = x.dim(2), v = x.dim(3);
  for (Index a = 0; a < n * c; ++a)
    for (Index f = 0; f < t; ++f)
      for (Index j = 0; j < v; ++j)
        y.mutable_data()[static_cast<std::size_t>((a * t + f) * v + j)] = x.data()[static_cast<std::size_t>((a * t + t - 1 - f) * v + j)];
  return y;
}

}  // namespace

TEST_CASE("flatten_permute indexing and round trip") {
  Rng rng(1);
  auto x = randn({2, 3, 4, 5}, rng);
  auto f = flatten_permute(x);
  REQUIRE(f.shape() == Shape{2, 4, 15});
  for (Index n = 0; n < 2; ++n)
    for (Index d = 0; d < 3; ++d)
      for (Index t = 0; t < 4; ++t)
        for (Index v = 0; v < 5; ++v) CHECK(f.at({n, t, v * 3 + d}) == x.at({n, d, t, v}));
  CHECK(bit_equal(unflatten_permute(f, 3), x));
  CHECK(flatten_permute(TensorD::zeros({2, 20, 64, 25})).shape() == Shape{2, 64, 500});
  CHECK(flatten_permute(TensorD::zeros({2, 25, 52, 20})).shape() == Shape{2, 52, 500});
}

TEST_CASE("channel ladder must divide by four") {
  SimbaConfig c = toy();
  c.channels = 10;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  Rng rng(0);
  CHECK_THROWS_AS(SimbaModule<double>(c, 3, rng), ConfigError);
}

TEST_CASE("encoder ladder shapes for both presets") {
  Rng rng(2);
  SimbaConfig ntu = ntu60_model();
  ntu.partition_gate = false;
  SimbaModule<double> m(ntu, 216, rng);
  NoGradGuard ng;
  auto e = m.encode(randn({2, 216, 8, 25}, rng), Mode::eval);
  CHECK(e.bottleneck.shape() == Shape{2, 20, 8, 25});
  CHECK(e.skips[0].dim(1) == 216);
  CHECK(e.skips[1].dim(1) == 108);
  CHECK(e.skips[2].dim(1) == 54);
  SimbaModule<double> u(nwucla_model(), 216, rng);
  CHECK(u.encode(randn({1, 216, 6, 20}, rng), Mode::eval).bottleneck.shape() == Shape{1, 25, 6, 20});
}

TEST_CASE("decoder with zeroed weights returns the skip chain") {
  Rng rng(3);
  SimbaModule<double> m(toy(), 3, rng);
  for (auto& blk : m.decoder) {
    zero(blk.w);
    zero(blk.b);
    zero(blk.bn.beta);
  }
  std::array<TensorD, 3> skips{randn({1, 8, 3, 4}, rng), randn({1, 4, 3, 4}, rng), randn({1, 2, 3, 4}, rng)};
  CHECK(bit_equal(m.decode(randn({1, 2, 3, 4}, rng), skips, Mode::eval), skips[0]));
  std::array<TensorD, 3> bad{skips[0], randn({1, 3, 3, 4}, rng), skips[2]};
  CHECK_THROWS_AS(m.decode(randn({1, 2, 3, 4}, rng), bad, Mode::eval), DimensionError);
}

TEST_CASE("module output is nonnegative with the expected shape") {
  Rng rng(4);
  SimbaModule<double> first(toy(), 3, rng), later(toy(), 8, rng);
  auto y = first.forward(randn({2, 3, 5, 4}, rng), Mode::train);
  CHECK(y.shape() == Shape{2, 8, 5, 4});
  CHECK(y.array().minCoeff() >= 0);
  CHECK(later.forward(y, Mode::train).shape() == Shape{2, 8, 5, 4});
}

TEST_CASE("partition gate passthrough cases") {
  Rng rng(5);
  auto x = randn({2, 4, 3, 5}, rng);
  PartitionGate<double> g(4, {0, 1, 0, 2, 1}, 3, rng);
  auto labels = g.labels();
  for (Index v = 0; v < 5; ++v) {
    double s = 0;
    for (Index k = 0; k < 3; ++k) s += labels.at({v, k});
    CHECK(s == 1);
  }
  for (auto& w : g.gate.mutable_data()) w = 1;
  CHECK(bit_equal(g.forward(x), x));

  PartitionGate<double> id(4, {0, 1, 2, 3, 4}, 5, rng);
  set_identity(id.proj_w);
  zero(id.proj_b);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& w : id.gate.mutable_data()) w = u(rng);
  CHECK(bit_equal(id.forward(x), x));
}

TEST_CASE("single partition with open gate broadcasts the joint mean") {
  Rng rng(6);
  auto x = randn({1, 3, 2, 4}, rng);
  PartitionGate<double> g(3, {0, 0, 0, 0}, 1, rng);
  set_identity(g.proj_w);
  zero(g.proj_b);
  zero(g.gate);
  auto y = g.forward(x);
  for (Index c = 0; c < 3; ++c)
    for (Index t = 0; t < 2; ++t) {
      double m = 0;
      for (Index v = 0; v < 4; ++v) m += x.at({0, c, t, v});
      m /= 4;
      for (Index v = 0; v < 4; ++v) CHECK(y.at({0, c, t, v}) == doctest::Approx(m).epsilon(1e-14));
    }
}

TEST_CASE("partition gate rejects unassigned joints") {
  Rng rng(7);
  CHECK_THROWS_AS(PartitionGate<double>(4, {0, 1, -1}, 2, rng), ConfigError);
  CHECK_THROWS_AS(PartitionGate<double>(4, {0, 1, 2}, 2, rng), ConfigError);
  SimbaConfig c = toy();
  c.partition_gate = true;
  c.num_partitions = 2;
  c.partitions = {0, 1, 1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("UCLA preset produces ten logits") {
  SimbaConfig c = nwucla_model();
  c.depth = 1;
  SimbaModel<double> model(c, 1);
  NoGradGuard ng;
  std::vector<ModuleTrace> traces;
  Rng rng(8);
  auto logits = model.forward(randn({2, 3, 52, 20}, rng), Mode::eval, &traces);
  CHECK(logits.shape() == Shape{2, 10});
  CHECK(traces.at(0).flattened == Shape{2, 52, 500});
}

TEST_CASE("batch order permutes logits in eval mode") {
  SimbaModel<double> model(toy(), 3);
  Rng rng(9);
  auto a = randn({1, 3, 5, 4}, rng), b = randn({1, 3, 5, 4}, rng);
  auto ab = TensorD::zeros({2, 3, 5, 4}), ba = TensorD::zeros({2, 3, 5, 4});
  std::copy(a.data().begin(), a.data().end(), ab.mutable_data().begin());
  std::copy(b.data().begin(), b.data().end(), ab.mutable_data().begin() + 60);
  std::copy(b.data().begin(), b.data().end(), ba.mutable_data().begin());
  std::copy(a.data().begin(), a.data().end(), ba.mutable_data().begin() + 60);
  auto l1 = model.forward(ab, Mode::eval), l2 = model.forward(ba, Mode::eval);
  for (Index k = 0; k < 3; ++k) {
    CHECK(l1.at({0, k}) == doctest::Approx(l2.at({1, k})).epsilon(1e-13));
    CHECK(l1.at({1, k}) == doctest::Approx(l2.at({0, k})).epsilon(1e-13));
  }
}

TEST_CASE("parameter count depends only on the configuration") {
  SimbaModel<double> a(toy(), 1), b(toy(), 99);
  CHECK(a.parameter_count() == b.parameter_count());
  SimbaConfig c = toy();
  c.use_imamba = false;
  CHECK(SimbaModel<double>(c, 1).parameter_count() < a.parameter_count());
  SimbaModel<float> f(toy(), 1);
  CHECK(f.parameter_count() == a.parameter_count());
}

TEST_CASE("same seed gives bit-identical forward outputs") {
  Rng rng(10);
  auto x = randn({2, 3, 5, 4}, rng);
  SimbaModel<double> a(toy(), 5), b(toy(), 5);
  CHECK(bit_equal(a.forward(x, Mode::train), b.forward(x, Mode::train)));
}

TEST_CASE("U-ShiftGCN ablation is trainable") {
  SimbaConfig c = toy(false);
  SimbaModel<double> model(c, 2);
  for (const auto& p : model.parameters()) CHECK(p.name.find("imamba") == std::string::npos);
  Rng rng(11);
  auto x = randn({4, 3, 5, 4}, rng);
  const std::vector<int> labels{0, 1, 2, 0};
  double first = 0, last = 0;
  for (int step = 0; step < 30; ++step) {
    auto loss = cross_entropy(model.forward(x, Mode::train), labels);
    for (auto& p : model.parameters()) p.tensor.zero_grad();
    loss.backward();
    for (auto& p : model.parameters()) {
      if (!p.trainable || !p.tensor.has_grad()) continue;
      auto w = p.tensor.mutable_data();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 0.1 * p.tensor.grad()[i];
    }
    (step == 0 ? first : last) = loss.item();
  }
  CHECK(last < first);
}

TEST_CASE("skips and residual carry gradient with zeroed shift convolutions") {
  Rng rng(12);
  SimbaModel<double> model(toy(), 4);
  for (auto& m : model.modules) {
    zero(m.entry.w);
    for (auto& blk : m.encoder) zero(blk.w);
    for (auto& blk : m.decoder) zero(blk.w);
  }
  auto x = randn({2, 3, 5, 4}, rng, true);
  cross_entropy(model.forward(x, Mode::train), {0, 2}).backward();
  double norm = 0;
  for (double g : x.grad()) norm += g * g;
  CHECK(norm > 0);

  // Only the residual unit remains once the temporal block is zeroed too.
  for (auto& m : model.modules) zero(m.tcn.w);
  x.zero_grad();
  cross_entropy(model.forward(x, Mode::train), {0, 2}).backward();
  norm = 0;
  for (double g : x.grad()) norm += g * g;
  CHECK(norm > 0);
}

TEST_CASE("IMamba breaks frame-order invariance") {
  Rng rng(13);
  auto x = randn({1, 3, 6, 4}, rng);
  SimbaModel<double> with(toy(), 6);
  CHECK(max_abs_diff(with.forward(x, Mode::eval), with.forward(reverse_frames(x), Mode::eval)) > 1e-9);
  SimbaConfig c = toy(false);
  c.temporal_radius = 0;
  SimbaModel<double> without(c, 6);
  CHECK(max_abs_diff(without.forward(x, Mode::eval), without.forward(reverse_frames(x), Mode::eval)) <= 1e-12);
}

TEST_CASE("encoder, decoder, gate, module and model pass the finite-difference check") {
  for (const char* suite : {"partition_gate", "encoder", "decoder", "simba_module", "model"}) {
    for (const auto& r : run_gradcheck_suite(suite, 3)) {
      INFO(r.name << " rel err " << r.max_rel_error);
      CHECK(r.threshold == 1e-5);
      CHECK(r.passed());
    }
  }
}
