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
#include "simba/errors.hpp"
#include "simba/gradcheck.hpp"
#include "simba/ops.hpp"
#include "simba/shift_gcn.hpp"

#include <algorithm>

using namespace simba;
using simba::test::bit_equal;
using simba::test::randn;

namespace {

void set_identity(TensorD& w) {
  for (auto& v : w.mutable_data()) v = 0;
  for (Index i = 0; i < w.dim(0); ++i) w.mutable_data()[static_cast<std::size_t>(i * w.dim(1) + i)] = 1;
}

}  // namespace

TEST_CASE("spatial shift leaves channel 0 and rotates channel c by c") {
  auto x = TensorD::zeros({1, 3, 1, 3});
  for (Index c = 0; c < 3; ++c)
    for (Index v = 0; v < 3; ++v) x.mutable_data()[static_cast<std::size_t>(c * 3 + v)] = static_cast<double>(v);
  auto y = spatial_shift(x);
  CHECK(y.at({0, 0, 0, 0}) == 0);
  CHECK(y.at({0, 0, 0, 2}) == 2);
  CHECK(y.at({0, 1, 0, 0}) == 1);
  CHECK(y.at({0, 1, 0, 1}) == 2);
  CHECK(y.at({0, 1, 0, 2}) == 0);
  Rng rng(1);
  auto r = randn({2, 5, 3, 4}, rng);
  auto s = spatial_shift(r);
  for (Index n = 0; n < 2; ++n)
    for (Index t = 0; t < 3; ++t)
      for (Index v = 0; v < 4; ++v) CHECK(s.at({n, 0, t, v}) == r.at({n, 0, t, v}));
}

TEST_CASE("spatial shift permutes values within each (n,t) slice") {
  Rng rng(7);
  const Index N = 2, C = 6, T = 3, V = 5;
  auto x = randn({N, C, T, V}, rng);
  auto y = spatial_shift(x);
  for (Index n = 0; n < N; ++n)
    for (Index t = 0; t < T; ++t) {
      std::vector<double> a, b;
      for (Index c = 0; c < C; ++c)
        for (Index v = 0; v < V; ++v) {
          a.push_back(x.at({n, c, t, v}));
          b.push_back(y.at({n, c, t, v}));
        }
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      CHECK(a == b);
    }
}

TEST_CASE("spatial unshift inverts spatial shift") {
  Rng rng(8);
  auto x = randn({2, 7, 3, 5}, rng);
  CHECK(bit_equal(spatial_unshift(spatial_shift(x)), x));
  CHECK(bit_equal(spatial_shift(spatial_unshift(x)), x));
}

TEST_CASE("shifts are linear") {
  Rng rng(9);
  auto x = randn({1, 4, 5, 3}, rng), y = randn({1, 4, 5, 3}, rng);
  const double a = 0.5, b = -2.0;  // powers of two keep the check bit exact
  auto lhs = spatial_shift(add(scale(x, a), scale(y, b)));
  CHECK(bit_equal(lhs, add(scale(spatial_shift(x), a), scale(spatial_shift(y), b))));
  auto lt = temporal_shift(add(scale(x, a), scale(y, b)), 1);
  CHECK(bit_equal(lt, add(scale(temporal_shift(x, 1), a), scale(temporal_shift(y, 1), b))));
}

TEST_CASE("temporal offsets cycle through -r..r") {
  CHECK(temporal_offset(0, 1) == -1);
  CHECK(temporal_offset(1, 1) == 0);
  CHECK(temporal_offset(2, 1) == 1);
  CHECK(temporal_offset(3, 1) == -1);
  CHECK(temporal_offset(4, 2) == 2);
}

TEST_CASE("temporal shift moves frames and zero pads") {
  auto x = TensorD::zeros({1, 3, 3, 1});
  for (Index c = 0; c < 3; ++c)
    for (Index t = 0; t < 3; ++t) x.mutable_data()[static_cast<std::size_t>(c * 3 + t)] = static_cast<double>(t + 1);
  auto y = temporal_shift(x, 1);
  CHECK(y.at({0, 0, 0, 0}) == 2);
  CHECK(y.at({0, 0, 1, 0}) == 3);
  CHECK(y.at({0, 0, 2, 0}) == 0);
  CHECK(y.at({0, 1, 1, 0}) == 2);
  CHECK(y.at({0, 2, 0, 0}) == 0);
  CHECK(y.at({0, 2, 2, 0}) == 2);
  CHECK(bit_equal(temporal_shift(x, 0), x));
  CHECK_THROWS_AS(temporal_shift(x, -1), DomainError);
}

TEST_CASE("temporal shift loses exactly the boundary mass") {
  Rng rng(10);
  const Index C = 7, T = 6, V = 4;
  const int r = 2;
  auto x = randn({2, C, T, V}, rng);
  double lost = 0;
  for (Index n = 0; n < 2; ++n)
    for (Index c = 0; c < C; ++c) {
      const int u = temporal_offset(c, r);
      for (Index t = 0; t < T; ++t) {
        // frame t is read by output t+u; it is dropped when t+u leaves [0,T)
        if (t + u < 0 || t + u >= T)
          for (Index v = 0; v < V; ++v) lost += x.at({n, c, t, v});
      }
    }
  CHECK(sum(temporal_shift(x, r)).item() == doctest::Approx(sum(x).item() - lost).epsilon(1e-12));
}

TEST_CASE("Shift S-GCN with identity conv and passthrough BN is relu of the shift") {
  Rng rng(11);
  ShiftSGcnBlock<double> blk(4, 4, rng);
  set_identity(blk.w);
  for (auto& v : blk.b.mutable_data()) v = 0;
  blk.bn.eps = 0;
  auto x = randn({2, 4, 3, 5}, rng);
  CHECK(bit_equal(blk.forward(x, Mode::eval), relu(spatial_shift(x))));
}

TEST_CASE("Shift S-GCN shape contract and nonnegative output") {
  Rng rng(12);
  ShiftSGcnBlock<double> blk(216, 108, rng);
  auto y = blk.forward(randn({2, 216, 64, 25}, rng), Mode::train);
  CHECK(y.shape() == Shape{2, 108, 64, 25});
  CHECK(y.array().minCoeff() >= 0);
  CHECK_THROWS_AS(blk.forward(TensorD::zeros({2, 100, 4, 25}), Mode::train), DimensionError);
}

TEST_CASE("ShiftTCN is the identity with r=0, identity conv and passthrough BN") {
  Rng rng(13);
  ShiftTcnBlock<double> blk(5, 0, rng);
  set_identity(blk.w);
  for (auto& v : blk.b.mutable_data()) v = 0;
  blk.bn.eps = 0;
  auto x = randn({2, 5, 4, 3}, rng);
  CHECK(bit_equal(blk.forward(x, Mode::eval), x));
}

TEST_CASE("ShiftTCN and residual shape contracts") {
  Rng rng(14);
  ShiftTcnBlock<double> tcn(216, 1, rng);
  CHECK(tcn.forward(randn({2, 216, 64, 25}, rng), Mode::train).shape() == Shape{2, 216, 64, 25});
  UnitTcnResidual<double> res(3, 216, rng);
  CHECK(res.forward(randn({2, 3, 64, 25}, rng), Mode::train).shape() == Shape{2, 216, 64, 25});
}

TEST_CASE("shift blocks pass the finite-difference check") {
  for (const char* suite : {"shift_sgcn", "shift_tcn"}) {
    for (const auto& r : run_gradcheck_suite(suite, 5)) {
      INFO(r.name << " rel err " << r.max_rel_error);
      CHECK(r.passed());
    }
  }
}
