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
#include "simba/ssm.hpp"

#include <cmath>

using namespace simba;
using namespace simba::ssm;
using simba::test::max_abs_diff;
using simba::test::uniform;

namespace {

// Composite Simpson rule for the ZOH input integral, int_0^dt exp(sA) B ds.
double simpson_zoh(double A, double dt, double B, int steps = 10000) {
  const double h = dt / steps;
  double acc = std::exp(0.0) + std::exp(dt * A);
  for (int i = 1; i < steps; ++i) acc += (i % 2 ? 4.0 : 2.0) * std::exp(i * h * A);
  return acc * h / 3.0 * B;
}

ScanInputs<double> random_scan(Rng& rng, Index n, Index t, Index d, Index w) {
  return {uniform({n, t, d, w}, rng, 0.3, 0.999), uniform({n, t, d, w}, rng, -1, 1), uniform({n, t, w}, rng, -1, 1)};
}

void zero(Tensor<double>& t) {
  for (auto& v : t.mutable_data()) v = 0;
}

}  // namespace

TEST_CASE("ZOH scalar closed form") {
  auto [a, b] = zoh_discretize(TensorD::from({1, 1}, {-1}), TensorD::from({1, 1, 1}, {1}),
                               TensorD::from({1, 1, 1}, {std::log(2.0)}));
  CHECK(std::abs(a.item() - 0.5) <= 1e-12);
  CHECK(std::abs(b.item() - 0.5) <= 1e-12);
}

TEST_CASE("ZOH small-step limit") {
  const double dt = 1e-8;
  auto [a, b] = zoh_discretize(TensorD::from({1, 1}, {-2.5}), TensorD::from({1, 1, 1}, {0.7}),
                               TensorD::from({1, 1, 1}, {dt}));
  CHECK(std::abs(a.item() - 1) <= 1e-7);
  CHECK(std::abs(b.item() / dt - 0.7) / 0.7 <= 1e-6);
}

TEST_CASE("ZOH input coefficient matches quadrature") {
  Rng rng(100);
  std::uniform_real_distribution<double> ua(-3, -0.05), ud(0.01, 2), ub(-2, 2);
  double worst = 0;
  for (int i = 0; i < 25; ++i) {
    const double A = ua(rng), dt = ud(rng), B = ub(rng);
    auto [a, b] = zoh_discretize(TensorD::from({1, 1}, {A}), TensorD::from({1, 1, 1}, {B}), TensorD::from({1, 1, 1}, {dt}));
    worst = std::max(worst, std::abs(b.item() - simpson_zoh(A, dt, B)));
    CHECK(a.item() == doctest::Approx(std::exp(dt * A)).epsilon(1e-15));
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("ZOH rejects nonpositive step and nonnegative A") {
  auto B = TensorD::from({1, 1, 1}, {1});
  CHECK_THROWS_AS(zoh_discretize(TensorD::from({1, 1}, {-1}), B, TensorD::from({1, 1, 1}, {0})), DomainError);
  CHECK_THROWS_AS(zoh_discretize(TensorD::from({1, 1}, {-1}), B, TensorD::from({1, 1, 1}, {-0.1})), DomainError);
  CHECK_THROWS_AS(zoh_discretize(TensorD::from({1, 1}, {0}), B, TensorD::from({1, 1, 1}, {0.1})), DomainError);
}

TEST_CASE("sequential scan hand unroll") {
  ScanInputs<double> in{TensorD::full({1, 3, 1, 1}, 0.5), TensorD::full({1, 3, 1, 1}, 0.5), TensorD::full({1, 3, 1}, 1.0)};
  auto out = selective_scan_sequential(in, TensorD::full({1, 3, 1}, 1.0));
  CHECK(out.at({0, 0, 0}) == 0.5);
  CHECK(out.at({0, 1, 0}) == 0.75);
  CHECK(out.at({0, 2, 0}) == 0.875);
}

TEST_CASE("scan with zero C is zero and T=1 has no history") {
  Rng rng(3);
  auto in = random_scan(rng, 2, 5, 3, 4);
  auto y = uniform({2, 5, 3}, rng, -1, 1);
  ScanInputs<double> zc{in.a_bar, in.b_bar, TensorD::zeros({2, 5, 4})};
  CHECK(selective_scan_sequential(zc, y).array().abs().maxCoeff() == 0);

  auto one = random_scan(rng, 1, 1, 2, 3);
  auto y1 = uniform({1, 1, 2}, rng, -1, 1);
  auto out = selective_scan_sequential(one, y1);
  for (Index d = 0; d < 2; ++d) {
    double ref = 0;
    for (Index w = 0; w < 3; ++w) ref += one.c.at({0, 0, w}) * one.b_bar.at({0, 0, d, w}) * y1.at({0, 0, d});
    CHECK(out.at({0, 0, d}) == doctest::Approx(ref).epsilon(1e-15));
  }
}

TEST_CASE("parallel scan equals sequential for every chunk size") {
  Rng rng(17);
  const Index T = 37;
  auto in = random_scan(rng, 2, T, 5, 4);
  auto y = uniform({2, T, 5}, rng, -1, 1);
  const auto seq = selective_scan_sequential(in, y);
  for (Index chunk : {Index(1), Index(3), Index(16), T}) {
    CAPTURE(chunk);
    CHECK(max_abs_diff(selective_scan_parallel(in, y, chunk), seq) <= 1e-12);
  }
  CHECK(simba::test::bit_equal(selective_scan_parallel(in, y, T), seq));
  CHECK(simba::test::bit_equal(selective_scan_parallel(in, y, 5 * T), seq));
  CHECK_THROWS_AS(selective_scan_parallel(in, y, 0), DomainError);
}

TEST_CASE("chunked kernel is independent of the worker count") {
  Rng rng(18);
  const ScanDims dims{1, 200, 6, 3};
  std::vector<double> a(200 * 6 * 3), b(a.size()), c(200 * 3), y(200 * 6), o1(y.size()), o4(y.size());
  std::uniform_real_distribution<double> da(0.5, 1.0), du(-1, 1);
  for (auto& v : a) v = da(rng);
  for (auto& v : b) v = du(rng);
  for (auto& v : c) v = du(rng);
  for (auto& v : y) v = du(rng);
  scan_kernel_chunked<double>(dims, a.data(), b.data(), c.data(), y.data(), o1.data(), nullptr, 16, 1);
  scan_kernel_chunked<double>(dims, a.data(), b.data(), c.data(), y.data(), o4.data(), nullptr, 16, 4);
  CHECK(o1 == o4);
}

TEST_CASE("LTI kernel hand values") {
  // A=-1, dt=ln2, B=C=1 gives a_bar = b_bar = 0.5.
  Eigen::VectorXd A(1), B(1), C(1);
  A << -1;
  B << 1;
  C << 1;
  auto k = lti_kernel<double>(A, B, C, std::log(2.0), 2);
  CHECK(k(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(k(1) == doctest::Approx(0.25).epsilon(1e-15));
  Eigen::VectorXd y(2);
  y << 1, 1;
  auto conv = causal_convolve<double>(k, y);
  CHECK(conv(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(conv(1) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(lti_kernel<double>(A, B, C, std::log(2.0), 1).size() == 1);
  CHECK_THROWS_AS(lti_kernel<double>(A, B, C, 0.3, 0), DomainError);
}

TEST_CASE("LTI convolution equals the recurrence") {
  const Index M = 32, W = 4;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> ua(-2, -0.1), ud(0.05, 1), u(-1, 1);
    Eigen::VectorXd A(W), B(W), C(W), y(M);
    for (Index w = 0; w < W; ++w) {
      A(w) = ua(rng);
      B(w) = u(rng);
      C(w) = u(rng);
    }
    for (Index t = 0; t < M; ++t) y(t) = u(rng);
    const double dt = ud(rng);
    const Eigen::VectorXd conv = causal_convolve<double>(lti_kernel<double>(A, B, C, dt, M), y);
    ScanInputs<double> in{TensorD::zeros({1, M, 1, W}), TensorD::zeros({1, M, 1, W}), TensorD::zeros({1, M, W})};
    for (Index t = 0; t < M; ++t)
      for (Index w = 0; w < W; ++w) {
        in.a_bar.mutable_data()[static_cast<std::size_t>(t * W + w)] = std::exp(dt * A(w));
        in.b_bar.mutable_data()[static_cast<std::size_t>(t * W + w)] = std::expm1(dt * A(w)) / A(w) * B(w);
        in.c.mutable_data()[static_cast<std::size_t>(t * W + w)] = C(w);
      }
    auto rec = selective_scan_sequential(in, TensorD::from({1, M, 1}, std::vector<double>(y.data(), y.data() + M)));
    for (Index t = 0; t < M; ++t) worst = std::max(worst, std::abs(rec.data()[t] - conv(t)));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("long rollouts stay finite") {
  Rng rng(5);
  const Index T = 1000000;
  const ScanDims dims{1, T, 1, 2};
  std::vector<double> a(T * 2), b(T * 2), c(T * 2), y(T), out(T);
  std::uniform_real_distribution<double> da(1e-3, 1.0), du(-1, 1);
  for (auto& v : a) v = da(rng);
  for (auto& v : b) v = du(rng);
  for (auto& v : c) v = du(rng);
  for (auto& v : y) v = du(rng);
  scan_kernel_sequential<double>(dims, a.data(), b.data(), c.data(), y.data(), out.data(), nullptr);
  bool finite = true;
  for (double v : out) finite = finite && std::isfinite(v);
  CHECK(finite);
}

TEST_CASE("IMamba parameterization is stable") {
  Rng rng(1);
  IMambaOptions o;
  o.d_model = 6;
  o.state = 5;
  IMamba<double> m(o, rng);
  CHECK((m.state_matrix().array() < 0).all());
  for (Index d = 0; d < 6; ++d)
    for (Index w = 0; w < 5; ++w) CHECK(m.state_matrix().at({d, w}) == doctest::Approx(-(w + 1)).epsilon(1e-14));
  for (double p : m.dt_bias.data()) {
    const double dt = std::log1p(std::exp(p));
    CHECK(dt >= 1e-3 * (1 - 1e-12));
    CHECK(dt <= 1e-1 * (1 + 1e-12));
  }
}

TEST_CASE("IMamba shape contract and d_model check") {
  Rng rng(2);
  IMambaOptions o;  // d_model 500, state 16
  IMamba<double> m(o, rng);
  auto x = simba::test::randn({2, 64, 500}, rng);
  CHECK(m.forward(x).shape() == Shape{2, 64, 500});
  CHECK_THROWS_AS(m.forward(TensorD::zeros({2, 64, 499})), ConfigError);
}

TEST_CASE("IMamba zero input with zero biases is zero") {
  Rng rng(3);
  IMambaOptions o;
  o.d_model = 6;
  o.state = 3;
  IMamba<double> m(o, rng);
  zero(m.in_y_b);
  zero(m.in_z_b);
  zero(m.conv_b);
  zero(m.sel_b_b);
  zero(m.sel_c_b);
  CHECK(m.forward(TensorD::zeros({1, 5, 6})).array().abs().maxCoeff() == 0);
}

TEST_CASE("IMamba with zero output projection is the identity") {
  Rng rng(4);
  IMambaOptions o;
  o.d_model = 6;
  o.state = 3;
  for (bool prenorm : {false, true}) {
    o.prenorm = prenorm;
    IMamba<double> m(o, rng);
    zero(m.out_w);
    auto x = simba::test::randn({2, 5, 6}, rng);
    CHECK(simba::test::bit_equal(m.forward(x), x));
  }
}

TEST_CASE("IMamba without selection weights is LTI") {
  Rng rng(6);
  IMambaOptions o;
  o.d_model = 4;
  o.state = 3;
  IMamba<double> m(o, rng);
  zero(m.sel_b_w);
  zero(m.sel_c_w);
  zero(m.sel_dt_w);
  const Index T = 20;
  auto y = simba::test::randn({1, T, 4}, rng);
  auto out = m.ssm(y);
  const auto A = m.state_matrix();
  Eigen::VectorXd B(3), C(3);
  for (Index w = 0; w < 3; ++w) {
    B(w) = m.sel_b_b.at({w});
    C(w) = m.sel_c_b.at({w});
  }
  double worst = 0;
  for (Index d = 0; d < 4; ++d) {
    Eigen::VectorXd Ad(3), yd(T);
    for (Index w = 0; w < 3; ++w) Ad(w) = A.at({d, w});
    for (Index t = 0; t < T; ++t) yd(t) = y.at({0, t, d});
    const double dt = std::log1p(std::exp(m.dt_bias.at({d})));
    const Eigen::VectorXd ref = causal_convolve<double>(lti_kernel<double>(Ad, B, C, dt, T), yd);
    for (Index t = 0; t < T; ++t) worst = std::max(worst, std::abs(ref(t) - out.at({0, t, d})));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("IMamba is causal") {
  Rng rng(7);
  IMambaOptions o;
  o.d_model = 6;
  o.state = 3;
  IMamba<double> m(o, rng);
  auto x = simba::test::randn({1, 10, 6}, rng);
  auto x2 = x.clone();
  const Index t0 = 6;
  for (Index d = 0; d < 6; ++d) x2.mutable_data()[static_cast<std::size_t>(t0 * 6 + d)] += 1.0;
  auto a = m.forward(x), b = m.forward(x2);
  for (Index t = 0; t < 10; ++t)
    for (Index d = 0; d < 6; ++d) {
      if (t < t0) CHECK(a.at({0, t, d}) == b.at({0, t, d}));
    }
  CHECK(a.at({0, t0, 0}) != b.at({0, t0, 0}));
}

TEST_CASE("IMamba passes the finite-difference check") {
  for (const auto& r : run_gradcheck_suite("imamba", 11)) {
    INFO(r.name << " rel err " << r.max_rel_error);
    CHECK(r.passed());
  }
}
