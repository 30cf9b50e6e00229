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

#include "simba/gradcheck.hpp"

#include "simba/config.hpp"
#include "simba/errors.hpp"
#include "simba/model.hpp"
#include "simba/ops.hpp"
#include "simba/shift_gcn.hpp"
#include "simba/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace simba {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return denom > 0 ? std::abs(analytic - numeric) / denom : 0.0;
}

GradcheckResult check_gradients(const std::string& name, const std::function<TensorD()>& loss,
                                const std::vector<TensorD>& leaves, const GradcheckOptions& options) {
  GradcheckResult res;
  res.name = name;
  res.threshold = options.threshold;
  for (auto leaf : leaves) {
    if (!leaf.requires_grad()) throw ValidationError("gradcheck '" + name + "': leaf does not require grad");
    leaf.zero_grad();
  }
  loss().backward();

  std::vector<std::vector<double>> analytic, numeric;
  double scale = 0;
  {
    NoGradGuard no_grad;
    for (auto leaf : leaves) {
      const auto g = leaf.grad();
      analytic.emplace_back(g.begin(), g.end());
      analytic.back().resize(static_cast<std::size_t>(leaf.numel()), 0.0);
      std::vector<double> fd(static_cast<std::size_t>(leaf.numel()));
      auto x = leaf.mutable_data();
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = x[i];
        x[i] = orig + options.step;
        const double up = loss().item();
        x[i] = orig - options.step;
        const double down = loss().item();
        x[i] = orig;
        fd[i] = (up - down) / (2 * options.step);
        scale = std::max(scale, std::abs(fd[i]));
      }
      numeric.push_back(std::move(fd));
    }
  }
  const double floor = std::max(options.floor_fraction * scale, 1e-12);
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    for (std::size_t i = 0; i < numeric[l].size(); ++i) {
      res.max_rel_error = std::max(res.max_rel_error, relative_error(analytic[l][i], numeric[l][i], floor));
      ++res.entries;
    }
  }
  for (auto leaf : leaves) leaf.zero_grad();
  return res;
}

TensorD probe_loss(const TensorD& out, const TensorD& probe) { return sum(mul(out, probe)); }

TensorD random_tensor(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
  auto t = TensorD::zeros(std::move(shape), requires_grad);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.mutable_data()) v = dist(rng);
  return t;
}

namespace {

constexpr double kPrimitiveTol = 1e-6;
constexpr double kBlockTol = 1e-5;

// Resample entries closer than `gap` to zero so FD steps never cross a kink.
TensorD away_from_zero(Shape shape, Rng& rng, double gap) {
  auto t = random_tensor(std::move(shape), rng);
  std::uniform_real_distribution<double> dist(-1, 1);
  for (auto& v : t.mutable_data())
    while (std::abs(v) < gap) v = dist(rng);
  return t;
}

std::vector<TensorD> trainable(const ParameterList<double>& params) {
  std::vector<TensorD> out;
  for (const auto& p : params)
    if (p.trainable) out.push_back(p.tensor);
  return out;
}

using Check = std::function<GradcheckResult(Rng&)>;

// Wraps out = f(leaves...) into a probed loss check.
GradcheckResult probed(const std::string& name, const std::vector<TensorD>& leaves, Rng& rng, double tol,
                       const std::function<TensorD()>& f) {
  Shape shape;
  {
    NoGradGuard no_grad;
    shape = f().shape();
  }
  const TensorD probe = random_tensor(shape, rng, -1, 1, false);
  GradcheckOptions opt;
  opt.threshold = tol;
  return check_gradients(name, [&] { return probe_loss(f(), probe); }, leaves, opt);
}

std::vector<GradcheckResult> primitives(Rng& rng) {
  std::vector<GradcheckResult> out;
  auto run = [&](const std::string& name, const std::vector<TensorD>& leaves, const std::function<TensorD()>& f) {
    out.push_back(probed(name, leaves, rng, kPrimitiveTol, f));
  };
  {
    auto a = random_tensor({2, 3, 4}, rng), b = random_tensor({3, 1}, rng);
    run("add", {a, b}, [=] { return add(a, b); });
    run("sub", {a, b}, [=] { return sub(a, b); });
    auto c = random_tensor({2, 1, 4}, rng);
    run("mul", {c, b}, [=] { return mul(c, b); });
    run("scale", {a}, [=] { return scale(a, 1.7); });
    run("add_scalar", {a}, [=] { return add_scalar(a, -0.3); });
    run("broadcast_to", {b}, [=] { return broadcast_to(b, {2, 3, 4}); });
  }
  {
    auto x = away_from_zero({3, 7}, rng, 0.05);
    run("relu", {x}, [=] { return relu(x); });
    auto y = random_tensor({3, 7}, rng, -4, 4);
    run("silu", {y}, [=] { return silu(y); });
    run("exp", {y}, [=] { return exp(y); });
    auto s = random_tensor({3, 7}, rng, -4, 4);
    s.mutable_data()[2] = 21.3;
    s.mutable_data()[9] = 27.0;
    run("softplus", {s}, [=] { return softplus(s); });
  }
  {
    auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    run("matmul", {a, b}, [=] { return matmul(a, b); });
    auto x = random_tensor({2, 3, 4}, rng), w = random_tensor({5, 4}, rng), bias = random_tensor({5}, rng);
    run("linear", {x, w, bias}, [=] { return linear(x, w, bias); });
    auto xc = random_tensor({2, 3, 4, 5}, rng), wc = random_tensor({6, 3}, rng), bc = random_tensor({6}, rng);
    run("pointwise_conv2d", {xc, wc, bc}, [=] { return pointwise_conv2d(xc, wc, bc); });
    auto xs = random_tensor({2, 5, 3}, rng), ws = random_tensor({3, 4}, rng), bs = random_tensor({3}, rng);
    run("depthwise_causal_conv1d", {xs, ws, bs}, [=] { return depthwise_causal_conv1d(xs, ws, bs); });
  }
  {
    auto x = random_tensor({2, 3, 4, 5}, rng);
    auto bn = std::make_shared<BatchNorm2d<double>>(3);
    bn->gamma = random_tensor({3}, rng, 0.5, 1.5);
    bn->beta = random_tensor({3}, rng);
    run("batchnorm2d_train", {x, bn->gamma, bn->beta}, [=] { return batchnorm2d(x, *bn, Mode::train); });
    auto ev = std::make_shared<BatchNorm2d<double>>(3);
    ev->gamma = random_tensor({3}, rng, 0.5, 1.5);
    ev->beta = random_tensor({3}, rng);
    ev->running_mean = random_tensor({3}, rng, -1, 1, false);
    ev->running_var = random_tensor({3}, rng, 0.5, 2, false);
    run("batchnorm2d_eval", {x, ev->gamma, ev->beta}, [=] { return batchnorm2d(x, *ev, Mode::eval); });
    auto r = random_tensor({2, 3, 5}, rng), g = random_tensor({5}, rng, 0.5, 1.5);
    run("rmsnorm", {r, g}, [=] { return rmsnorm(r, g, 1e-5); });
    auto z = random_tensor({3, 5}, rng, -2, 2);
    run("softmax", {z}, [=] { return softmax(z); });
    auto logits = random_tensor({4, 5}, rng, -2, 2);
    GradcheckOptions opt;
    opt.threshold = kPrimitiveTol;
    auto ce = check_gradients("cross_entropy", [=] { return cross_entropy(logits, {0, 3, 4, 1}); }, {logits}, opt);
    out.push_back(ce);
  }
  {
    auto x = random_tensor({2, 3, 4}, rng);
    run("reshape", {x}, [=] { return reshape(x, {6, 4}); });
    run("permute", {x}, [=] { return permute(x, {2, 0, 1}); });
    std::vector<std::int32_t> idx(36);
    std::uniform_int_distribution<std::int32_t> pick(-1, 3);
    for (auto& i : idx) i = pick(rng);
    run("gather", {x}, [=] { return gather(x, 2, {2, 3, 6}, idx); });
    GradcheckOptions opt;
    opt.threshold = kPrimitiveTol;
    out.push_back(check_gradients("sum", [=] { return sum(mul(x, x)); }, {x}, opt));
    out.push_back(check_gradients("mean", [=] { return mean(mul(x, x)); }, {x}, opt));
    run("sum_axes", {x}, [=] { return sum_axes(x, {0, 2}); });
    run("mean_axes", {x}, [=] { return mean_axes(x, {1}, true); });
  }
  {
    auto x = random_tensor({2, 4, 3, 5}, rng);
    run("spatial_shift", {x}, [=] { return spatial_shift(x); });
    run("temporal_shift", {x}, [=] { return temporal_shift(x, 1); });
    run("flatten_permute", {x}, [=] { return flatten_permute(x); });
    auto f = random_tensor({2, 3, 20}, rng);
    run("unflatten_permute", {f}, [=] { return unflatten_permute(f, 4); });
  }
  {
    auto A = random_tensor({3, 2}, rng, -2, -0.5);
    auto B = random_tensor({2, 4, 2}, rng);
    auto dt = random_tensor({2, 4, 3}, rng, 0.1, 1.0);
    run("zoh_a_bar", {A, dt}, [=] { return ssm::zoh_discretize(A, B, dt).first; });
    run("zoh_b_bar", {A, B, dt}, [=] { return ssm::zoh_discretize(A, B, dt).second; });
    ssm::ScanInputs<double> in{random_tensor({2, 5, 3, 2}, rng, 0.5, 0.99), random_tensor({2, 5, 3, 2}, rng),
                               random_tensor({2, 5, 2}, rng)};
    auto y = random_tensor({2, 5, 3}, rng);
    run("selective_scan_sequential", {in.a_bar, in.b_bar, in.c, y},
        [=] { return ssm::selective_scan_sequential(in, y); });
    run("selective_scan_parallel", {in.a_bar, in.b_bar, in.c, y},
        [=] { return ssm::selective_scan_parallel(in, y, 2); });
  }
  return out;
}

SimbaConfig toy_config(bool gate) {
  SimbaConfig c;
  c.in_channels = 3;
  c.channels = 8;
  c.mamba_channels = 2;
  c.joints = 4;
  c.state = 2;
  c.depth = 1;
  c.num_classes = 3;
  c.partition_gate = gate;
  if (gate) {
    c.partitions = {0, 0, 1, 1};
    c.num_partitions = 2;
  }
  return c;
}

std::vector<GradcheckResult> block(const std::string& suite, Rng& rng) {
  std::vector<GradcheckResult> out;
  auto run = [&](const std::string& name, std::vector<TensorD> leaves, const ParameterList<double>& params,
                 const std::function<TensorD()>& f) {
    for (auto& t : trainable(params)) leaves.push_back(t);
    out.push_back(probed(name, leaves, rng, kBlockTol, f));
  };
  if (suite == "shift_sgcn") {
    auto blk = std::make_shared<ShiftSGcnBlock<double>>(4, 3, rng);
    ParameterList<double> p;
    blk->collect("", p);
    auto x = random_tensor({1, 4, 3, 5}, rng);
    run("shift_sgcn", {x}, p, [=] { return blk->forward(x, Mode::train); });
  } else if (suite == "shift_tcn") {
    auto blk = std::make_shared<ShiftTcnBlock<double>>(4, 1, rng);
    ParameterList<double> p;
    blk->collect("", p);
    auto x = random_tensor({1, 4, 5, 3}, rng);
    run("shift_tcn", {x}, p, [=] { return blk->forward(x, Mode::train); });
    auto res = std::make_shared<UnitTcnResidual<double>>(3, 4, rng);
    ParameterList<double> q;
    res->collect("", q);
    auto xr = random_tensor({1, 3, 5, 3}, rng);
    run("unit_tcn_residual", {xr}, q, [=] { return res->forward(xr, Mode::train); });
  } else if (suite == "imamba") {
    for (bool prenorm : {false, true}) {
      ssm::IMambaOptions o;
      o.d_model = 6;
      o.state = 3;
      o.prenorm = prenorm;
      auto m = std::make_shared<ssm::IMamba<double>>(o, rng);
      ParameterList<double> p;
      m->collect("", p);
      auto x = random_tensor({1, 4, 6}, rng);
      run(prenorm ? "imamba_prenorm" : "imamba", {x}, p, [=] { return m->forward(x); });
    }
  } else if (suite == "partition_gate") {
    auto g = std::make_shared<PartitionGate<double>>(4, std::vector<int>{0, 1, 0, 2, 1}, 3, rng);
    g->gate = random_tensor({1, 4, 1, 1}, rng, 0, 1);
    ParameterList<double> p;
    g->collect("", p);
    auto x = random_tensor({2, 4, 3, 5}, rng);
    run("partition_gate", {x}, p, [=] { return g->forward(x); });
  } else if (suite == "encoder" || suite == "decoder" || suite == "simba_module") {
    auto m = std::make_shared<SimbaModule<double>>(toy_config(false), 3, rng);
    ParameterList<double> p;
    m->collect("", p);
    if (suite == "encoder") {
      auto x = random_tensor({1, 8, 3, 4}, rng);
      auto p1 = random_tensor({1, 4, 3, 4}, rng, -1, 1, false);
      auto p2 = random_tensor({1, 2, 3, 4}, rng, -1, 1, false);
      auto p3 = random_tensor({1, 2, 3, 4}, rng, -1, 1, false);
      std::vector<TensorD> leaves{x};
      for (int i = 0; i < 3; ++i) {
        ParameterList<double> q;
        m->encoder[static_cast<std::size_t>(i)].collect("", q);
        for (auto& t : trainable(q)) leaves.push_back(t);
      }
      GradcheckOptions opt;
      opt.threshold = kBlockTol;
      out.push_back(check_gradients("encoder",
                                    [=] {
                                      auto e = m->encode(x, Mode::train);
                                      return add(add(probe_loss(e.bottleneck, p3), probe_loss(e.skips[1], p1)),
                                                 probe_loss(e.skips[2], p2));
                                    },
                                    leaves, opt));
    } else if (suite == "decoder") {
      auto xn = random_tensor({1, 2, 3, 4}, rng);
      std::array<TensorD, 3> skips{random_tensor({1, 8, 3, 4}, rng), random_tensor({1, 4, 3, 4}, rng),
                                   random_tensor({1, 2, 3, 4}, rng)};
      std::vector<TensorD> leaves{xn, skips[0], skips[1], skips[2]};
      ParameterList<double> q;
      for (int i = 0; i < 3; ++i) m->decoder[static_cast<std::size_t>(i)].collect("", q);
      run("decoder", leaves, q, [=] { return m->decode(xn, skips, Mode::train); });
    } else {
      auto x = random_tensor({1, 3, 3, 4}, rng);
      run("simba_module", {x}, p, [=] { return m->forward(x, Mode::train); });
      auto gm = std::make_shared<SimbaModule<double>>(toy_config(true), 3, rng);
      gm->gate->gate = random_tensor({1, 8, 1, 1}, rng, 0, 1);
      ParameterList<double> gp;
      gm->collect("", gp);
      run("simba_module_gated", {x}, gp, [=] { return gm->forward(x, Mode::train); });
    }
  } else if (suite == "model") {
    SimbaConfig c = toy_config(false);
    c.depth = 2;
    auto model = std::make_shared<SimbaModel<double>>(c, rng());
    auto x = random_tensor({2, 3, 3, 4}, rng);
    std::vector<TensorD> leaves{x};
    for (auto& t : trainable(model->parameters())) leaves.push_back(t);
    GradcheckOptions opt;
    opt.threshold = kBlockTol;
    out.push_back(check_gradients(
        "model_cross_entropy", [=] { return cross_entropy(model->forward(x, Mode::train), {2, 0}); }, leaves, opt));
  }
  return out;
}

}  // namespace

std::vector<std::string> gradcheck_suite_names() {
  return {"primitives", "shift_sgcn", "shift_tcn", "imamba", "partition_gate",
          "encoder",    "decoder",    "simba_module", "model"};
}

std::vector<GradcheckResult> run_gradcheck_suite(const std::string& name, std::uint64_t seed) {
  const auto names = gradcheck_suite_names();
  if (name != "all" && std::find(names.begin(), names.end(), name) == names.end()) {
    std::string list;
    for (const auto& n : names) list += " " + n;
    throw ValidationError("unknown gradcheck module '" + name + "' (all" + list + ")");
  }
  std::vector<GradcheckResult> out;
  for (const auto& suite : names) {
    if (name != "all" && name != suite) continue;
    Rng rng(seed);
    auto res = suite == "primitives" ? primitives(rng) : block(suite, rng);
    for (auto& r : res) {
      r.suite = suite;
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace simba
