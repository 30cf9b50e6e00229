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

#include "simba/ssm.hpp"

#include "simba/autograd.hpp"
#include "simba/errors.hpp"
#include "simba/parallel.hpp"

#include <cmath>
#include <string>

namespace simba::ssm {

using detail::record;
using detail::wants;

namespace {

void check(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

template <typename S>
std::pair<Tensor<S>, Tensor<S>> zoh_discretize(const Tensor<S>& A, const Tensor<S>& B, const Tensor<S>& delta) {
  check(A.rank() == 2 && B.rank() == 3 && delta.rank() == 3 && B.dim(2) == A.dim(1) && delta.dim(2) == A.dim(0) &&
            B.dim(0) == delta.dim(0) && B.dim(1) == delta.dim(1),
        "zoh_discretize: A " + to_string(A.shape()) + ", B " + to_string(B.shape()) + ", delta " +
            to_string(delta.shape()) + " are inconsistent");
  for (S v : delta.data())
    if (!(v > 0)) throw DomainError("zoh_discretize: step size must be positive, got " + std::to_string(v));
  for (S v : A.data())
    if (!(v < 0)) throw DomainError("zoh_discretize: state matrix must be negative, got " + std::to_string(v));

  const Index rows = B.dim(0) * B.dim(1), dp = A.dim(0), w = A.dim(1);
  const Shape shape{B.dim(0), B.dim(1), dp, w};
  std::vector<S> a_bar(static_cast<std::size_t>(rows * dp * w));
  std::vector<S> b_bar(a_bar.size());
  const S* ad = A.data().data();
  const S* bd = B.data().data();
  const S* dd = delta.data().data();
  for (Index r = 0; r < rows; ++r)
    for (Index d = 0; d < dp; ++d) {
      const S step = dd[r * dp + d];
      for (Index k = 0; k < w; ++k) {
        const S x = step * ad[d * w + k];
        const auto i = static_cast<std::size_t>((r * dp + d) * w + k);
        a_bar[i] = std::exp(x);
        b_bar[i] = std::expm1(x) / ad[d * w + k] * bd[r * w + k];
      }
    }

  auto ta = record<S>(shape, std::move(a_bar), "zoh_a_bar", {A.node(), delta.node()}, [rows, dp, w](detail::Node<S>& o) {
    const S* ad = o.inputs[0]->data.data();
    const S* dd = o.inputs[1]->data.data();
    S* ga = wants(o, 0) ? o.inputs[0]->ensure_grad().data() : nullptr;
    S* gd = wants(o, 1) ? o.inputs[1]->ensure_grad().data() : nullptr;
    for (Index r = 0; r < rows; ++r)
      for (Index d = 0; d < dp; ++d) {
        const S step = dd[r * dp + d];
        S acc = 0;
        for (Index k = 0; k < w; ++k) {
          const auto i = static_cast<std::size_t>((r * dp + d) * w + k);
          const S ge = o.grad[i] * o.data[i];
          if (ga) ga[d * w + k] += ge * step;
          acc += ge * ad[d * w + k];
        }
        if (gd) gd[r * dp + d] += acc;
      }
  });

  auto tb = record<S>(shape, std::move(b_bar), "zoh_b_bar", {A.node(), B.node(), delta.node()},
                      [rows, dp, w](detail::Node<S>& o) {
                        const S* ad = o.inputs[0]->data.data();
                        const S* bd = o.inputs[1]->data.data();
                        const S* dd = o.inputs[2]->data.data();
                        S* ga = wants(o, 0) ? o.inputs[0]->ensure_grad().data() : nullptr;
                        S* gb = wants(o, 1) ? o.inputs[1]->ensure_grad().data() : nullptr;
                        S* gd = wants(o, 2) ? o.inputs[2]->ensure_grad().data() : nullptr;
                        for (Index r = 0; r < rows; ++r)
                          for (Index d = 0; d < dp; ++d) {
                            const S step = dd[r * dp + d];
                            S acc = 0;
                            for (Index k = 0; k < w; ++k) {
                              const S a = ad[d * w + k];
                              const S x = step * a;
                              const S e = std::exp(x);
                              const S em1 = std::expm1(x);
                              const S g = o.grad[static_cast<std::size_t>((r * dp + d) * w + k)];
                              const S b = bd[r * w + k];
                              if (gb) gb[r * w + k] += g * em1 / a;
                              if (ga) ga[d * w + k] += g * b * (x * e - em1) / (a * a);
                              acc += g * b * e;
                            }
                            if (gd) gd[r * dp + d] += acc;
                          }
                      });
  return {ta, tb};
}

template <typename S>
void scan_kernel_sequential(const ScanDims& dims, const S* a_bar, const S* b_bar, const S* c, const S* y, S* out,
                            S* states) {
  const Index T = dims.steps, D = dims.channels, W = dims.state;
  std::vector<S> h(static_cast<std::size_t>(D * W));
  for (Index n = 0; n < dims.batch; ++n) {
    std::fill(h.begin(), h.end(), S(0));
    for (Index t = 0; t < T; ++t) {
      const Index row = n * T + t;
      const S* at = a_bar + row * D * W;
      const S* bt = b_bar + row * D * W;
      const S* ct = c + row * W;
      const S* yt = y + row * D;
      S* ot = out + row * D;
      for (Index d = 0; d < D; ++d) {
        S* hd = h.data() + d * W;
        const S yd = yt[d];
        S acc = 0;
        for (Index k = 0; k < W; ++k) {
          hd[k] = at[d * W + k] * hd[k] + bt[d * W + k] * yd;
          acc += ct[k] * hd[k];
        }
        ot[d] = acc;
      }
      if (states) std::copy(h.begin(), h.end(), states + row * D * W);
    }
  }
}

template <typename S>
void scan_kernel_chunked(const ScanDims& dims, const S* a_bar, const S* b_bar, const S* c, const S* y, S* out,
                         S* states, Index chunk, int threads) {
  if (chunk < 1) throw DomainError("selective scan chunk must be >= 1, got " + std::to_string(chunk));
  const Index T = dims.steps, D = dims.channels, W = dims.state, DW = D * W;
  if (chunk >= T) {
    scan_kernel_sequential(dims, a_bar, b_bar, c, y, out, states);
    return;
  }
  const Index chunks = (T + chunk - 1) / chunk;
  // Chunk-local end state from zero and cumulative decay, per (n, chunk).
  std::vector<S> local_h(static_cast<std::size_t>(dims.batch * chunks * DW));
  std::vector<S> local_a(local_h.size());
  parallel_for(
      0, dims.batch * (chunks - 1),
      [&](Index task) {
        const Index n = task / (chunks - 1), j = task % (chunks - 1);
        S* h = local_h.data() + (n * chunks + j) * DW;
        S* p = local_a.data() + (n * chunks + j) * DW;
        std::fill(h, h + DW, S(0));
        std::fill(p, p + DW, S(1));
        for (Index t = j * chunk; t < (j + 1) * chunk; ++t) {
          const Index row = n * T + t;
          const S* at = a_bar + row * DW;
          const S* bt = b_bar + row * DW;
          const S* yt = y + row * D;
          for (Index d = 0; d < D; ++d)
            for (Index k = 0; k < W; ++k) {
              const Index i = d * W + k;
              h[i] = at[i] * h[i] + bt[i] * yt[d];
              p[i] *= at[i];
            }
        }
      },
      threads);
  // Carried-in state per chunk: combine (a1,b1) o (a2,b2) = (a1 a2, a2 b1 + b2).
  std::vector<S> carry(static_cast<std::size_t>(dims.batch * chunks * DW), S(0));
  for (Index n = 0; n < dims.batch; ++n)
    for (Index j = 1; j < chunks; ++j) {
      const S* prev = carry.data() + (n * chunks + j - 1) * DW;
      const S* h = local_h.data() + (n * chunks + j - 1) * DW;
      const S* p = local_a.data() + (n * chunks + j - 1) * DW;
      S* cur = carry.data() + (n * chunks + j) * DW;
      for (Index i = 0; i < DW; ++i) cur[i] = p[i] * prev[i] + h[i];
    }
  parallel_for(
      0, dims.batch * chunks,
      [&](Index task) {
        const Index n = task / chunks, j = task % chunks;
        std::vector<S> h(carry.begin() + (n * chunks + j) * DW, carry.begin() + (n * chunks + j + 1) * DW);
        const Index end = std::min(T, (j + 1) * chunk);
        for (Index t = j * chunk; t < end; ++t) {
          const Index row = n * T + t;
          const S* at = a_bar + row * DW;
          const S* bt = b_bar + row * DW;
          const S* ct = c + row * W;
          const S* yt = y + row * D;
          S* ot = out + row * D;
          for (Index d = 0; d < D; ++d) {
            S* hd = h.data() + d * W;
            const S yd = yt[d];
            S acc = 0;
            for (Index k = 0; k < W; ++k) {
              hd[k] = at[d * W + k] * hd[k] + bt[d * W + k] * yd;
              acc += ct[k] * hd[k];
            }
            ot[d] = acc;
          }
          if (states) std::copy(h.begin(), h.end(), states + row * DW);
        }
      },
      threads);
}

namespace {

template <typename S>
ScanDims scan_dims(const ScanInputs<S>& in, const Tensor<S>& y) {
  check(in.a_bar.rank() == 4 && in.b_bar.shape() == in.a_bar.shape() && in.c.rank() == 3 && y.rank() == 3,
        "selective_scan: bad ranks");
  const ScanDims dims{in.a_bar.dim(0), in.a_bar.dim(1), in.a_bar.dim(2), in.a_bar.dim(3)};
  check(in.c.shape() == Shape{dims.batch, dims.steps, dims.state} &&
            y.shape() == Shape{dims.batch, dims.steps, dims.channels},
        "selective_scan: a_bar " + to_string(in.a_bar.shape()) + ", c " + to_string(in.c.shape()) + ", y " +
            to_string(y.shape()) + " are inconsistent");
  return dims;
}

// Reverse-time adjoint of the recurrence using stored states.
template <typename S>
void scan_backward(const ScanDims& dims, const std::vector<S>& states, detail::Node<S>& o) {
  const Index T = dims.steps, D = dims.channels, W = dims.state, DW = D * W;
  const S* a = o.inputs[0]->data.data();
  const S* b = o.inputs[1]->data.data();
  const S* c = o.inputs[2]->data.data();
  const S* y = o.inputs[3]->data.data();
  S* ga = wants(o, 0) ? o.inputs[0]->ensure_grad().data() : nullptr;
  S* gb = wants(o, 1) ? o.inputs[1]->ensure_grad().data() : nullptr;
  S* gc = wants(o, 2) ? o.inputs[2]->ensure_grad().data() : nullptr;
  S* gy = wants(o, 3) ? o.inputs[3]->ensure_grad().data() : nullptr;
  std::vector<S> gh(static_cast<std::size_t>(DW));
  for (Index n = 0; n < dims.batch; ++n) {
    std::fill(gh.begin(), gh.end(), S(0));
    for (Index t = T - 1; t >= 0; --t) {
      const Index row = n * T + t;
      const S* go = o.grad.data() + row * D;
      const S* ct = c + row * W;
      const S* ht = states.data() + row * DW;
      const S* hp = t > 0 ? states.data() + (row - 1) * DW : nullptr;
      const S* at = a + row * DW;
      const S* bt = b + row * DW;
      const S* yt = y + row * D;
      for (Index d = 0; d < D; ++d) {
        S gyd = 0;
        for (Index k = 0; k < W; ++k) {
          const Index i = d * W + k;
          const S g = gh[static_cast<std::size_t>(i)] + ct[k] * go[d];
          if (ga && hp) ga[row * DW + i] += g * hp[i];
          if (gb) gb[row * DW + i] += g * yt[d];
          if (gc) gc[row * W + k] += go[d] * ht[i];
          gyd += g * bt[i];
          gh[static_cast<std::size_t>(i)] = g * at[i];
        }
        if (gy) gy[row * D + d] += gyd;
      }
    }
  }
}

template <typename S>
Tensor<S> scan_op(const ScanInputs<S>& in, const Tensor<S>& y, Index chunk) {
  const ScanDims dims = scan_dims(in, y);
  std::vector<S> out(static_cast<std::size_t>(y.numel()));
  std::vector<S> states(static_cast<std::size_t>(in.a_bar.numel()));
  if (chunk <= 0) {
    scan_kernel_sequential(dims, in.a_bar.data().data(), in.b_bar.data().data(), in.c.data().data(), y.data().data(),
                           out.data(), states.data());
  } else {
    scan_kernel_chunked(dims, in.a_bar.data().data(), in.b_bar.data().data(), in.c.data().data(), y.data().data(),
                        out.data(), states.data(), chunk, num_threads());
  }
  return record<S>(y.shape(), std::move(out), "selective_scan", {in.a_bar.node(), in.b_bar.node(), in.c.node(), y.node()},
                   [dims, states = std::move(states)](detail::Node<S>& o) { scan_backward(dims, states, o); });
}

}  // namespace

template <typename S>
Tensor<S> selective_scan_sequential(const ScanInputs<S>& in, const Tensor<S>& y) {
  return scan_op(in, y, 0);
}

template <typename S>
Tensor<S> selective_scan_parallel(const ScanInputs<S>& in, const Tensor<S>& y, Index chunk) {
  if (chunk < 1) throw DomainError("selective scan chunk must be >= 1, got " + std::to_string(chunk));
  return scan_op(in, y, chunk);
}

template <typename S>
VectorX<S> lti_kernel(const VectorX<S>& A, const VectorX<S>& B, const VectorX<S>& C, S delta, Index length) {
  if (length <= 0) throw DomainError("lti_kernel: length must be positive, got " + std::to_string(length));
  if (!(delta > 0)) throw DomainError("lti_kernel: step size must be positive");
  if (B.size() != A.size() || C.size() != A.size()) throw DimensionError("lti_kernel: A, B, C sizes differ");
  const ArrayX<S> x = delta * A.array();
  const ArrayX<S> a_bar = x.exp();
  ArrayX<S> term = x.unaryExpr([](S v) { return std::expm1(v); }) / A.array() * B.array();
  VectorX<S> kernel(length);
  for (Index m = 0; m < length; ++m) {
    kernel(m) = (C.array() * term).sum();
    term *= a_bar;
  }
  return kernel;
}

template <typename S>
VectorX<S> causal_convolve(const VectorX<S>& kernel, const VectorX<S>& y) {
  VectorX<S> out = VectorX<S>::Zero(y.size());
  for (Index t = 0; t < y.size(); ++t)
    for (Index j = 0; j <= t && j < kernel.size(); ++j) out(t) += kernel(j) * y(t - j);
  return out;
}

template <typename S>
IMamba<S>::IMamba(const IMambaOptions& options, Rng& rng) : opt_(options) {
  const Index dp = opt_.d_model, w = opt_.state, k = opt_.conv_kernel;
  if (dp < 1 || w < 1 || k < 1) throw ConfigError("IMamba: d_model, state and conv_kernel must be positive");
  in_y_w = fan_in_uniform<S>({dp, dp}, dp, rng);
  in_y_b = fan_in_uniform<S>({dp}, dp, rng);
  in_z_w = fan_in_uniform<S>({dp, dp}, dp, rng);
  in_z_b = fan_in_uniform<S>({dp}, dp, rng);
  conv_w = fan_in_uniform<S>({dp, k}, k, rng);
  conv_b = fan_in_uniform<S>({dp}, k, rng);
  sel_b_w = fan_in_uniform<S>({w, dp}, dp, rng);
  sel_b_b = fan_in_uniform<S>({w}, dp, rng);
  sel_c_w = fan_in_uniform<S>({w, dp}, dp, rng);
  sel_c_b = fan_in_uniform<S>({w}, dp, rng);
  sel_dt_w = fan_in_uniform<S>({1, dp}, dp, rng);
  // softplus(P) log-uniform in [1e-3, 1e-1]; P is its inverse softplus.
  dt_bias = Tensor<S>::zeros({dp}, true);
  std::uniform_real_distribution<double> log_dt(std::log(1e-3), std::log(1e-1));
  for (auto& v : dt_bias.mutable_data()) {
    const double dt = std::exp(log_dt(rng));
    v = static_cast<S>(dt + std::log(-std::expm1(-dt)));
  }
  a_log = Tensor<S>::zeros({dp, w}, true);
  auto al = a_log.mutable_data();
  for (Index d = 0; d < dp; ++d)
    for (Index j = 0; j < w; ++j) al[static_cast<std::size_t>(d * w + j)] = static_cast<S>(std::log(double(j + 1)));
  out_w = fan_in_uniform<S>({dp, dp}, dp, rng);
  norm_g = Tensor<S>::full({dp}, S(1), true);
}

template <typename S>
Tensor<S> IMamba<S>::state_matrix() const {
  return scale(exp(a_log), S(-1));
}

template <typename S>
Tensor<S> IMamba<S>::ssm(const Tensor<S>& y) const {
  const Tensor<S> none;
  const auto B = linear(y, sel_b_w, sel_b_b);
  const auto C = linear(y, sel_c_w, sel_c_b);
  // [N,T,1] + [Dp] broadcasts the scalar selection to every channel.
  const auto delta = softplus(add(linear(y, sel_dt_w, none), dt_bias));
  auto [a_bar, b_bar] = zoh_discretize(state_matrix(), B, delta);
  const ScanInputs<S> in{a_bar, b_bar, C};
  return opt_.scan_chunk > 0 ? selective_scan_parallel(in, y, opt_.scan_chunk) : selective_scan_sequential(in, y);
}

template <typename S>
Tensor<S> IMamba<S>::forward(const Tensor<S>& x) const {
  if (x.rank() != 3 || x.dim(2) != opt_.d_model) {
    throw ConfigError("IMamba: input " + to_string(x.shape()) + " does not carry d_model " +
                      std::to_string(opt_.d_model));
  }
  const S eps = static_cast<S>(opt_.norm_eps);
  const Tensor<S> h = opt_.prenorm ? rmsnorm(x, norm_g, eps) : x;
  const auto y = silu(depthwise_causal_conv1d(linear(h, in_y_w, in_y_b), conv_w, conv_b));
  const auto z = silu(linear(h, in_z_w, in_z_b));
  const auto mixed = linear(mul(ssm(y), z), out_w, Tensor<S>());
  return opt_.prenorm ? add(mixed, x) : add(rmsnorm(mixed, norm_g, eps), x);
}

template <typename S>
void IMamba<S>::collect(const std::string& prefix, ParameterList<S>& out) const {
  add_weight(out, prefix + "in_y.weight", in_y_w);
  add_param(out, prefix + "in_y.bias", in_y_b);
  add_weight(out, prefix + "in_z.weight", in_z_w);
  add_param(out, prefix + "in_z.bias", in_z_b);
  add_weight(out, prefix + "conv1d.weight", conv_w);
  add_param(out, prefix + "conv1d.bias", conv_b);
  add_weight(out, prefix + "f_b.weight", sel_b_w);
  add_param(out, prefix + "f_b.bias", sel_b_b);
  add_weight(out, prefix + "f_c.weight", sel_c_w);
  add_param(out, prefix + "f_c.bias", sel_c_b);
  add_weight(out, prefix + "s_dt.weight", sel_dt_w);
  add_param(out, prefix + "dt_bias", dt_bias);
  add_param(out, prefix + "a_log", a_log);
  add_weight(out, prefix + "out_proj.weight", out_w);
  add_param(out, prefix + "norm.weight", norm_g);
}

#define SIMBA_INSTANTIATE_SSM(S)                                                                                   \
  template std::pair<Tensor<S>, Tensor<S>> zoh_discretize(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&); \
  template Tensor<S> selective_scan_sequential(const ScanInputs<S>&, const Tensor<S>&);                          \
  template Tensor<S> selective_scan_parallel(const ScanInputs<S>&, const Tensor<S>&, Index);                     \
  template void scan_kernel_sequential(const ScanDims&, const S*, const S*, const S*, const S*, S*, S*);          \
  template void scan_kernel_chunked(const ScanDims&, const S*, const S*, const S*, const S*, S*, S*, Index, int); \
  template VectorX<S> lti_kernel(const VectorX<S>&, const VectorX<S>&, const VectorX<S>&, S, Index);             \
  template VectorX<S> causal_convolve(const VectorX<S>&, const VectorX<S>&);                                     \
  template class IMamba<S>;

SIMBA_INSTANTIATE_SSM(float)
SIMBA_INSTANTIATE_SSM(double)

}  // namespace simba::ssm
