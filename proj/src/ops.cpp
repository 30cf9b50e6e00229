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

#include "simba/ops.hpp"

#include "simba/autograd.hpp"
#include "simba/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <utility>

namespace simba {

namespace {

using detail::NodeP;
using detail::record;
using detail::wants;

template <typename S>
Eigen::Map<ArrayX<S>> grad_of(detail::Node<S>& n) {
  auto& g = n.ensure_grad();
  return {g.data(), static_cast<Eigen::Index>(g.size())};
}

template <typename S>
Eigen::Map<const ArrayX<S>> arr(const std::vector<S>& v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

std::vector<Index> contiguous_strides(const Shape& shape) {
  std::vector<Index> st(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = st[static_cast<std::size_t>(i) + 1] * shape[static_cast<std::size_t>(i) + 1];
  }
  return st;
}

// Strides of `in` viewed with the rank of `out`, zero along broadcast axes.
std::vector<Index> broadcast_strides(const Shape& in, const Shape& out) {
  const auto cs = contiguous_strides(in);
  std::vector<Index> st(out.size(), 0);
  const std::size_t off = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    st[off + i] = in[i] == 1 ? 0 : cs[i];
  }
  return st;
}

// Visits every output position of `shape` with the matching offsets into
// operands described by `strides`. The innermost axis is looped directly.
template <std::size_t K, typename Fn>
void for_each_strided(const Shape& shape, const std::array<std::vector<Index>, K>& strides, Fn&& fn) {
  const Index total = numel(shape);
  if (total == 0) return;
  const int r = static_cast<int>(shape.size());
  if (r == 0) {
    std::array<Index, K> offs{};
    fn(Index(0), offs);
    return;
  }
  std::vector<Index> idx(static_cast<std::size_t>(r), 0);
  std::array<Index, K> base{};
  const Index inner = shape.back();
  std::array<Index, K> inner_stride{};
  for (std::size_t k = 0; k < K; ++k) inner_stride[k] = strides[k].back();
  Index flat = 0;
  while (flat < total) {
    std::array<Index, K> offs = base;
    for (Index i = 0; i < inner; ++i) {
      fn(flat++, offs);
      for (std::size_t k = 0; k < K; ++k) offs[k] += inner_stride[k];
    }
    // advance the outer counter
    for (int ax = r - 2; ax >= 0; --ax) {
      const auto a = static_cast<std::size_t>(ax);
      ++idx[a];
      for (std::size_t k = 0; k < K; ++k) base[k] += strides[k][a];
      if (idx[a] < shape[a]) break;
      for (std::size_t k = 0; k < K; ++k) base[k] -= strides[k][a] * shape[a];
      idx[a] = 0;
    }
  }
}

void require_shape(bool ok, const char* op, const Shape& a, const Shape& b) {
  if (!ok) throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

enum class BinOp { add, sub, mul };

template <typename S>
Tensor<S> binary(const Tensor<S>& a, const Tensor<S>& b, BinOp kind) {
  static constexpr const char* names[] = {"add", "sub", "mul"};
  const char* name = names[static_cast<int>(kind)];
  if (a.shape() == b.shape()) {
    const auto x = a.array();
    const auto y = b.array();
    ArrayX<S> r = kind == BinOp::add ? ArrayX<S>(x + y) : kind == BinOp::sub ? ArrayX<S>(x - y) : ArrayX<S>(x * y);
    std::vector<S> out(r.data(), r.data() + r.size());
    return record<S>(a.shape(), std::move(out), name, {a.node(), b.node()}, [kind](detail::Node<S>& o) {
      const auto g = arr(o.grad);
      if (wants(o, 0)) {
        if (kind == BinOp::mul) grad_of(*o.inputs[0]) += g * arr(o.inputs[1]->data);
        else grad_of(*o.inputs[0]) += g;
      }
      if (wants(o, 1)) {
        if (kind == BinOp::mul) grad_of(*o.inputs[1]) += g * arr(o.inputs[0]->data);
        else if (kind == BinOp::sub) grad_of(*o.inputs[1]) -= g;
        else grad_of(*o.inputs[1]) += g;
      }
    });
  }
  Shape out_shape;
  try {
    out_shape = broadcast_shape(a.shape(), b.shape());
  } catch (const DimensionError&) {
    require_shape(false, name, a.shape(), b.shape());
  }
  const std::array<std::vector<Index>, 2> st{broadcast_strides(a.shape(), out_shape),
                                             broadcast_strides(b.shape(), out_shape)};
  std::vector<S> out(static_cast<std::size_t>(numel(out_shape)));
  const S* pa = a.data().data();
  const S* pb = b.data().data();
  for_each_strided(out_shape, st, [&](Index o, const std::array<Index, 2>& off) {
    const S x = pa[off[0]], y = pb[off[1]];
    out[static_cast<std::size_t>(o)] = kind == BinOp::add ? x + y : kind == BinOp::sub ? x - y : x * y;
  });
  return record<S>(out_shape, std::move(out), name, {a.node(), b.node()}, [kind, st](detail::Node<S>& o) {
    const S* g = o.grad.data();
    const S* xa = o.inputs[0]->data.data();
    const S* xb = o.inputs[1]->data.data();
    S* ga = wants(o, 0) ? o.inputs[0]->ensure_grad().data() : nullptr;
    S* gb = wants(o, 1) ? o.inputs[1]->ensure_grad().data() : nullptr;
    for_each_strided(o.shape, st, [&](Index i, const std::array<Index, 2>& off) {
      const S gi = g[i];
      if (ga) ga[off[0]] += kind == BinOp::mul ? gi * xb[off[1]] : gi;
      if (gb) gb[off[1]] += kind == BinOp::mul ? gi * xa[off[0]] : kind == BinOp::sub ? -gi : gi;
    });
  });
}

template <typename S, typename F, typename D>
Tensor<S> unary(const Tensor<S>& x, const char* name, F&& f, D&& dfdx) {
  std::vector<S> out(x.data().size());
  std::transform(x.data().begin(), x.data().end(), out.begin(), f);
  return record<S>(x.shape(), std::move(out), name, {x.node()}, [dfdx](detail::Node<S>& o) {
    if (!wants(o, 0)) return;
    auto& in = *o.inputs[0];
    auto& gi = in.ensure_grad();
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += o.grad[i] * dfdx(in.data[i], o.data[i]);
  });
}

template <typename S>
S sigmoid(S x) {
  return x >= 0 ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x));
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const Index da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const Index db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out[i] = da == 1 ? db : da;
  }
  return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary(a, b, BinOp::add);
}
template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary(a, b, BinOp::sub);
}
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary(a, b, BinOp::mul);
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
  return unary(
      a, "scale", [factor](S x) { return x * factor; }, [factor](S, S) { return factor; });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S value) {
  return unary(
      a, "add_scalar", [value](S x) { return x + value; }, [](S, S) { return S(1); });
}

template <typename S>
Tensor<S> broadcast_to(const Tensor<S>& a, const Shape& shape) {
  if (broadcast_shape(a.shape(), shape) != shape) {
    throw DimensionError("cannot broadcast " + to_string(a.shape()) + " to " + to_string(shape));
  }
  const std::array<std::vector<Index>, 1> st{broadcast_strides(a.shape(), shape)};
  std::vector<S> out(static_cast<std::size_t>(numel(shape)));
  const S* pa = a.data().data();
  for_each_strided(shape, st, [&](Index o, const std::array<Index, 1>& off) { out[static_cast<std::size_t>(o)] = pa[off[0]]; });
  return record<S>(shape, std::move(out), "broadcast_to", {a.node()}, [st](detail::Node<S>& o) {
    if (!wants(o, 0)) return;
    S* g = o.inputs[0]->ensure_grad().data();
    for_each_strided(o.shape, st, [&](Index i, const std::array<Index, 1>& off) { g[off[0]] += o.grad[static_cast<std::size_t>(i)]; });
  });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  // Subgradient at 0 is 0.
  return unary(
      x, "relu", [](S v) { return v > 0 ? v : S(0); }, [](S v, S) { return v > 0 ? S(1) : S(0); });
}

template <typename S>
Tensor<S> silu(const Tensor<S>& x) {
  return unary(
      x, "silu", [](S v) { return v * sigmoid(v); },
      [](S v, S) {
        const S s = sigmoid(v);
        return s * (S(1) + v * (S(1) - s));
      });
}

template <typename S>
Tensor<S> softplus(const Tensor<S>& x) {
  return unary(
      x, "softplus", [](S v) { return v > S(20) ? v : std::log1p(std::exp(v)); },
      [](S v, S) { return v > S(20) ? S(1) : sigmoid(v); });
}

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
  return unary(
      x, "exp", [](S v) { return std::exp(v); }, [](S, S out) { return out; });
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  require_shape(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0), "matmul", a.shape(), b.shape());
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<S> out(static_cast<std::size_t>(m * n));
  Eigen::Map<const MatrixXR<S>> A(a.data().data(), m, k);
  Eigen::Map<const MatrixXR<S>> B(b.data().data(), k, n);
  Eigen::Map<MatrixXR<S>>(out.data(), m, n).noalias() = A * B;
  return record<S>({m, n}, std::move(out), "matmul", {a.node(), b.node()}, [m, k, n](detail::Node<S>& o) {
    Eigen::Map<const MatrixXR<S>> G(o.grad.data(), m, n);
    if (wants(o, 0)) {
      Eigen::Map<const MatrixXR<S>> B(o.inputs[1]->data.data(), k, n);
      Eigen::Map<MatrixXR<S>>(o.inputs[0]->ensure_grad().data(), m, k).noalias() += G * B.transpose();
    }
    if (wants(o, 1)) {
      Eigen::Map<const MatrixXR<S>> A(o.inputs[0]->data.data(), m, k);
      Eigen::Map<MatrixXR<S>>(o.inputs[1]->ensure_grad().data(), k, n).noalias() += A.transpose() * G;
    }
  });
}

template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  require_shape(x.rank() >= 1 && w.rank() == 2 && x.dim(-1) == w.dim(1), "linear", x.shape(), w.shape());
  const Index in = w.dim(1), outf = w.dim(0);
  const bool has_bias = b.defined();
  if (has_bias) require_shape(b.rank() == 1 && b.dim(0) == outf, "linear bias", w.shape(), b.shape());
  const Index rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = outf;
  std::vector<S> out(static_cast<std::size_t>(rows * outf));
  Eigen::Map<const MatrixXR<S>> X(x.data().data(), rows, in);
  Eigen::Map<const MatrixXR<S>> W(w.data().data(), outf, in);
  Eigen::Map<MatrixXR<S>> Y(out.data(), rows, outf);
  Y.noalias() = X * W.transpose();
  if (has_bias) Y.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(b.data().data(), outf);
  std::vector<NodeP<S>> inputs{x.node(), w.node()};
  if (has_bias) inputs.push_back(b.node());
  return record<S>(std::move(out_shape), std::move(out), "linear", std::move(inputs), [rows, in, outf](detail::Node<S>& o) {
    Eigen::Map<const MatrixXR<S>> G(o.grad.data(), rows, outf);
    if (wants(o, 0)) {
      Eigen::Map<const MatrixXR<S>> W(o.inputs[1]->data.data(), outf, in);
      Eigen::Map<MatrixXR<S>>(o.inputs[0]->ensure_grad().data(), rows, in).noalias() += G * W;
    }
    if (wants(o, 1)) {
      Eigen::Map<const MatrixXR<S>> X(o.inputs[0]->data.data(), rows, in);
      Eigen::Map<MatrixXR<S>>(o.inputs[1]->ensure_grad().data(), outf, in).noalias() += G.transpose() * X;
    }
    if (wants(o, 2)) {
      Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(o.inputs[2]->ensure_grad().data(), outf) += G.colwise().sum();
    }
  });
}

template <typename S>
Tensor<S> pointwise_conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  require_shape(x.rank() == 4 && w.rank() == 2 && w.dim(1) == x.dim(1), "pointwise_conv2d", x.shape(), w.shape());
  const bool has_bias = b.defined();
  if (has_bias) require_shape(b.rank() == 1 && b.dim(0) == w.dim(0), "pointwise_conv2d bias", w.shape(), b.shape());
  const Index n = x.dim(0), cin = x.dim(1), cout = w.dim(0), p = x.dim(2) * x.dim(3);
  std::vector<S> out(static_cast<std::size_t>(n * cout * p));
  Eigen::Map<const MatrixXR<S>> W(w.data().data(), cout, cin);
  for (Index i = 0; i < n; ++i) {
    Eigen::Map<const MatrixXR<S>> X(x.data().data() + i * cin * p, cin, p);
    Eigen::Map<MatrixXR<S>> Y(out.data() + i * cout * p, cout, p);
    Y.noalias() = W * X;
    if (has_bias) Y.colwise() += Eigen::Map<const VectorX<S>>(b.data().data(), cout);
  }
  std::vector<NodeP<S>> inputs{x.node(), w.node()};
  if (has_bias) inputs.push_back(b.node());
  return record<S>({n, cout, x.dim(2), x.dim(3)}, std::move(out), "pointwise_conv2d", std::move(inputs),
                   [n, cin, cout, p](detail::Node<S>& o) {
                     const S* xd = o.inputs[0]->data.data();
                     Eigen::Map<const MatrixXR<S>> W(o.inputs[1]->data.data(), cout, cin);
                     S* gx = wants(o, 0) ? o.inputs[0]->ensure_grad().data() : nullptr;
                     S* gw = wants(o, 1) ? o.inputs[1]->ensure_grad().data() : nullptr;
                     S* gb = wants(o, 2) ? o.inputs[2]->ensure_grad().data() : nullptr;
                     for (Index i = 0; i < n; ++i) {
                       Eigen::Map<const MatrixXR<S>> G(o.grad.data() + i * cout * p, cout, p);
                       if (gx) Eigen::Map<MatrixXR<S>>(gx + i * cin * p, cin, p).noalias() += W.transpose() * G;
                       if (gw) {
                         Eigen::Map<const MatrixXR<S>> X(xd + i * cin * p, cin, p);
                         Eigen::Map<MatrixXR<S>>(gw, cout, cin).noalias() += G * X.transpose();
                       }
                       if (gb) Eigen::Map<VectorX<S>>(gb, cout) += G.rowwise().sum();
                     }
                   });
}

template <typename S>
Tensor<S> depthwise_causal_conv1d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  require_shape(x.rank() == 3 && w.rank() == 2 && w.dim(0) == x.dim(2), "depthwise_causal_conv1d", x.shape(), w.shape());
  require_shape(b.rank() == 1 && b.dim(0) == w.dim(0), "depthwise_causal_conv1d bias", w.shape(), b.shape());
  const Index n = x.dim(0), t_len = x.dim(1), d = x.dim(2), k = w.dim(1);
  std::vector<S> out(static_cast<std::size_t>(x.numel()));
  const S* xd = x.data().data();
  const S* wd = w.data().data();
  const S* bd = b.data().data();
  for (Index i = 0; i < n; ++i)
    for (Index t = 0; t < t_len; ++t)
      for (Index c = 0; c < d; ++c) {
        S acc = bd[c];
        for (Index j = 0; j < k; ++j) {
          const Index src = t - k + 1 + j;
          if (src >= 0) acc += wd[c * k + j] * xd[(i * t_len + src) * d + c];
        }
        out[static_cast<std::size_t>((i * t_len + t) * d + c)] = acc;
      }
  return record<S>(x.shape(), std::move(out), "depthwise_causal_conv1d", {x.node(), w.node(), b.node()},
                   [n, t_len, d, k](detail::Node<S>& o) {
                     const S* xd = o.inputs[0]->data.data();
                     const S* wd = o.inputs[1]->data.data();
                     S* gx = wants(o, 0) ? o.inputs[0]->ensure_grad().data() : nullptr;
                     S* gw = wants(o, 1) ? o.inputs[1]->ensure_grad().data() : nullptr;
                     S* gb = wants(o, 2) ? o.inputs[2]->ensure_grad().data() : nullptr;
                     for (Index i = 0; i < n; ++i)
                       for (Index t = 0; t < t_len; ++t)
                         for (Index c = 0; c < d; ++c) {
                           const S g = o.grad[static_cast<std::size_t>((i * t_len + t) * d + c)];
                           if (gb) gb[c] += g;
                           for (Index j = 0; j < k; ++j) {
                             const Index src = t - k + 1 + j;
                             if (src < 0) continue;
                             const Index xi = (i * t_len + src) * d + c;
                             if (gx) gx[xi] += g * wd[c * k + j];
                             if (gw) gw[c * k + j] += g * xd[xi];
                           }
                         }
                   });
}

template <typename S>
BatchNorm2d<S>::BatchNorm2d(Index channels)
    : gamma(Tensor<S>::full({channels}, S(1), true)),
      beta(Tensor<S>::zeros({channels}, true)),
      running_mean(Tensor<S>::zeros({channels})),
      running_var(Tensor<S>::full({channels}, S(1))) {}

template <typename S>
Tensor<S> batchnorm2d(const Tensor<S>& x, BatchNorm2d<S>& bn, Mode mode) {
  require_shape(x.rank() == 4 && x.dim(1) == bn.channels(), "batchnorm2d", x.shape(), bn.gamma.shape());
  const Index n = x.dim(0), c = x.dim(1), p = x.dim(2) * x.dim(3);
  const Index count = n * p;
  if (mode == Mode::train && count < 2) {
    throw DomainError("batchnorm2d: degenerate batch, " + std::to_string(count) +
                      " element per channel in train mode for input " + to_string(x.shape()));
  }
  const S* xd = x.data().data();
  std::vector<S> invstd(static_cast<std::size_t>(c));
  std::vector<S> mean(static_cast<std::size_t>(c));
  if (mode == Mode::train) {
    auto rm = bn.running_mean.mutable_data();
    auto rv = bn.running_var.mutable_data();
    for (Index ch = 0; ch < c; ++ch) {
      S s = 0;
      for (Index i = 0; i < n; ++i) s += arr(x.node()->data).segment((i * c + ch) * p, p).sum();
      const S mu = s / static_cast<S>(count);
      S ss = 0;
      for (Index i = 0; i < n; ++i) ss += (arr(x.node()->data).segment((i * c + ch) * p, p) - mu).square().sum();
      const S var = ss / static_cast<S>(count);
      mean[static_cast<std::size_t>(ch)] = mu;
      invstd[static_cast<std::size_t>(ch)] = S(1) / std::sqrt(var + bn.eps);
      rm[static_cast<std::size_t>(ch)] = (S(1) - bn.momentum) * rm[static_cast<std::size_t>(ch)] + bn.momentum * mu;
      rv[static_cast<std::size_t>(ch)] = (S(1) - bn.momentum) * rv[static_cast<std::size_t>(ch)] +
                                         bn.momentum * var * static_cast<S>(count) / static_cast<S>(count - 1);
    }
  } else {
    for (Index ch = 0; ch < c; ++ch) {
      mean[static_cast<std::size_t>(ch)] = bn.running_mean.data()[static_cast<std::size_t>(ch)];
      invstd[static_cast<std::size_t>(ch)] = S(1) / std::sqrt(bn.running_var.data()[static_cast<std::size_t>(ch)] + bn.eps);
    }
  }
  std::vector<S> xhat(static_cast<std::size_t>(x.numel()));
  std::vector<S> out(xhat.size());
  const S* gd = bn.gamma.data().data();
  const S* bd = bn.beta.data().data();
  for (Index i = 0; i < n; ++i)
    for (Index ch = 0; ch < c; ++ch) {
      const Index base = (i * c + ch) * p;
      const S mu = mean[static_cast<std::size_t>(ch)], is = invstd[static_cast<std::size_t>(ch)];
      for (Index j = 0; j < p; ++j) {
        const S h = (xd[base + j] - mu) * is;
        xhat[static_cast<std::size_t>(base + j)] = h;
        out[static_cast<std::size_t>(base + j)] = gd[ch] * h + bd[ch];
      }
    }
  const bool batch_stats = mode == Mode::train;
  return record<S>(x.shape(), std::move(out), "batchnorm2d", {x.node(), bn.gamma.node(), bn.beta.node()},
                   [n, c, p, count, batch_stats, xhat = std::move(xhat), invstd = std::move(invstd)](detail::Node<S>& o) {
                     const S* g = o.grad.data();
                     const S* gamma = o.inputs[1]->data.data();
                     S* gx = wants(o, 0) ? o.inputs[0]->ensure_grad().data() : nullptr;
                     S* ggamma = wants(o, 1) ? o.inputs[1]->ensure_grad().data() : nullptr;
                     S* gbeta = wants(o, 2) ? o.inputs[2]->ensure_grad().data() : nullptr;
                     for (Index ch = 0; ch < c; ++ch) {
                       S sum_g = 0, sum_gh = 0;
                       for (Index i = 0; i < n; ++i) {
                         const Index base = (i * c + ch) * p;
                         for (Index j = 0; j < p; ++j) {
                           sum_g += g[base + j];
                           sum_gh += g[base + j] * xhat[static_cast<std::size_t>(base + j)];
                         }
                       }
                       if (ggamma) ggamma[ch] += sum_gh;
                       if (gbeta) gbeta[ch] += sum_g;
                       if (!gx) continue;
                       const S k = gamma[ch] * invstd[static_cast<std::size_t>(ch)];
                       const S inv_m = S(1) / static_cast<S>(count);
                       for (Index i = 0; i < n; ++i) {
                         const Index base = (i * c + ch) * p;
                         for (Index j = 0; j < p; ++j) {
                           const S gj = g[base + j];
                           if (batch_stats) {
                             gx[base + j] += k * (gj - inv_m * sum_g - xhat[static_cast<std::size_t>(base + j)] * inv_m * sum_gh);
                           } else {
                             gx[base + j] += k * gj;
                           }
                         }
                       }
                     }
                   });
}

template <typename S>
Tensor<S> rmsnorm(const Tensor<S>& x, const Tensor<S>& g, S eps) {
  require_shape(x.rank() >= 1 && g.rank() == 1 && x.dim(-1) == g.dim(0), "rmsnorm", x.shape(), g.shape());
  const Index d = g.dim(0), rows = x.numel() / d;
  std::vector<S> out(static_cast<std::size_t>(x.numel()));
  std::vector<S> inv(static_cast<std::size_t>(rows));
  Eigen::Map<const MatrixXR<S>> X(x.data().data(), rows, d);
  Eigen::Map<const Eigen::Array<S, 1, Eigen::Dynamic>> G(g.data().data(), d);
  Eigen::Map<MatrixXR<S>> Y(out.data(), rows, d);
  for (Index r = 0; r < rows; ++r) {
    const S ms = X.row(r).squaredNorm() / static_cast<S>(d);
    const S ir = S(1) / std::sqrt(ms + eps);
    inv[static_cast<std::size_t>(r)] = ir;
    Y.row(r) = (X.row(r).array() * ir * G).matrix();
  }
  return record<S>(x.shape(), std::move(out), "rmsnorm", {x.node(), g.node()}, [rows, d, inv = std::move(inv)](detail::Node<S>& o) {
    Eigen::Map<const MatrixXR<S>> X(o.inputs[0]->data.data(), rows, d);
    Eigen::Map<const Eigen::Array<S, 1, Eigen::Dynamic>> G(o.inputs[1]->data.data(), d);
    Eigen::Map<const MatrixXR<S>> Gout(o.grad.data(), rows, d);
    const bool gx = wants(o, 0), gg = wants(o, 1);
    for (Index r = 0; r < rows; ++r) {
      const S ir = inv[static_cast<std::size_t>(r)];
      if (gx) {
        const Eigen::Array<S, 1, Eigen::Dynamic> u = Gout.row(r).array() * G;
        const S dot = (u * X.row(r).array()).sum();
        Eigen::Map<MatrixXR<S>>(o.inputs[0]->ensure_grad().data(), rows, d).row(r) +=
            (ir * u - (ir * ir * ir * dot / static_cast<S>(d)) * X.row(r).array()).matrix();
      }
      if (gg) {
        Eigen::Map<Eigen::Array<S, 1, Eigen::Dynamic>>(o.inputs[1]->ensure_grad().data(), d) +=
            Gout.row(r).array() * X.row(r).array() * ir;
      }
    }
  });
}

template <typename S>
Tensor<S> softmax(const Tensor<S>& x) {
  if (x.rank() < 1) throw RankError("softmax needs rank >= 1");
  const Index k = x.dim(-1), rows = x.numel() / k;
  std::vector<S> out(static_cast<std::size_t>(x.numel()));
  Eigen::Map<const MatrixXR<S>> X(x.data().data(), rows, k);
  Eigen::Map<MatrixXR<S>> Y(out.data(), rows, k);
  for (Index r = 0; r < rows; ++r) {
    const S m = X.row(r).maxCoeff();
    Y.row(r) = (X.row(r).array() - m).exp().matrix();
    Y.row(r) /= Y.row(r).sum();
  }
  return record<S>(x.shape(), std::move(out), "softmax", {x.node()}, [rows, k](detail::Node<S>& o) {
    if (!wants(o, 0)) return;
    Eigen::Map<const MatrixXR<S>> Y(o.data.data(), rows, k);
    Eigen::Map<const MatrixXR<S>> G(o.grad.data(), rows, k);
    Eigen::Map<MatrixXR<S>> GX(o.inputs[0]->ensure_grad().data(), rows, k);
    for (Index r = 0; r < rows; ++r) {
      const S dot = Y.row(r).dot(G.row(r));
      GX.row(r).array() += Y.row(r).array() * (G.row(r).array() - dot);
    }
  });
}

template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const std::vector<int>& labels) {
  require_shape(logits.rank() == 2, "cross_entropy", logits.shape(), {static_cast<Index>(labels.size())});
  const Index n = logits.dim(0), k = logits.dim(1);
  if (static_cast<Index>(labels.size()) != n) {
    throw ValidationError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  }
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) {
      throw ValidationError("cross_entropy: label " + std::to_string(y) + " at row " + std::to_string(i) +
                            " outside [0," + std::to_string(k) + ")");
    }
  }
  Eigen::Map<const MatrixXR<S>> X(logits.data().data(), n, k);
  MatrixXR<S> prob(n, k);
  S total = 0;
  for (Index i = 0; i < n; ++i) {
    const S m = X.row(i).maxCoeff();
    prob.row(i) = (X.row(i).array() - m).exp().matrix();
    const S z = prob.row(i).sum();
    prob.row(i) /= z;
    total += std::log(z) + m - X(i, labels[static_cast<std::size_t>(i)]);
  }
  return record<S>({}, {total / static_cast<S>(n)}, "cross_entropy", {logits.node()},
                   [n, k, labels, prob = std::move(prob)](detail::Node<S>& o) {
                     if (!wants(o, 0)) return;
                     const S scale_g = o.grad[0] / static_cast<S>(n);
                     Eigen::Map<MatrixXR<S>> GX(o.inputs[0]->ensure_grad().data(), n, k);
                     GX += scale_g * prob;
                     for (Index i = 0; i < n; ++i) GX(i, labels[static_cast<std::size_t>(i)]) -= scale_g;
                   });
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, const Shape& shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<S> out(x.data().begin(), x.data().end());
  return record<S>(shape, std::move(out), "reshape", {x.node()}, [](detail::Node<S>& o) {
    if (wants(o, 0)) grad_of(*o.inputs[0]) += arr(o.grad);
  });
}

template <typename S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& perm) {
  const int r = x.rank();
  std::vector<int> check(perm);
  std::sort(check.begin(), check.end());
  std::vector<int> iota(static_cast<std::size_t>(r));
  std::iota(iota.begin(), iota.end(), 0);
  if (check != iota) throw DimensionError("permute: invalid permutation for shape " + to_string(x.shape()));
  const auto in_strides = contiguous_strides(x.shape());
  Shape out_shape(static_cast<std::size_t>(r));
  std::vector<Index> st(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    out_shape[static_cast<std::size_t>(i)] = x.shape()[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    st[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  const std::array<std::vector<Index>, 1> strides{st};
  std::vector<S> out(static_cast<std::size_t>(x.numel()));
  const S* xd = x.data().data();
  for_each_strided(out_shape, strides, [&](Index o, const std::array<Index, 1>& off) { out[static_cast<std::size_t>(o)] = xd[off[0]]; });
  return record<S>(out_shape, std::move(out), "permute", {x.node()}, [strides](detail::Node<S>& o) {
    if (!wants(o, 0)) return;
    S* g = o.inputs[0]->ensure_grad().data();
    for_each_strided(o.shape, strides, [&](Index i, const std::array<Index, 1>& off) { g[off[0]] += o.grad[static_cast<std::size_t>(i)]; });
  });
}

template <typename S>
Tensor<S> gather(const Tensor<S>& x, int axis, const Shape& out_shape, const std::vector<std::int32_t>& index) {
  const int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r || static_cast<int>(out_shape.size()) != r) {
    throw RankError("gather: axis/rank mismatch for " + to_string(x.shape()) + " -> " + to_string(out_shape));
  }
  for (int i = 0; i < r; ++i) {
    if (i != axis && out_shape[static_cast<std::size_t>(i)] != x.shape()[static_cast<std::size_t>(i)]) {
      throw DimensionError("gather: output " + to_string(out_shape) + " differs from input " + to_string(x.shape()) +
                           " off the gather axis");
    }
  }
  if (static_cast<Index>(index.size()) != numel(out_shape)) {
    throw DimensionError("gather: index size does not match output " + to_string(out_shape));
  }
  const Index src_extent = x.shape()[static_cast<std::size_t>(axis)];
  const Index dst_extent = out_shape[static_cast<std::size_t>(axis)];
  Index inner = 1;
  for (int i = axis + 1; i < r; ++i) inner *= out_shape[static_cast<std::size_t>(i)];
  // Flat source offset per output element, -1 for zero fill.
  std::vector<Index> src(index.size());
  const Index outer_extent = static_cast<Index>(index.size()) / (dst_extent * inner);
  std::size_t o = 0;
  for (Index outer = 0; outer < outer_extent; ++outer)
    for (Index d = 0; d < dst_extent; ++d)
      for (Index in_i = 0; in_i < inner; ++in_i, ++o) {
        const std::int32_t k = index[o];
        if (k >= src_extent) throw DimensionError("gather: index " + std::to_string(k) + " out of range");
        src[o] = k < 0 ? -1 : (outer * src_extent + k) * inner + in_i;
      }
  std::vector<S> out(index.size(), S(0));
  const S* xd = x.data().data();
  for (std::size_t o = 0; o < src.size(); ++o)
    if (src[o] >= 0) out[o] = xd[src[o]];
  return record<S>(out_shape, std::move(out), "gather", {x.node()}, [src = std::move(src)](detail::Node<S>& o) {
    if (!wants(o, 0)) return;
    S* g = o.inputs[0]->ensure_grad().data();
    for (std::size_t i = 0; i < src.size(); ++i)
      if (src[i] >= 0) g[src[i]] += o.grad[i];
  });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  return record<S>({}, {x.array().sum()}, "sum", {x.node()}, [](detail::Node<S>& o) {
    if (wants(o, 0)) grad_of(*o.inputs[0]) += o.grad[0];
  });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  return scale(sum(x), S(1) / static_cast<S>(x.numel()));
}

template <typename S>
Tensor<S> sum_axes(const Tensor<S>& x, std::vector<int> axes, bool keepdim) {
  const int r = x.rank();
  std::vector<bool> reduced(static_cast<std::size_t>(r), false);
  for (int& a : axes) {
    if (a < 0) a += r;
    if (a < 0 || a >= r) throw RankError("sum_axes: axis out of range for " + to_string(x.shape()));
    reduced[static_cast<std::size_t>(a)] = true;
  }
  Shape kept(x.shape());
  for (int i = 0; i < r; ++i)
    if (reduced[static_cast<std::size_t>(i)]) kept[static_cast<std::size_t>(i)] = 1;
  const auto st_out = broadcast_strides(kept, x.shape());
  const std::array<std::vector<Index>, 1> strides{st_out};
  std::vector<S> out(static_cast<std::size_t>(numel(kept)), S(0));
  const S* xd = x.data().data();
  for_each_strided(x.shape(), strides, [&](Index i, const std::array<Index, 1>& off) { out[static_cast<std::size_t>(off[0])] += xd[i]; });
  Shape out_shape;
  if (keepdim) {
    out_shape = kept;
  } else {
    for (int i = 0; i < r; ++i)
      if (!reduced[static_cast<std::size_t>(i)]) out_shape.push_back(x.shape()[static_cast<std::size_t>(i)]);
  }
  Shape in_shape = x.shape();
  return record<S>(std::move(out_shape), std::move(out), "sum_axes", {x.node()}, [strides, in_shape](detail::Node<S>& o) {
    if (!wants(o, 0)) return;
    S* g = o.inputs[0]->ensure_grad().data();
    for_each_strided(in_shape, strides, [&](Index i, const std::array<Index, 1>& off) { g[i] += o.grad[static_cast<std::size_t>(off[0])]; });
  });
}

template <typename S>
Tensor<S> mean_axes(const Tensor<S>& x, std::vector<int> axes, bool keepdim) {
  Index count = 1;
  for (int a : axes) count *= x.dim(a);
  return scale(sum_axes(x, std::move(axes), keepdim), S(1) / static_cast<S>(count));
}

#define SIMBA_INSTANTIATE_OPS(S)                                                                          \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                             \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                             \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                             \
  template Tensor<S> scale(const Tensor<S>&, S);                                                          \
  template Tensor<S> add_scalar(const Tensor<S>&, S);                                                     \
  template Tensor<S> broadcast_to(const Tensor<S>&, const Shape&);                                        \
  template Tensor<S> relu(const Tensor<S>&);                                                              \
  template Tensor<S> silu(const Tensor<S>&);                                                              \
  template Tensor<S> softplus(const Tensor<S>&);                                                          \
  template Tensor<S> exp(const Tensor<S>&);                                                               \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                                          \
  template Tensor<S> linear(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);                        \
  template Tensor<S> pointwise_conv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);              \
  template Tensor<S> depthwise_causal_conv1d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);       \
  template struct BatchNorm2d<S>;                                                                         \
  template Tensor<S> batchnorm2d(const Tensor<S>&, BatchNorm2d<S>&, Mode);                                \
  template Tensor<S> rmsnorm(const Tensor<S>&, const Tensor<S>&, S);                                      \
  template Tensor<S> softmax(const Tensor<S>&);                                                           \
  template Tensor<S> cross_entropy(const Tensor<S>&, const std::vector<int>&);                            \
  template Tensor<S> reshape(const Tensor<S>&, const Shape&);                                             \
  template Tensor<S> permute(const Tensor<S>&, const std::vector<int>&);                                  \
  template Tensor<S> gather(const Tensor<S>&, int, const Shape&, const std::vector<std::int32_t>&);        \
  template Tensor<S> sum(const Tensor<S>&);                                                               \
  template Tensor<S> mean(const Tensor<S>&);                                                              \
  template Tensor<S> sum_axes(const Tensor<S>&, std::vector<int>, bool);                                  \
  template Tensor<S> mean_axes(const Tensor<S>&, std::vector<int>, bool);

SIMBA_INSTANTIATE_OPS(float)
SIMBA_INSTANTIATE_OPS(double)

}  // namespace simba
