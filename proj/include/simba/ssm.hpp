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

// Selective state-space machinery: zero-order-hold discretization, the
// diagonal selective scan (sequential and chunked), the time-invariant
// convolution kernel, and the intermediate Mamba block built from them.

#include "simba/module.hpp"
#include "simba/ops.hpp"
#include "simba/tensor.hpp"

#include <utility>

namespace simba::ssm {

/// Discretized per-step quantities fed to the scan.
/// a_bar, b_bar: [N,T,Dp,W]; c: [N,T,W].
template <typename S>
struct ScanInputs {
  Tensor<S> a_bar;
  Tensor<S> b_bar;
  Tensor<S> c;
};

/// Zero-order hold for diagonal A[Dp,W] (strictly negative), input-dependent
/// B[N,T,W] and step delta[N,T,Dp] (strictly positive):
///   a_bar = exp(delta*A),  b_bar = (exp(delta*A) - 1) / A * B.
/// Non-positive delta or non-negative A throws DomainError.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> zoh_discretize(const Tensor<S>& A, const Tensor<S>& B, const Tensor<S>& delta);

/// h_t = a_bar_t * h_{t-1} + b_bar_t * y_t,  out_t[d] = sum_w c_t[w] h_t[d,w],
/// with h_0 = 0. y and the result are [N,T,Dp].
template <typename S>
Tensor<S> selective_scan_sequential(const ScanInputs<S>& in, const Tensor<S>& y);

/// Same recurrence evaluated in time chunks: chunk-local reductions run
/// concurrently, a sequential pass carries state across chunk boundaries,
/// then each chunk is replayed from its carried-in state. chunk >= T reduces
/// to the sequential loop exactly.
template <typename S>
Tensor<S> selective_scan_parallel(const ScanInputs<S>& in, const Tensor<S>& y, Index chunk);

struct ScanDims {
  Index batch = 1;
  Index steps = 1;
  Index channels = 1;
  Index state = 1;
};

// Raw forward kernels over contiguous buffers (layouts as in ScanInputs).
// `states`, when non-null, receives every h_t ([N,T,Dp,W]).
template <typename S>
void scan_kernel_sequential(const ScanDims& dims, const S* a_bar, const S* b_bar, const S* c, const S* y, S* out,
                            S* states);
template <typename S>
void scan_kernel_chunked(const ScanDims& dims, const S* a_bar, const S* b_bar, const S* c, const S* y, S* out,
                         S* states, Index chunk, int threads);

/// Time-invariant kernel (C b_bar, C a_bar b_bar, ..., C a_bar^{M-1} b_bar)
/// for one channel with diagonal A, constant B, C over W states.
template <typename S>
VectorX<S> lti_kernel(const VectorX<S>& A, const VectorX<S>& B, const VectorX<S>& C, S delta, Index length);

/// Causal convolution out_t = sum_{j<=t} kernel_j y_{t-j}.
template <typename S>
VectorX<S> causal_convolve(const VectorX<S>& kernel, const VectorX<S>& y);

struct IMambaOptions {
  Index d_model = 500;
  Index state = 16;
  Index conv_kernel = 4;
  bool prenorm = false;  // normalize the block input instead of its output
  double norm_eps = 1e-5;
  Index scan_chunk = 0;  // 0: sequential scan
};

/// Intermediate Mamba block over [N,T,Dp]:
///   y = SiLU(conv1d(Linear(x))), z = SiLU(Linear(x))
///   B = Linear^W(y), C = Linear^W(y), delta = softplus(P + broadcast(Linear^1(y)))
///   out = RMSNorm(Linear(SSM(A,B,C,y) * z)) + x
/// Channel width equals d_model throughout.
template <typename S>
class IMamba {
 public:
  IMamba(const IMambaOptions& options, Rng& rng);

  Tensor<S> forward(const Tensor<S>& x) const;
  /// Just the selective SSM applied to an already-mixed sequence y[N,T,Dp].
  Tensor<S> ssm(const Tensor<S>& y) const;
  /// A = -exp(A_log), [Dp,W].
  Tensor<S> state_matrix() const;

  void collect(const std::string& prefix, ParameterList<S>& out) const;
  const IMambaOptions& options() const { return opt_; }

  Tensor<S> in_y_w, in_y_b;   // [Dp,Dp], [Dp]
  Tensor<S> in_z_w, in_z_b;   // [Dp,Dp], [Dp]
  Tensor<S> conv_w, conv_b;   // [Dp,K], [Dp]
  Tensor<S> sel_b_w, sel_b_b;  // f_B: [W,Dp], [W]
  Tensor<S> sel_c_w, sel_c_b;  // f_C: [W,Dp], [W]
  Tensor<S> sel_dt_w;          // s_delta: [1,Dp]
  Tensor<S> dt_bias;           // P: [Dp]
  Tensor<S> a_log;             // [Dp,W]
  Tensor<S> out_w;             // [Dp,Dp], no bias
  Tensor<S> norm_g;            // [Dp]

 private:
  IMambaOptions opt_;
};

}  // namespace simba::ssm
