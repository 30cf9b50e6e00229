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

// Central finite-difference checks of reverse-mode gradients, double only.

#include "simba/module.hpp"
#include "simba/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace simba {

struct GradcheckResult {
  std::string suite;
  std::string name;
  double max_rel_error = 0;
  Index entries = 0;
  double threshold = 0;
  bool passed() const { return entries > 0 && max_rel_error <= threshold; }
};

struct GradcheckOptions {
  double step = 1e-5;
  double threshold = 1e-6;
  /// Entries whose numeric derivative is below this fraction of the largest
  /// one are compared against that floor instead of their own magnitude.
  double floor_fraction = 1e-3;
};

/// |a - n| / max(|a|, |n|, floor); floor = floor_fraction * max|numeric|.
double relative_error(double analytic, double numeric, double floor);

/// Compares backward() of `loss` against central differences in every entry
/// of every leaf (which must require grad). `loss` must rebuild its graph on
/// each call.
GradcheckResult check_gradients(const std::string& name, const std::function<TensorD()>& loss,
                                const std::vector<TensorD>& leaves, const GradcheckOptions& options = {});

/// sum(out * probe) for a fixed random probe of out's shape.
TensorD probe_loss(const TensorD& out, const TensorD& probe);

/// Random dense tensor, uniform in [lo, hi].
TensorD random_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1, bool requires_grad = true);

std::vector<std::string> gradcheck_suite_names();
/// Runs one named suite, or every suite for "all". Throws ValidationError on
/// an unknown name.
std::vector<GradcheckResult> run_gradcheck_suite(const std::string& name, std::uint64_t seed = 7);

}  // namespace simba
