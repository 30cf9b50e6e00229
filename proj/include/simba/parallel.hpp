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

#include <algorithm>
#include <cstdint>
#include <thread>
#include <vector>

namespace simba {

/// Worker cap: SIMBA_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
int num_threads();

/// Keeps large tensor buffers on the heap instead of fresh mmaps, which
/// otherwise page-fault on every training step. No-op outside glibc.
void tune_allocator();

/// Runs fn(i) for i in [begin, end) on up to `threads` workers. The range is
/// split into contiguous blocks, so each index is handled by exactly one
/// worker and results are independent of the thread count.
template <typename Fn>
void parallel_for(std::int64_t begin, std::int64_t end, Fn&& fn, int threads = num_threads()) {
  const std::int64_t n = end - begin;
  if (n <= 0) return;
  const std::int64_t workers = std::min<std::int64_t>(std::max(threads, 1), n);
  if (workers == 1) {
    for (std::int64_t i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  auto run_block = [&](std::int64_t w) {
    const std::int64_t lo = begin + n * w / workers;
    const std::int64_t hi = begin + n * (w + 1) / workers;
    for (std::int64_t i = lo; i < hi; ++i) fn(i);
  };
  for (std::int64_t w = 1; w < workers; ++w) pool.emplace_back(run_block, w);
  run_block(0);
  for (auto& t : pool) t.join();
}

}  // namespace simba
