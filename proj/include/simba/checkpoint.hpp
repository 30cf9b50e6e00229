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

// Named-tensor container:
//   "SBCK" u16 version=1 u16 scalar_bytes (4|8) u32 meta_len, meta JSON bytes,
//   u32 count; per entry: u16 name_len, name, u16 rank, rank x u32 dims,
//   numel scalars little endian.

#include "simba/module.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace simba {

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;  // widened; float payloads round-trip exactly
};

struct Checkpoint {
  int scalar_bytes = 4;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
};

template <typename S>
Checkpoint make_checkpoint(const ParameterList<S>& tensors, nlohmann::json meta);

/// Copies entries into `tensors`. Every tensor must have an entry with the
/// same shape, and every entry must match a tensor unless its name starts
/// with `ignore_prefix`.
template <typename S>
void restore_checkpoint(const Checkpoint& ckpt, const ParameterList<S>& tensors, const std::string& ignore_prefix = "");

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace simba
