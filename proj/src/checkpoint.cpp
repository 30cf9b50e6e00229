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

#include "simba/checkpoint.hpp"

#include "simba/binio.hpp"
#include "simba/errors.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace simba {

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

template <typename S>
Checkpoint make_checkpoint(const ParameterList<S>& tensors, nlohmann::json meta) {
  Checkpoint ckpt;
  ckpt.scalar_bytes = sizeof(S);
  ckpt.meta = std::move(meta);
  for (const auto& t : tensors) {
    const auto data = t.tensor.data();
    ckpt.entries.push_back({t.name, t.tensor.shape(), std::vector<double>(data.begin(), data.end())});
  }
  return ckpt;
}

template <typename S>
void restore_checkpoint(const Checkpoint& ckpt, const ParameterList<S>& tensors, const std::string& ignore_prefix) {
  std::set<std::string> expected;
  for (const auto& t : tensors) {
    expected.insert(t.name);
    const CheckpointEntry* e = ckpt.find(t.name);
    if (!e) throw FormatError("checkpoint is missing '" + t.name + "'");
    if (e->shape != t.tensor.shape()) {
      throw FormatError("checkpoint entry '" + t.name + "' has shape " + to_string(e->shape) + ", model expects " +
                        to_string(t.tensor.shape()));
    }
  }
  for (const auto& e : ckpt.entries) {
    if (expected.count(e.name)) continue;
    if (!ignore_prefix.empty() && e.name.rfind(ignore_prefix, 0) == 0) continue;
    throw FormatError("checkpoint entry '" + e.name + "' does not match any model tensor");
  }
  for (const auto& t : tensors) {
    const CheckpointEntry* e = ckpt.find(t.name);
    Tensor<S> dst = t.tensor;
    auto out = dst.mutable_data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<S>(e->values[i]);
  }
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  using binio::write_le;
  if (ckpt.scalar_bytes != 4 && ckpt.scalar_bytes != 8) throw ValidationError("checkpoint scalar width must be 4 or 8");
  out.write("SBCK", 4);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(ckpt.scalar_bytes));
  const std::string meta = ckpt.meta.dump();
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    write_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.shape.size()));
    for (Index d : e.shape) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : e.values) {
      if (ckpt.scalar_bytes == 4) write_le<float>(out, static_cast<float>(v));
      else write_le<double>(out, v);
    }
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  using binio::read_le;
  if (binio::read_bytes(in, 4, "magic") != "SBCK") throw FormatError("not a checkpoint (bad magic)");
  const auto version = read_le<std::uint16_t>(in, "version");
  if (version != 1) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.scalar_bytes = read_le<std::uint16_t>(in, "scalar width");
  if (ckpt.scalar_bytes != 4 && ckpt.scalar_bytes != 8) {
    throw FormatError("checkpoint scalar width " + std::to_string(ckpt.scalar_bytes) + " is not 4 or 8");
  }
  const auto meta_len = read_le<std::uint32_t>(in, "metadata length");
  const std::string meta = binio::read_bytes(in, meta_len, "metadata");
  try {
    ckpt.meta = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  const auto count = read_le<std::uint32_t>(in, "entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = binio::read_bytes(in, read_le<std::uint16_t>(in, "name length"), "entry name");
    const auto rank = read_le<std::uint16_t>(in, "rank");
    for (std::uint16_t r = 0; r < rank; ++r) e.shape.push_back(read_le<std::uint32_t>(in, "dims"));
    e.values.resize(static_cast<std::size_t>(numel(e.shape)));
    for (auto& v : e.values) v = ckpt.scalar_bytes == 4 ? read_le<float>(in, "payload") : read_le<double>(in, "payload");
    ckpt.entries.push_back(std::move(e));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint payload");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ostringstream buf;
  write_checkpoint(buf, ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out << buf.str();
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

template Checkpoint make_checkpoint(const ParameterList<float>&, nlohmann::json);
template Checkpoint make_checkpoint(const ParameterList<double>&, nlohmann::json);
template void restore_checkpoint(const Checkpoint&, const ParameterList<float>&, const std::string&);
template void restore_checkpoint(const Checkpoint&, const ParameterList<double>&, const std::string&);

}  // namespace simba
