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

#include "simba/data.hpp"

#include "simba/binio.hpp"
#include "simba/errors.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace simba {

int SkeletonDataset::root() const {
  for (std::size_t v = 0; v < parents.size(); ++v)
    if (parents[v] == static_cast<int>(v)) return static_cast<int>(v);
  return -1;
}

void SkeletonDataset::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("dataset: " + m); };
  if (joints < 1) fail("no joints");
  if (num_classes < 1) fail("no classes");
  if (static_cast<Index>(parents.size()) != joints) fail("parent array length differs from joint count");
  if (static_cast<Index>(partitions.size()) != joints) fail("partition array length differs from joint count");
  int roots = 0;
  for (Index v = 0; v < joints; ++v) {
    const int p = parents[static_cast<std::size_t>(v)];
    if (p < 0 || p >= joints) fail("joint " + std::to_string(v) + " has parent out of range");
    if (p == v) ++roots;
    const int g = partitions[static_cast<std::size_t>(v)];
    if (g < 0 || g >= num_partitions) fail("joint " + std::to_string(v) + " has partition out of range");
  }
  if (roots != 1) fail("topology has " + std::to_string(roots) + " roots, expected exactly one");
  for (Index v = 0; v < joints; ++v) {
    Index cur = v;
    for (Index step = 0; step <= joints && parents[static_cast<std::size_t>(cur)] != cur; ++step) {
      cur = parents[static_cast<std::size_t>(cur)];
      if (step == joints) fail("topology has a cycle through joint " + std::to_string(v));
    }
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.label < 0 || s.label >= num_classes) {
      fail("sample " + std::to_string(i) + " has label " + std::to_string(s.label) + " outside [0," +
           std::to_string(num_classes) + ")");
    }
    if (s.frames.rows() < joints || s.frames.rows() % joints != 0) fail("sample " + std::to_string(i) + " has no frames");
    if (!s.frames.allFinite()) fail("sample " + std::to_string(i) + " has non-finite coordinates");
  }
}

void write_dataset(std::ostream& out, const SkeletonDataset& data) {
  using binio::write_le;
  data.validate();
  out.write("SKL1", 4);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.samples.size()));
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(data.joints));
  write_le<std::uint16_t>(out, 3);
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(data.num_classes));
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(data.num_partitions));
  for (int p : data.parents) write_le<std::uint16_t>(out, static_cast<std::uint16_t>(p));
  for (int p : data.partitions) write_le<std::uint16_t>(out, static_cast<std::uint16_t>(p));
  for (const auto& s : data.samples) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.label));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.frames.rows() / data.joints));
    for (Index i = 0; i < s.frames.size(); ++i) write_le<float>(out, s.frames.data()[i]);
  }
}

SkeletonDataset read_dataset(std::istream& in) {
  using binio::read_le;
  const std::string magic = binio::read_bytes(in, 4, "magic");
  if (magic != "SKL1") throw FormatError("not an SKL1 container (bad magic)");
  const auto version = read_le<std::uint16_t>(in, "version");
  if (version != 1) throw FormatError("unsupported SKL1 version " + std::to_string(version));
  SkeletonDataset data;
  const auto count = read_le<std::uint32_t>(in, "sample count");
  data.joints = read_le<std::uint16_t>(in, "joint count");
  const auto dims = read_le<std::uint16_t>(in, "coordinate dims");
  if (dims != 3) throw FormatError("SKL1 coord_dims must be 3, got " + std::to_string(dims));
  data.num_classes = read_le<std::uint16_t>(in, "class count");
  data.num_partitions = read_le<std::uint16_t>(in, "partition count");
  data.parents.resize(static_cast<std::size_t>(data.joints));
  data.partitions.resize(static_cast<std::size_t>(data.joints));
  for (auto& p : data.parents) p = read_le<std::uint16_t>(in, "parent array");
  for (auto& p : data.partitions) p = read_le<std::uint16_t>(in, "partition array");
  data.samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    SkeletonSample s;
    s.label = static_cast<int>(read_le<std::uint32_t>(in, "label"));
    const auto frames = read_le<std::uint32_t>(in, "frame count");
    if (frames < 1) throw ValidationError("dataset: sample " + std::to_string(i) + " has no frames");
    s.frames.resize(static_cast<Index>(frames) * data.joints, 3);
    for (Index k = 0; k < s.frames.size(); ++k) s.frames.data()[k] = read_le<float>(in, "coordinates");
    data.samples.push_back(std::move(s));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after SKL1 payload");
  data.validate();
  return data;
}

void save_dataset(const std::string& path, const SkeletonDataset& data) {
  std::ostringstream buf;
  write_dataset(buf, data);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << buf.str();
  if (!out) throw Error("failed writing '" + path + "'");
}

SkeletonDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset '" + path + "'");
  return read_dataset(in);
}

Modality parse_modality(const std::string& s) {
  if (s == "joint") return Modality::joint;
  if (s == "bone") return Modality::bone;
  if (s == "joint_motion") return Modality::joint_motion;
  if (s == "bone_motion") return Modality::bone_motion;
  throw ValidationError("unknown modality '" + s + "' (joint, bone, joint_motion, bone_motion)");
}

std::string to_string(Modality m) {
  switch (m) {
    case Modality::joint: return "joint";
    case Modality::bone: return "bone";
    case Modality::joint_motion: return "joint_motion";
    case Modality::bone_motion: return "bone_motion";
  }
  return "joint";
}

std::vector<Index> window_indices(Index raw_frames, Index window, Mode mode, Rng& rng) {
  if (raw_frames < 1) throw ValidationError("sample_window: empty sequence");
  if (window < 1) throw ValidationError("sample_window: window must be >= 1");
  const Index length = raw_frames * ((window + raw_frames - 1) / raw_frames);
  std::vector<Index> out(static_cast<std::size_t>(window));
  for (Index i = 0; i < window; ++i) {
    const Index lo = i * length / window;
    const Index hi = (i + 1) * length / window;
    Index pick;
    if (mode == Mode::train) {
      std::uniform_int_distribution<Index> dist(lo, hi - 1);
      pick = dist(rng);
    } else {
      pick = lo + (hi - lo - 1) / 2;
    }
    out[static_cast<std::size_t>(i)] = pick % raw_frames;
  }
  return out;
}

Frames sample_window(const Frames& frames, Index joints, Index window, Mode mode, Rng& rng) {
  const auto idx = window_indices(frames.rows() / joints, window, mode, rng);
  Frames out(window * joints, 3);
  for (Index t = 0; t < window; ++t) {
    out.middleRows(t * joints, joints) = frames.middleRows(idx[static_cast<std::size_t>(t)] * joints, joints);
  }
  return out;
}

Frames center_on_root(const Frames& frames, Index joints, int root) {
  (void)joints;
  const Eigen::Array<float, 1, 3> origin = frames.row(root);
  return frames.rowwise() - origin;
}

Frames derive_modality(const Frames& x, Index joints, Modality m, const std::vector<int>& parents) {
  auto bones = [&](const Frames& f) {
    Frames out(f.rows(), 3);
    for (Index r = 0; r < f.rows(); ++r) {
      const Index t = r / joints, v = r % joints;
      out.row(r) = f.row(r) - f.row(t * joints + parents[static_cast<std::size_t>(v)]);
    }
    return out;
  };
  auto motion = [&](const Frames& f) {
    const Index frames = f.rows() / joints;
    Frames out = Frames::Zero(f.rows(), 3);
    if (frames > 1) {
      out.topRows((frames - 1) * joints) = f.bottomRows((frames - 1) * joints) - f.topRows((frames - 1) * joints);
    }
    return out;
  };
  switch (m) {
    case Modality::joint: return x;
    case Modality::bone: return bones(x);
    case Modality::joint_motion: return motion(x);
    case Modality::bone_motion: return motion(bones(x));
  }
  return x;
}

template <typename S>
Tensor<S> frames_to_tensor(const std::vector<Frames>& frames, Index joints) {
  if (frames.empty()) throw ValidationError("empty batch");
  const auto n = static_cast<Index>(frames.size());
  const Index t = frames.front().rows() / joints;
  std::vector<S> data(static_cast<std::size_t>(n * 3 * t * joints));
  for (Index i = 0; i < n; ++i) {
    const Frames& f = frames[static_cast<std::size_t>(i)];
    if (f.rows() != t * joints) throw DimensionError("batch frames have different lengths");
    for (Index c = 0; c < 3; ++c)
      for (Index r = 0; r < t * joints; ++r) data[static_cast<std::size_t>(((i * 3 + c) * t * joints) + r)] = static_cast<S>(f(r, c));
  }
  return Tensor<S>::from({n, 3, t, joints}, std::move(data));
}

template <typename S>
Tensor<S> assemble_batch(const SkeletonDataset& data, const std::vector<std::size_t>& indices, Index window,
                         Modality modality, Mode mode, Rng& rng) {
  std::vector<Frames> frames;
  frames.reserve(indices.size());
  const int root = data.root();
  for (std::size_t i : indices) {
    const Frames centered = center_on_root(data.samples.at(i).frames, data.joints, root);
    frames.push_back(derive_modality(sample_window(centered, data.joints, window, mode, rng), data.joints, modality,
                                     data.parents));
  }
  return frames_to_tensor<S>(frames, data.joints);
}

SkeletonDataset synth_generate(const SynthOptions& o) {
  if (o.classes < 2) throw ValidationError("synth: need at least two classes");
  if (o.samples_per_class < 1 || o.joints < 1 || o.frames < 1) throw ValidationError("synth: extents must be positive");
  if (!(o.noise >= 0)) throw ValidationError("synth: noise must be >= 0");
  SkeletonDataset data;
  data.joints = o.joints;
  data.num_classes = o.classes;
  data.num_partitions = std::min<Index>(5, o.joints);
  for (Index v = 0; v < o.joints; ++v) {
    data.parents.push_back(static_cast<int>(v == 0 ? 0 : v - 1));
    data.partitions.push_back(static_cast<int>(v * data.num_partitions / o.joints));
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Rng rng(o.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < o.classes; ++k) {
    const double freq = 1.0 + k;  // cycles per sequence
    for (int s = 0; s < o.samples_per_class; ++s) {
      SkeletonSample sample;
      sample.label = k;
      sample.frames.resize(o.frames * o.joints, 3);
      for (Index t = 0; t < o.frames; ++t)
        for (Index v = 0; v < o.joints; ++v)
          for (Index c = 0; c < 3; ++c) {
            const double phase = two_pi * (0.37 * k + 0.13 * static_cast<double>(v) + 0.29 * static_cast<double>(c));
            const double base = c == 1 ? 0.25 * static_cast<double>(v) : 0.0;
            const double amp = 0.3 * (1.0 + 0.1 * static_cast<double>(v));
            double value = base + amp * std::sin(two_pi * freq * static_cast<double>(t) / static_cast<double>(o.frames) + phase);
            if (o.noise > 0) value += o.noise * gauss(rng);
            sample.frames(t * o.joints + v, c) = static_cast<float>(value);
          }
      data.samples.push_back(std::move(sample));
    }
  }
  data.validate();
  return data;
}

template Tensor<float> assemble_batch(const SkeletonDataset&, const std::vector<std::size_t>&, Index, Modality, Mode, Rng&);
template Tensor<double> assemble_batch(const SkeletonDataset&, const std::vector<std::size_t>&, Index, Modality, Mode, Rng&);
template Tensor<float> frames_to_tensor(const std::vector<Frames>&, Index);
template Tensor<double> frames_to_tensor(const std::vector<Frames>&, Index);

}  // namespace simba
