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

#include "simba/module.hpp"
#include "simba/ops.hpp"
#include "simba/tensor.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace simba {

/// Joint coordinates of one sequence: row t*V + v holds (x, y, z) of joint v
/// in frame t.
using Frames = Eigen::Array<float, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct SkeletonSample {
  int label = 0;
  Frames frames;
};

struct SkeletonDataset {
  Index joints = 0;
  Index num_classes = 0;
  Index num_partitions = 0;
  std::vector<int> parents;     // parent[root] == root
  std::vector<int> partitions;  // group id per joint
  std::vector<SkeletonSample> samples;

  Index frames_of(std::size_t i) const { return samples[i].frames.rows() / joints; }
  int root() const;
  /// Throws ValidationError naming the first violated invariant.
  void validate() const;
};

// SKL1 container, little endian:
//   "SKL1" u16 version=1 u32 num_samples u16 V u16 coord_dims=3 u16 num_classes
//   u16 K; V x u16 parent; V x u16 partition;
//   per sample: u32 label, u32 T_raw, f32 x (T_raw*V*3).
void write_dataset(std::ostream& out, const SkeletonDataset& data);
SkeletonDataset read_dataset(std::istream& in);
void save_dataset(const std::string& path, const SkeletonDataset& data);
/// Fails closed: any format or validation problem throws, nothing partial is returned.
SkeletonDataset load_dataset(const std::string& path);

enum class Modality { joint, bone, joint_motion, bone_motion };
Modality parse_modality(const std::string& s);
std::string to_string(Modality m);

/// Frame indices of a T-frame window over `raw_frames` frames. The (looped,
/// if shorter than T) sequence is cut into T equal bins; train mode draws one
/// frame per bin uniformly, eval mode takes each bin's center.
std::vector<Index> window_indices(Index raw_frames, Index window, Mode mode, Rng& rng);
Frames sample_window(const Frames& frames, Index joints, Index window, Mode mode, Rng& rng);

/// Subtracts the root joint position of frame 0 from every coordinate.
Frames center_on_root(const Frames& frames, Index joints, int root);

Frames derive_modality(const Frames& frames, Index joints, Modality m, const std::vector<int>& parents);

/// Preprocessed model input for the listed samples: center, window, derive
/// the modality, then lay out as [N,3,T,V].
template <typename S>
Tensor<S> assemble_batch(const SkeletonDataset& data, const std::vector<std::size_t>& indices, Index window,
                         Modality modality, Mode mode, Rng& rng);

/// Packs already windowed [T,V,3] frames into [N,3,T,V].
template <typename S>
Tensor<S> frames_to_tensor(const std::vector<Frames>& frames, Index joints);

struct SynthOptions {
  int classes = 4;
  int samples_per_class = 40;
  Index joints = 8;
  Index frames = 32;
  double noise = 0.05;
  std::uint64_t seed = 0;
};

/// Chain skeleton whose joints follow class-specific sinusoids plus i.i.d.
/// Gaussian noise of standard deviation `noise`.
SkeletonDataset synth_generate(const SynthOptions& options);

}  // namespace simba
