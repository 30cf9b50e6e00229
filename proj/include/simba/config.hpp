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

#include "simba/tensor.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace simba {

/// Architecture of a Simba network.
struct SimbaConfig {
  Index in_channels = 3;
  Index channels = 216;       // C, constant across modules
  Index mamba_channels = 20;  // D, width of the encoder bottleneck
  Index joints = 25;          // V
  Index state = 16;           // W, SSM state size per channel
  Index depth = 10;           // l
  Index num_classes = 60;
  Index conv_kernel = 4;
  int temporal_radius = 1;
  bool use_imamba = true;  // false gives U-ShiftGCN
  bool prenorm = false;
  double norm_eps = 1e-5;
  Index scan_chunk = 0;
  bool partition_gate = false;
  Index num_partitions = 0;
  std::vector<int> partitions;  // group id per joint, used when partition_gate

  Index d_model() const { return joints * mamba_channels; }
  /// Throws ConfigError on an inconsistent architecture.
  void validate() const;
};

/// Five anatomical groups of the 25-joint Kinect v2 layout: torso, left arm,
/// right arm, left leg, right leg.
std::vector<int> kinect25_partitions();

SimbaConfig ntu60_model();
SimbaConfig ntu120_model();
SimbaConfig nwucla_model();

enum class Precision { float32, float64 };

/// Optimization recipe plus the architecture fields that vary per experiment.
/// Defaults are the NTU RGB+D 60 recipe.
struct TrainConfig {
  double base_lr = 0.025;
  double lr_decay_rate = 0.1;
  std::vector<int> milestones{75, 85};
  int warmup_epochs = 5;
  double weight_decay = 0.0001;
  double momentum = 0.9;
  bool nesterov = true;
  int epochs = 90;
  int batch_size_train = 64;
  int batch_size_eval = 512;
  int window_T = 64;
  int depth_l = 10;
  int channels_C = 216;
  int mamba_D = 20;
  int ssm_W = 16;
  bool partitions_enabled = true;
  std::uint64_t seed = 1;
  Precision precision = Precision::float32;
  // Not part of the published recipe.
  bool use_imamba = true;
  bool prenorm = false;
  int temporal_radius = 1;
  int conv_kernel = 4;
  int scan_chunk = 0;
  int repeat_augmentation = 1;  // windows drawn per training sample per epoch
  bool record_wall_time = false;  // wall_s is 0 unless set, keeping logs reproducible

  void validate() const;
  /// Model for a dataset with the given joints, classes and joint partitions.
  SimbaConfig model(Index joints, Index num_classes, const std::vector<int>& partitions) const;
};

TrainConfig ntu60_recipe();
TrainConfig ntu120_recipe();
TrainConfig nwucla_recipe();

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const SimbaConfig& c);
void from_json(const nlohmann::json& j, SimbaConfig& c);

TrainConfig load_train_config(const std::string& path);

std::string to_string(Precision p);
Precision parse_precision(const std::string& s);

}  // namespace simba
