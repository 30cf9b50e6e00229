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

#include "simba/config.hpp"

#include "simba/errors.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace simba {

using nlohmann::json;

void SimbaConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (in_channels < 1 || channels < 1 || mamba_channels < 1 || joints < 1 || state < 1 || depth < 1) {
    fail("all extents must be positive");
  }
  if (channels % 4 != 0) fail("channel dimension " + std::to_string(channels) + " is not divisible by 4");
  if (num_classes < 2) fail("need at least two classes");
  if (conv_kernel < 1) fail("conv_kernel must be positive");
  if (temporal_radius < 0) fail("temporal_radius must be >= 0");
  if (scan_chunk < 0) fail("scan_chunk must be >= 0");
  if (!(norm_eps > 0)) fail("norm_eps must be positive");
  if (partition_gate) {
    if (static_cast<Index>(partitions.size()) != joints) {
      fail("partition gate needs one group per joint, got " + std::to_string(partitions.size()) + " for " +
           std::to_string(joints) + " joints");
    }
    if (num_partitions < 1) fail("partition gate needs at least one partition");
    for (std::size_t v = 0; v < partitions.size(); ++v) {
      if (partitions[v] < 0 || partitions[v] >= num_partitions) {
        fail("joint " + std::to_string(v) + " has no partition");
      }
    }
  }
}

std::vector<int> kinect25_partitions() {
  // 0-based joint order of the 25-joint Kinect v2 skeleton.
  return {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4, 0, 1, 1, 2, 2};
}

SimbaConfig ntu60_model() {
  SimbaConfig c;
  c.partition_gate = true;
  c.num_partitions = 5;
  c.partitions = kinect25_partitions();
  return c;
}

SimbaConfig ntu120_model() {
  SimbaConfig c = ntu60_model();
  c.num_classes = 120;
  return c;
}

SimbaConfig nwucla_model() {
  SimbaConfig c;
  c.joints = 20;
  c.mamba_channels = 25;
  c.num_classes = 10;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (!(base_lr > 0)) fail("base_lr must be positive");
  if (!(lr_decay_rate > 0)) fail("lr_decay_rate must be positive");
  if (epochs < 1) fail("epochs must be positive");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (i > 0 && milestones[i] <= milestones[i - 1]) fail("milestones must be strictly increasing");
    if (milestones[i] >= epochs) fail("milestone " + std::to_string(milestones[i]) + " is not below epochs");
  }
  if (warmup_epochs < 0) fail("warmup_epochs must be >= 0");
  if (weight_decay < 0) fail("weight_decay must be >= 0");
  if (momentum < 0 || momentum >= 1) fail("momentum must be in [0,1)");
  if (batch_size_train < 1 || batch_size_eval < 1) fail("batch sizes must be positive");
  if (window_T < 1) fail("window_T must be positive");
  if (depth_l < 1 || channels_C < 1 || mamba_D < 1 || ssm_W < 1) fail("architecture extents must be positive");
  if (channels_C % 4 != 0) fail("channels_C must be divisible by 4");
  if (repeat_augmentation < 1) fail("repeat_augmentation must be >= 1");
  if (scan_chunk < 0) fail("scan_chunk must be >= 0");
}

SimbaConfig TrainConfig::model(Index joints, Index num_classes, const std::vector<int>& partitions) const {
  SimbaConfig m;
  m.channels = channels_C;
  m.mamba_channels = mamba_D;
  m.joints = joints;
  m.state = ssm_W;
  m.depth = depth_l;
  m.num_classes = num_classes;
  m.conv_kernel = conv_kernel;
  m.temporal_radius = temporal_radius;
  m.use_imamba = use_imamba;
  m.prenorm = prenorm;
  m.scan_chunk = scan_chunk;
  m.partition_gate = partitions_enabled;
  if (partitions_enabled) {
    m.partitions = partitions;
    m.num_partitions = partitions.empty() ? 0 : *std::max_element(partitions.begin(), partitions.end()) + 1;
  }
  m.validate();
  return m;
}

TrainConfig ntu60_recipe() { return TrainConfig{}; }

TrainConfig ntu120_recipe() { return TrainConfig{}; }

TrainConfig nwucla_recipe() {
  TrainConfig c;
  c.batch_size_train = 16;
  c.batch_size_eval = 64;
  c.weight_decay = 0.0004;
  c.window_T = 52;
  c.epochs = 400;
  c.milestones = {110};
  c.mamba_D = 25;
  c.partitions_enabled = false;
  c.repeat_augmentation = 2;
  return c;
}

std::string to_string(Precision p) { return p == Precision::float64 ? "float64" : "float32"; }

Precision parse_precision(const std::string& s) {
  if (s == "float32") return Precision::float32;
  if (s == "float64") return Precision::float64;
  throw ConfigError("precision must be float32 or float64, got '" + s + "'");
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError(std::string(what) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

void to_json(json& j, const TrainConfig& c) {
  j = json{{"base_lr", c.base_lr},
           {"lr_decay_rate", c.lr_decay_rate},
           {"milestones", c.milestones},
           {"warmup_epochs", c.warmup_epochs},
           {"weight_decay", c.weight_decay},
           {"momentum", c.momentum},
           {"nesterov", c.nesterov},
           {"epochs", c.epochs},
           {"batch_size_train", c.batch_size_train},
           {"batch_size_eval", c.batch_size_eval},
           {"window_T", c.window_T},
           {"depth_l", c.depth_l},
           {"channels_C", c.channels_C},
           {"mamba_D", c.mamba_D},
           {"ssm_W", c.ssm_W},
           {"partitions_enabled", c.partitions_enabled},
           {"seed", c.seed},
           {"precision", to_string(c.precision)},
           {"use_imamba", c.use_imamba},
           {"prenorm", c.prenorm},
           {"temporal_radius", c.temporal_radius},
           {"conv_kernel", c.conv_kernel},
           {"scan_chunk", c.scan_chunk},
           {"repeat_augmentation", c.repeat_augmentation},
           {"record_wall_time", c.record_wall_time}};
}

void from_json(const json& j, TrainConfig& c) {
  reject_unknown(j,
                 {"base_lr", "lr_decay_rate", "milestones", "warmup_epochs", "weight_decay", "momentum", "nesterov",
                  "epochs", "batch_size_train", "batch_size_eval", "window_T", "depth_l", "channels_C", "mamba_D",
                  "ssm_W", "partitions_enabled", "seed", "precision", "use_imamba", "prenorm", "temporal_radius",
                  "conv_kernel", "scan_chunk", "repeat_augmentation", "record_wall_time"},
                 "train config");
  read(j, "base_lr", c.base_lr);
  read(j, "lr_decay_rate", c.lr_decay_rate);
  read(j, "milestones", c.milestones);
  read(j, "warmup_epochs", c.warmup_epochs);
  read(j, "weight_decay", c.weight_decay);
  read(j, "momentum", c.momentum);
  read(j, "nesterov", c.nesterov);
  read(j, "epochs", c.epochs);
  read(j, "batch_size_train", c.batch_size_train);
  read(j, "batch_size_eval", c.batch_size_eval);
  read(j, "window_T", c.window_T);
  read(j, "depth_l", c.depth_l);
  read(j, "channels_C", c.channels_C);
  read(j, "mamba_D", c.mamba_D);
  read(j, "ssm_W", c.ssm_W);
  read(j, "partitions_enabled", c.partitions_enabled);
  read(j, "seed", c.seed);
  if (j.contains("precision")) {
    std::string p;
    read(j, "precision", p);
    c.precision = parse_precision(p);
  }
  read(j, "use_imamba", c.use_imamba);
  read(j, "prenorm", c.prenorm);
  read(j, "temporal_radius", c.temporal_radius);
  read(j, "conv_kernel", c.conv_kernel);
  read(j, "scan_chunk", c.scan_chunk);
  read(j, "repeat_augmentation", c.repeat_augmentation);
  read(j, "record_wall_time", c.record_wall_time);
}

void to_json(json& j, const SimbaConfig& c) {
  j = json{{"in_channels", c.in_channels},
           {"channels", c.channels},
           {"mamba_channels", c.mamba_channels},
           {"joints", c.joints},
           {"state", c.state},
           {"depth", c.depth},
           {"num_classes", c.num_classes},
           {"conv_kernel", c.conv_kernel},
           {"temporal_radius", c.temporal_radius},
           {"use_imamba", c.use_imamba},
           {"prenorm", c.prenorm},
           {"norm_eps", c.norm_eps},
           {"scan_chunk", c.scan_chunk},
           {"partition_gate", c.partition_gate},
           {"num_partitions", c.num_partitions},
           {"partitions", c.partitions}};
}

void from_json(const json& j, SimbaConfig& c) {
  reject_unknown(j,
                 {"in_channels", "channels", "mamba_channels", "joints", "state", "depth", "num_classes",
                  "conv_kernel", "temporal_radius", "use_imamba", "prenorm", "norm_eps", "scan_chunk",
                  "partition_gate", "num_partitions", "partitions"},
                 "model config");
  read(j, "in_channels", c.in_channels);
  read(j, "channels", c.channels);
  read(j, "mamba_channels", c.mamba_channels);
  read(j, "joints", c.joints);
  read(j, "state", c.state);
  read(j, "depth", c.depth);
  read(j, "num_classes", c.num_classes);
  read(j, "conv_kernel", c.conv_kernel);
  read(j, "temporal_radius", c.temporal_radius);
  read(j, "use_imamba", c.use_imamba);
  read(j, "prenorm", c.prenorm);
  read(j, "norm_eps", c.norm_eps);
  read(j, "scan_chunk", c.scan_chunk);
  read(j, "partition_gate", c.partition_gate);
  read(j, "num_partitions", c.num_partitions);
  read(j, "partitions", c.partitions);
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  TrainConfig c = j.get<TrainConfig>();
  c.validate();
  return c;
}

}  // namespace simba
