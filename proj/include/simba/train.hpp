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

#include "simba/config.hpp"
#include "simba/data.hpp"
#include "simba/model.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace simba {

/// Linear warmup from base/warmup to base, then step decay per passed milestone.
double lr_at(int epoch, const TrainConfig& cfg);

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 0.0;
  bool nesterov = true;
};

/// SGD with momentum. Weight decay touches only tensors flagged `decay`.
template <typename S>
class Sgd {
 public:
  Sgd(ParameterList<S> params, SgdOptions options);

  void zero_grad();
  /// Throws NumericError naming the first parameter with a non-finite grad;
  /// no parameter is modified in that case.
  void step(double lr);
  /// Velocity buffers, named "optimizer.velocity.<param>".
  ParameterList<S> state() const;
  const ParameterList<S>& params() const { return params_; }

 private:
  ParameterList<S> params_;
  std::vector<Tensor<S>> velocity_;
  SgdOptions opt_;
};
extern template class Sgd<float>;
extern template class Sgd<double>;

/// Softmax probabilities of one modality stream, one row per sample.
struct StreamScores {
  std::string modality;
  std::vector<int> labels;  // optional, empty when unknown
  Eigen::MatrixXd probs;

  /// Rows sum to 1 +- 1e-6 and entries are nonnegative.
  void validate() const;
};

struct FusedScores {
  Eigen::MatrixXd sums;
  std::vector<int> predictions;
};

/// Row argmax; ties resolve to the lowest index.
std::vector<int> argmax_rows(const Eigen::MatrixXd& m);
FusedScores fuse_scores(const std::vector<StreamScores>& streams);
double top1_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

nlohmann::json scores_to_json(const StreamScores& s);
StreamScores scores_from_json(const nlohmann::json& j);
void save_scores(const std::string& path, const StreamScores& s);
StreamScores load_scores(const std::string& path);

struct EvalResult {
  StreamScores scores;
  double accuracy = 0;
  double loss = 0;
};

template <typename S>
EvalResult evaluate(SimbaModel<S>& model, const SkeletonDataset& data, Index window, Modality modality,
                    Index batch_size);

struct EpochMetrics {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_acc = 0;
  double eval_acc = 0;
  double wall_s = 0;
};
nlohmann::json to_json(const EpochMetrics& m);

struct TrainOptions {
  Modality modality = Modality::joint;
  std::string out_dir;                                // empty: no files written
  const SkeletonDataset* eval_data = nullptr;         // defaults to the training set
  std::function<void(const EpochMetrics&)> on_epoch;  // optional progress hook
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  int best_epoch = -1;
  double best_eval_acc = -1;
};

/// Checkpoint metadata needed to rebuild the model for evaluation.
nlohmann::json checkpoint_meta(const TrainConfig& cfg, const SimbaConfig& model, Modality modality, int epoch,
                               double eval_acc);

/// Runs the full schedule. Writes `metrics.jsonl` and `best.ckpt` into
/// out_dir when it is set. Throws NumericError on a non-finite loss.
template <typename S>
TrainResult train(SimbaModel<S>& model, const SkeletonDataset& data, const TrainConfig& cfg,
                  const TrainOptions& options = {});

}  // namespace simba
