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

#include "simba/train.hpp"

#include "simba/checkpoint.hpp"
#include "simba/errors.hpp"
#include "simba/ops.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace simba {

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < cfg.warmup_epochs) return cfg.base_lr * (epoch + 1) / cfg.warmup_epochs;
  const auto passed = std::count_if(cfg.milestones.begin(), cfg.milestones.end(), [&](int m) { return epoch >= m; });
  return cfg.base_lr * std::pow(cfg.lr_decay_rate, static_cast<double>(passed));
}

template <typename S>
Sgd<S>::Sgd(ParameterList<S> params, SgdOptions options) : opt_(options) {
  for (auto& p : params) {
    if (!p.trainable) continue;
    velocity_.push_back(Tensor<S>::zeros(p.tensor.shape()));
    params_.push_back(std::move(p));
  }
}

template <typename S>
void Sgd<S>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename S>
void Sgd<S>::step(double lr) {
  for (const auto& p : params_) {
    for (S g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  const S m = static_cast<S>(opt_.momentum);
  const S rate = static_cast<S>(lr);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<S> w = params_[i].tensor;
    if (!w.has_grad()) continue;
    const S wd = params_[i].decay ? static_cast<S>(opt_.weight_decay) : S(0);
    const auto g = w.grad();
    auto wv = w.mutable_data();
    auto vv = velocity_[i].mutable_data();
    for (std::size_t k = 0; k < wv.size(); ++k) {
      const S d = g[k] + wd * wv[k];
      vv[k] = m * vv[k] + d;
      wv[k] -= rate * (opt_.nesterov ? d + m * vv[k] : vv[k]);
    }
  }
}

template <typename S>
ParameterList<S> Sgd<S>::state() const {
  ParameterList<S> out;
  for (std::size_t i = 0; i < params_.size(); ++i) add_buffer(out, "optimizer.velocity." + params_[i].name, velocity_[i]);
  return out;
}

void StreamScores::validate() const {
  if (!labels.empty() && static_cast<Index>(labels.size()) != probs.rows()) {
    throw ValidationError("scores: label count differs from sample count");
  }
  for (Index i = 0; i < probs.rows(); ++i) {
    if ((probs.row(i).array() < 0).any() || !probs.row(i).allFinite()) {
      throw ValidationError("scores: sample " + std::to_string(i) + " has a negative or non-finite probability");
    }
    if (std::abs(probs.row(i).sum() - 1.0) > 1e-6) {
      throw ValidationError("scores: sample " + std::to_string(i) + " does not sum to 1");
    }
  }
}

std::vector<int> argmax_rows(const Eigen::MatrixXd& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < m.cols(); ++k)
      if (m(i, k) > m(i, best)) best = k;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

FusedScores fuse_scores(const std::vector<StreamScores>& streams) {
  if (streams.empty()) throw ValidationError("fuse: no streams given");
  FusedScores out;
  out.sums = Eigen::MatrixXd::Zero(streams.front().probs.rows(), streams.front().probs.cols());
  for (std::size_t s = 0; s < streams.size(); ++s) {
    const auto& p = streams[s].probs;
    if (p.rows() != out.sums.rows() || p.cols() != out.sums.cols()) {
      throw ValidationError("fuse: stream " + std::to_string(s) + " has " + std::to_string(p.rows()) + "x" +
                            std::to_string(p.cols()) + " scores, expected " + std::to_string(out.sums.rows()) + "x" +
                            std::to_string(out.sums.cols()));
    }
    out.sums += p;
  }
  out.predictions = argmax_rows(out.sums);
  return out;
}

double top1_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) throw ValidationError("accuracy: prediction and label counts differ");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

nlohmann::json scores_to_json(const StreamScores& s) {
  nlohmann::json samples = nlohmann::json::array();
  for (Index i = 0; i < s.probs.rows(); ++i) {
    nlohmann::json row = {{"id", i}, {"probs", std::vector<double>(s.probs.row(i).begin(), s.probs.row(i).end())}};
    if (!s.labels.empty()) row["label"] = s.labels[static_cast<std::size_t>(i)];
    samples.push_back(std::move(row));
  }
  return {{"modality", s.modality}, {"num_classes", s.probs.cols()}, {"samples", std::move(samples)}};
}

StreamScores scores_from_json(const nlohmann::json& j) {
  StreamScores s;
  try {
    s.modality = j.value("modality", "");
    const auto k = j.at("num_classes").get<Index>();
    const auto& samples = j.at("samples");
    s.probs.resize(static_cast<Index>(samples.size()), k);
    bool labelled = !samples.empty() && samples.front().contains("label");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& row = samples[i];
      if (row.at("id").get<std::size_t>() != i) throw ValidationError("scores: sample ids must be 0..N-1 in order");
      const auto probs = row.at("probs").get<std::vector<double>>();
      if (static_cast<Index>(probs.size()) != k) {
        throw ValidationError("scores: sample " + std::to_string(i) + " has " + std::to_string(probs.size()) +
                              " probabilities, expected " + std::to_string(k));
      }
      for (Index c = 0; c < k; ++c) s.probs(static_cast<Index>(i), c) = probs[static_cast<std::size_t>(c)];
      if (labelled) s.labels.push_back(row.at("label").get<int>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("scores JSON: ") + e.what());
  }
  s.validate();
  return s;
}

void save_scores(const std::string& path, const StreamScores& s) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write scores '" + path + "'");
  out << scores_to_json(s).dump(1) << '\n';
}

StreamScores load_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scores '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("scores '" + path + "': " + e.what());
  }
  return scores_from_json(j);
}

template <typename S>
EvalResult evaluate(SimbaModel<S>& model, const SkeletonDataset& data, Index window, Modality modality,
                    Index batch_size) {
  NoGradGuard no_grad;
  Rng unused(0);
  const auto n = static_cast<Index>(data.samples.size());
  const Index k = model.config().num_classes;
  EvalResult res;
  res.scores.modality = to_string(modality);
  res.scores.probs.resize(n, k);
  double loss = 0;
  for (Index start = 0; start < n; start += batch_size) {
    std::vector<std::size_t> idx;
    for (Index i = start; i < std::min(n, start + batch_size); ++i) idx.push_back(static_cast<std::size_t>(i));
    const Tensor<S> logits = model.forward(assemble_batch<S>(data, idx, window, modality, Mode::eval, unused), Mode::eval);
    const auto z = logits.data();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      Eigen::RowVectorXd row(k);
      for (Index c = 0; c < k; ++c) row(c) = static_cast<double>(z[r * static_cast<std::size_t>(k) + static_cast<std::size_t>(c)]);
      row.array() -= row.maxCoeff();
      const double log_norm = std::log(row.array().exp().sum());
      const auto i = static_cast<Index>(idx[r]);
      res.scores.probs.row(i) = (row.array() - log_norm).exp().matrix();
      loss -= row(data.samples[idx[r]].label) - log_norm;
    }
  }
  for (const auto& s : data.samples) res.scores.labels.push_back(s.label);
  res.accuracy = top1_accuracy(argmax_rows(res.scores.probs), res.scores.labels);
  res.loss = n > 0 ? loss / static_cast<double>(n) : 0.0;
  return res;
}

nlohmann::json to_json(const EpochMetrics& m) {
  return {{"epoch", m.epoch},           {"lr", m.lr},           {"train_loss", m.train_loss},
          {"train_acc", m.train_acc},   {"eval_acc", m.eval_acc}, {"wall_s", m.wall_s}};
}

nlohmann::json checkpoint_meta(const TrainConfig& cfg, const SimbaConfig& model, Modality modality, int epoch,
                               double eval_acc) {
  return {{"train_config", cfg}, {"model_config", model}, {"modality", to_string(modality)},
          {"epoch", epoch},      {"eval_acc", eval_acc}};
}

template <typename S>
TrainResult train(SimbaModel<S>& model, const SkeletonDataset& data, const TrainConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  if (data.samples.empty()) throw ValidationError("train: dataset has no samples");
  const SkeletonDataset& eval_data = options.eval_data ? *options.eval_data : data;
  Sgd<S> opt(model.parameters(), {cfg.momentum, cfg.weight_decay, cfg.nesterov});
  Rng rng(cfg.seed + 1);

  std::ofstream metrics;
  std::string ckpt_path;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    metrics.open(std::filesystem::path(options.out_dir) / "metrics.jsonl");
    if (!metrics) throw Error("cannot write metrics log in '" + options.out_dir + "'");
    ckpt_path = (std::filesystem::path(options.out_dir) / "best.ckpt").string();
  }

  std::vector<std::size_t> order;
  for (int r = 0; r < cfg.repeat_augmentation; ++r)
    for (std::size_t i = 0; i < data.samples.size(); ++i) order.push_back(i);

  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  const auto batch = static_cast<std::size_t>(cfg.batch_size_train);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochMetrics em;
    em.epoch = epoch;
    em.lr = lr_at(epoch, cfg);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t hits = 0;
    int b = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++b) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch)));
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(data.samples[i].label);
      const Tensor<S> x = assemble_batch<S>(data, idx, cfg.window_T, options.modality, Mode::train, rng);
      const Tensor<S> logits = model.forward(x, Mode::train);
      const Tensor<S> loss = cross_entropy(logits, labels);
      const double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
      }
      opt.zero_grad();
      loss.backward();
      opt.step(em.lr);
      loss_sum += lv * static_cast<double>(idx.size());
      const auto z = logits.data();
      const auto k = static_cast<std::size_t>(logits.dim(1));
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto row = z.subspan(r * k, k);
        hits += static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) == labels[r];
      }
    }
    em.train_loss = loss_sum / static_cast<double>(order.size());
    em.train_acc = static_cast<double>(hits) / static_cast<double>(order.size());
    em.eval_acc = evaluate(model, eval_data, cfg.window_T, options.modality, cfg.batch_size_eval).accuracy;
    if (cfg.record_wall_time) em.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (em.eval_acc > result.best_eval_acc) {
      result.best_eval_acc = em.eval_acc;
      result.best_epoch = epoch;
      if (!ckpt_path.empty()) {
        ParameterList<S> tensors = model.parameters();
        for (auto& v : opt.state()) tensors.push_back(v);
        save_checkpoint(ckpt_path, make_checkpoint(tensors, checkpoint_meta(cfg, model.config(), options.modality,
                                                                            epoch, em.eval_acc)));
      }
    }
    if (metrics.is_open()) metrics << to_json(em).dump() << '\n' << std::flush;
    result.history.push_back(em);
    if (options.on_epoch) options.on_epoch(em);
  }
  return result;
}

template class Sgd<float>;
template class Sgd<double>;
template EvalResult evaluate(SimbaModel<float>&, const SkeletonDataset&, Index, Modality, Index);
template EvalResult evaluate(SimbaModel<double>&, const SkeletonDataset&, Index, Modality, Index);
template TrainResult train(SimbaModel<float>&, const SkeletonDataset&, const TrainConfig&, const TrainOptions&);
template TrainResult train(SimbaModel<double>&, const SkeletonDataset&, const TrainConfig&, const TrainOptions&);

}  // namespace simba
