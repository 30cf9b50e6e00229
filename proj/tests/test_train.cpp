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

#include <doctest.h>

#include "helpers.hpp"
#include "simba/checkpoint.hpp"
#include "simba/errors.hpp"
#include "simba/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace simba;
namespace fs = std::filesystem;

namespace {

TrainConfig toy_train() {
  TrainConfig c;
  c.base_lr = 0.05;
  c.milestones = {3};
  c.warmup_epochs = 1;
  c.epochs = 4;
  c.batch_size_train = 8;
  c.batch_size_eval = 32;
  c.window_T = 6;
  c.depth_l = 1;
  c.channels_C = 8;
  c.mamba_D = 2;
  c.ssm_W = 2;
  c.partitions_enabled = false;
  c.precision = Precision::float64;
  return c;
}

SkeletonDataset toy_data() {
  SynthOptions o;
  o.classes = 3;
  o.samples_per_class = 6;
  o.joints = 4;
  o.frames = 10;
  o.seed = 2;
  return synth_generate(o);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

StreamScores stream(std::initializer_list<std::initializer_list<double>> rows) {
  StreamScores s;
  s.probs.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index k = 0;
    for (double v : r) s.probs(i, k++) = v;
    ++i;
  }
  return s;
}

}  // namespace

TEST_CASE("learning rate schedule anchors") {
  const TrainConfig ntu = ntu60_recipe();
  CHECK(lr_at(0, ntu) == doctest::Approx(0.005).epsilon(1e-15));
  CHECK(lr_at(2, ntu) == doctest::Approx(0.015).epsilon(1e-15));
  CHECK(lr_at(4, ntu) == doctest::Approx(0.025).epsilon(1e-15));
  CHECK(lr_at(5, ntu) == doctest::Approx(0.025).epsilon(1e-15));
  CHECK(lr_at(74, ntu) == doctest::Approx(0.025).epsilon(1e-15));
  CHECK(lr_at(75, ntu) == doctest::Approx(0.0025).epsilon(1e-12));
  CHECK(lr_at(80, ntu) == doctest::Approx(0.0025).epsilon(1e-12));
  CHECK(lr_at(86, ntu) == doctest::Approx(0.00025).epsilon(1e-12));
}

TEST_CASE("recipes carry the published settings") {
  const TrainConfig ntu = ntu60_recipe();
  CHECK(ntu.base_lr == 0.025);
  CHECK(ntu.lr_decay_rate == 0.1);
  CHECK(ntu.milestones == std::vector<int>{75, 85});
  CHECK(ntu.warmup_epochs == 5);
  CHECK(ntu.weight_decay == 0.0001);
  CHECK(ntu.epochs == 90);
  CHECK(ntu.batch_size_train == 64);
  CHECK(ntu.batch_size_eval == 512);
  CHECK(ntu.window_T == 64);
  CHECK(ntu.channels_C == 216);
  CHECK(ntu.mamba_D == 20);
  CHECK(ntu.depth_l == 10);
  CHECK(ntu.partitions_enabled);
  const TrainConfig ucla = nwucla_recipe();
  CHECK(ucla.weight_decay == 0.0004);
  CHECK(ucla.window_T == 52);
  CHECK(ucla.epochs == 400);
  CHECK(ucla.milestones == std::vector<int>{110});
  CHECK(ucla.batch_size_train == 16);
  CHECK(ucla.batch_size_eval == 64);
  CHECK(ucla.mamba_D == 25);
  CHECK(ucla.repeat_augmentation == 2);
  CHECK_FALSE(ucla.partitions_enabled);
  CHECK(ntu120_recipe().model(25, 120, kinect25_partitions()).num_classes == 120);
  CHECK(ntu.model(25, 60, kinect25_partitions()).d_model() == 500);
  CHECK(ucla.model(20, 10, {}).d_model() == 500);
}

TEST_CASE("config validation and JSON") {
  TrainConfig c = toy_train();
  c.milestones = {3, 3};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.milestones = {4};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = toy_train();
  c.base_lr = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  const TrainConfig ntu = ntu60_recipe();
  const nlohmann::json j = ntu;
  for (const char* key : {"base_lr", "lr_decay_rate", "milestones", "warmup_epochs", "weight_decay", "momentum",
                          "nesterov", "epochs", "batch_size_train", "batch_size_eval", "window_T", "depth_l",
                          "channels_C", "mamba_D", "ssm_W", "partitions_enabled", "seed", "precision"})
    CHECK(j.contains(key));
  const TrainConfig back = j.get<TrainConfig>();
  CHECK(nlohmann::json(back) == j);
  nlohmann::json bad = j;
  bad["learning_rate"] = 0.1;
  CHECK_THROWS_AS(bad.get<TrainConfig>(), ConfigError);
  const TrainConfig partial = nlohmann::json{{"epochs", 7}, {"milestones", {5}}}.get<TrainConfig>();
  CHECK(partial.epochs == 7);
  CHECK(partial.base_lr == TrainConfig{}.base_lr);
}

TEST_CASE("plain SGD without momentum or decay") {
  auto w = TensorD::from({2}, {1.0, -2.0}, true);
  Sgd<double> opt({{"w", w, true, true}}, {0.0, 0.0, false});
  w.mutable_grad()[0] = 0.5;
  w.mutable_grad()[1] = -1.0;
  opt.step(0.1);
  CHECK(w.at({0}) == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(w.at({1}) == doctest::Approx(-1.9).epsilon(1e-15));
}

TEST_CASE("momentum velocity recursion over two steps") {
  // g=1, lr=1, m=0.9: v1=1, v2=1.9. Nesterov steps by g+m*v: 1.9 then 2.71.
  for (bool nesterov : {true, false}) {
    auto w = TensorD::from({1}, {0.0}, true);
    Sgd<double> opt({{"w", w, true, false}}, {0.9, 0.0, nesterov});
    for (int s = 0; s < 2; ++s) {
      w.zero_grad();
      w.mutable_grad()[0] = 1.0;
      opt.step(1.0);
    }
    CHECK(w.item() == doctest::Approx(nesterov ? -(1.9 + 2.71) : -(1.0 + 1.9)).epsilon(1e-14));
    CHECK(opt.state().at(0).tensor.item() == doctest::Approx(1.9).epsilon(1e-15));
  }
}

TEST_CASE("weight decay applies only to flagged weights") {
  auto conv = TensorD::from({1}, {2.0}, true);
  auto gain = TensorD::from({1}, {2.0}, true);
  Sgd<double> opt({{"conv.weight", conv, true, true}, {"bn.weight", gain, true, false}}, {0.0, 0.5, true});
  conv.mutable_grad()[0] = 0;
  gain.mutable_grad()[0] = 0;
  opt.step(0.1);
  CHECK(conv.item() == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0).epsilon(1e-15));
  CHECK(gain.item() == 2.0);
}

TEST_CASE("a non-finite gradient aborts the step and names the parameter") {
  auto a = TensorD::from({1}, {1.0}, true);
  auto b = TensorD::from({2}, {1.0, 1.0}, true);
  Sgd<double> opt({{"a", a, true, true}, {"layer.weight", b, true, true}}, {});
  a.mutable_grad()[0] = 1.0;
  b.mutable_grad()[1] = std::nan("");
  try {
    opt.step(0.1);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer.weight") != std::string::npos);
  }
  CHECK(a.item() == 1.0);
}

TEST_CASE("one step moves every parameter with a nonzero grad") {
  SimbaModel<double> model(toy_train().model(4, 3, {}), 1);
  Sgd<double> opt(model.parameters(), {0.9, 1e-4, true});
  Rng rng(0);
  const auto data = toy_data();
  auto x = assemble_batch<double>(data, {0, 7, 13}, 6, Modality::joint, Mode::train, rng);
  std::vector<std::vector<double>> before;
  for (const auto& p : opt.params()) before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  cross_entropy(model.forward(x, Mode::train), {0, 1, 2}).backward();
  opt.step(0.01);
  for (std::size_t i = 0; i < opt.params().size(); ++i) {
    const auto& t = opt.params()[i].tensor;
    double gmax = 0;
    for (double g : t.grad()) gmax = std::max(gmax, std::abs(g));
    if (gmax < 1e-9) continue;  // biases ahead of batch norm
    CAPTURE(opt.params()[i].name);
    CHECK(std::vector<double>(t.data().begin(), t.data().end()) != before[i]);
  }
}

TEST_CASE("fresh model loss is near log K") {
  const auto data = toy_data();
  SimbaModel<double> model(toy_train().model(4, 3, {}), 1);
  Rng rng(0);
  std::vector<std::size_t> idx(data.samples.size());
  std::vector<int> labels;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    idx[i] = i;
    labels.push_back(data.samples[i].label);
  }
  const double loss =
      cross_entropy(model.forward(assemble_batch<double>(data, idx, 6, Modality::joint, Mode::train, rng), Mode::train),
                    labels)
          .item();
  CHECK(std::abs(loss - std::log(3.0)) <= 0.2 * std::log(3.0));
}

TEST_CASE("fusion sums probabilities") {
  const auto fused = fuse_scores({stream({{0.6, 0.4}}), stream({{0.3, 0.7}})});
  CHECK(fused.sums(0, 0) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(fused.sums(0, 1) == doctest::Approx(1.1).epsilon(1e-15));
  CHECK(fused.predictions == std::vector<int>{1});
  const auto s = stream({{0.2, 0.5, 0.3}, {0.1, 0.1, 0.8}, {0.4, 0.4, 0.2}});
  CHECK(fuse_scores({s, s}).predictions == argmax_rows(s.probs));
  CHECK(argmax_rows(s.probs) == std::vector<int>{1, 2, 0});  // tie resolves low
  CHECK_THROWS_AS(fuse_scores({s, stream({{0.5, 0.5, 0.0}})}), ValidationError);
  CHECK_THROWS_AS(fuse_scores({}), ValidationError);
}

TEST_CASE("appending a uniform stream keeps the fused argmax") {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.01, 1);
  for (int trial = 0; trial < 20; ++trial) {
    StreamScores a, b, flat;
    a.probs.resize(10, 5);
    b.probs.resize(10, 5);
    for (Index i = 0; i < 10; ++i)
      for (Index k = 0; k < 5; ++k) {
        a.probs(i, k) = u(rng);
        b.probs(i, k) = u(rng);
      }
    a.probs.array().colwise() /= a.probs.rowwise().sum().array();
    b.probs.array().colwise() /= b.probs.rowwise().sum().array();
    flat.probs = Eigen::MatrixXd::Constant(10, 5, 0.2);
    CHECK(fuse_scores({a, b, flat}).predictions == fuse_scores({a, b}).predictions);
  }
}

TEST_CASE("scores JSON round trip and validation") {
  StreamScores s = stream({{0.25, 0.75}, {1.0, 0.0}});
  s.modality = "bone";
  s.labels = {1, 0};
  const auto back = scores_from_json(scores_to_json(s));
  CHECK(back.modality == "bone");
  CHECK(back.labels == s.labels);
  CHECK(back.probs == s.probs);
  CHECK_THROWS_AS(stream({{0.5, 0.6}}).validate(), ValidationError);
  CHECK_THROWS_AS(stream({{1.2, -0.2}}).validate(), ValidationError);
  CHECK(top1_accuracy({1, 0, 1}, {1, 1, 1}) == doctest::Approx(2.0 / 3));
  CHECK_THROWS_AS(top1_accuracy({1}, {1, 0}), ValidationError);
}

TEST_CASE("checkpoint round trip restores parameters and rejects mismatches") {
  const SimbaConfig cfg = toy_train().model(4, 3, {});
  SimbaModel<double> a(cfg, 1), b(cfg, 2);
  std::ostringstream out;
  write_checkpoint(out, make_checkpoint(a.parameters(), {{"note", "x"}}));
  std::istringstream in(out.str());
  const Checkpoint ck = read_checkpoint(in);
  CHECK(ck.scalar_bytes == 8);
  CHECK(ck.meta.at("note") == "x");
  restore_checkpoint(ck, b.parameters());
  const auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(simba::test::bit_equal(pa[i].tensor, pb[i].tensor));

  Checkpoint wrong = ck;
  wrong.entries[0].shape.push_back(1);
  CHECK_THROWS_AS(restore_checkpoint(wrong, b.parameters()), FormatError);
  Checkpoint missing = ck;
  missing.entries.pop_back();
  CHECK_THROWS_AS(restore_checkpoint(missing, b.parameters()), FormatError);
  Checkpoint extra = ck;
  extra.entries.push_back({"optimizer.velocity.x", {1}, {0.0}});
  CHECK_THROWS_AS(restore_checkpoint(extra, b.parameters()), FormatError);
  CHECK_NOTHROW(restore_checkpoint(extra, b.parameters(), "optimizer."));
  std::istringstream cut(out.str().substr(0, out.str().size() - 5));
  CHECK_THROWS_AS(read_checkpoint(cut), FormatError);

  SimbaModel<float> f(cfg, 1);
  std::ostringstream fo;
  write_checkpoint(fo, make_checkpoint(f.parameters(), {}));
  std::istringstream fi(fo.str());
  const Checkpoint fck = read_checkpoint(fi);
  SimbaModel<float> g(cfg, 3);
  restore_checkpoint(fck, g.parameters());
  CHECK(g.parameters()[0].tensor.data()[0] == f.parameters()[0].tensor.data()[0]);
}

TEST_CASE("training is deterministic and writes its artifacts") {
  const auto data = toy_data();
  const TrainConfig cfg = toy_train();
  std::vector<std::string> logs;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = fs::temp_directory_path() / ("simba_train_" + std::to_string(run));
    fs::remove_all(dir);
    SimbaModel<double> model(cfg.model(data.joints, data.num_classes, data.partitions), cfg.seed);
    TrainOptions opt;
    opt.out_dir = dir.string();
    const auto res = train(model, data, cfg, opt);
    CHECK(res.history.size() == 4);
    CHECK(res.best_epoch >= 0);
    CHECK(fs::exists(dir / "best.ckpt"));
    logs.push_back(slurp(dir / "metrics.jsonl"));
    const Checkpoint ck = load_checkpoint((dir / "best.ckpt").string());
    CHECK(ck.meta.at("epoch").get<int>() == res.best_epoch);
    CHECK(ck.find("optimizer.velocity.head.weight") != nullptr);
    fs::remove_all(dir);
  }
  CHECK(logs[0] == logs[1]);
  std::istringstream lines(logs[0]);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"epoch", "lr", "train_loss", "train_acc", "eval_acc", "wall_s"}) CHECK(j.contains(key));
    CHECK(j.at("epoch").get<int>() == n++);
  }
  CHECK(n == 4);
}

TEST_CASE("a non-finite loss aborts training with its position") {
  const auto data = toy_data();
  const TrainConfig cfg = toy_train();
  SimbaModel<double> model(cfg.model(data.joints, data.num_classes, data.partitions), cfg.seed);
  model.head_b.mutable_data()[0] = std::nan("");
  try {
    train(model, data, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch 0 batch 0") != std::string::npos);
  }
}

TEST_CASE("evaluation yields valid stream scores") {
  const auto data = toy_data();
  SimbaModel<double> model(toy_train().model(4, 3, {}), 1);
  const auto res = evaluate(model, data, 6, Modality::bone, 5);
  CHECK(res.scores.probs.rows() == static_cast<Index>(data.samples.size()));
  CHECK_NOTHROW(res.scores.validate());
  CHECK(res.scores.modality == "bone");
  CHECK(res.accuracy == top1_accuracy(argmax_rows(res.scores.probs), res.scores.labels));
}
