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

// simba: synth | train | eval | fuse | gradcheck | bench-scan

#include "simba/checkpoint.hpp"
#include "simba/config.hpp"
#include "simba/data.hpp"
#include "simba/errors.hpp"
#include "simba/gradcheck.hpp"
#include "simba/model.hpp"
#include "simba/parallel.hpp"
#include "simba/ssm.hpp"
#include "simba/train.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <random>

namespace {

using namespace simba;

const std::map<std::string, Modality> kModalities = {{"joint", Modality::joint},
                                                     {"bone", Modality::bone},
                                                     {"joint_motion", Modality::joint_motion},
                                                     {"bone_motion", Modality::bone_motion}};

struct SynthArgs {
  std::string out;
  SynthOptions opt;
};

struct TrainArgs {
  std::string config, data, eval_data, out;
  Modality modality = Modality::joint;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> precision;
  std::optional<int> epochs;
};

struct EvalArgs {
  std::string ckpt, data, scores;
  std::optional<std::string> modality;
};

struct FuseArgs {
  std::vector<std::string> streams;
  std::string labels;
};

struct BenchArgs {
  Index len = 4096, dim = 64, state = 16;
  std::vector<Index> chunks{64, 256, 1024};
  int repeats = 3;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  save_dataset(a.out, synth_generate(a.opt));
  std::cout << "wrote " << a.opt.classes * a.opt.samples_per_class << " samples to " << a.out << "\n";
  return 0;
}

template <typename S>
int train_as(const TrainConfig& cfg, const TrainArgs& a) {
  const SkeletonDataset data = load_dataset(a.data);
  std::optional<SkeletonDataset> eval_data;
  if (!a.eval_data.empty()) eval_data = load_dataset(a.eval_data);
  SimbaModel<S> model(cfg.model(data.joints, data.num_classes, data.partitions), cfg.seed);
  std::cout << "parameters: " << model.parameter_count() << "\n";
  TrainOptions opt;
  opt.modality = a.modality;
  opt.out_dir = a.out;
  opt.eval_data = eval_data ? &*eval_data : nullptr;
  opt.on_epoch = [](const EpochMetrics& m) {
    std::printf("epoch %d lr %.6g loss %.6f train_acc %.4f eval_acc %.4f\n", m.epoch, m.lr, m.train_loss,
                m.train_acc, m.eval_acc);
    std::fflush(stdout);
  };
  const TrainResult res = train(model, data, cfg, opt);
  std::cout << "best eval_acc " << res.best_eval_acc << " at epoch " << res.best_epoch << "\n";
  return 0;
}

int run_train(const TrainArgs& a) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.precision) cfg.precision = parse_precision(*a.precision);
  if (a.epochs) {
    cfg.epochs = *a.epochs;
    std::erase_if(cfg.milestones, [&](int m) { return m >= cfg.epochs; });
    cfg.warmup_epochs = std::min(cfg.warmup_epochs, cfg.epochs);
  }
  cfg.validate();
  return cfg.precision == Precision::float64 ? train_as<double>(cfg, a) : train_as<float>(cfg, a);
}

template <typename S>
int eval_as(const Checkpoint& ckpt, const EvalArgs& a) {
  const SkeletonDataset data = load_dataset(a.data);
  SimbaConfig mc;
  TrainConfig tc;
  try {
    mc = ckpt.meta.at("model_config").get<SimbaConfig>();
    tc = ckpt.meta.at("train_config").get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata: ") + e.what());
  }
  const Modality modality = parse_modality(a.modality.value_or(ckpt.meta.value("modality", "joint")));
  if (data.joints != mc.joints || data.num_classes != mc.num_classes) {
    throw ValidationError("dataset has V=" + std::to_string(data.joints) + " K=" + std::to_string(data.num_classes) +
                          ", checkpoint expects V=" + std::to_string(mc.joints) +
                          " K=" + std::to_string(mc.num_classes));
  }
  SimbaModel<S> model(mc, tc.seed);
  restore_checkpoint(ckpt, model.parameters(), "optimizer.");
  const EvalResult res = evaluate(model, data, tc.window_T, modality, tc.batch_size_eval);
  save_scores(a.scores, res.scores);
  std::cout << "top-1 accuracy " << res.accuracy << " (" << to_string(modality) << ", " << data.samples.size()
            << " samples)\n";
  return 0;
}

int run_eval(const EvalArgs& a) {
  if (a.modality) parse_modality(*a.modality);
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  return ckpt.scalar_bytes == 8 ? eval_as<double>(ckpt, a) : eval_as<float>(ckpt, a);
}

int run_fuse(const FuseArgs& a) {
  std::vector<StreamScores> streams;
  for (const auto& p : a.streams) streams.push_back(load_scores(p));
  std::vector<int> labels;
  if (!a.labels.empty()) {
    for (const auto& s : load_dataset(a.labels).samples) labels.push_back(s.label);
  } else {
    labels = streams.front().labels;
    if (labels.empty()) throw ValidationError("fuse: scores carry no labels; pass --labels");
  }
  const FusedScores fused = fuse_scores(streams);
  if (labels.size() != fused.predictions.size()) {
    throw ValidationError("fuse: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(fused.predictions.size()) + " samples");
  }
  std::cout << "fused top-1 accuracy " << top1_accuracy(fused.predictions, labels) << " (" << streams.size()
            << " streams)\n";
  return 0;
}

int run_gradcheck(const std::string& module, std::uint64_t seed) {
  const auto results = run_gradcheck_suite(module, seed);
  std::map<std::string, GradcheckResult> worst;
  bool ok = true;
  for (const auto& r : results) {
    ok = ok && r.passed();
    auto it = worst.find(r.suite);
    if (it == worst.end() || r.max_rel_error > it->second.max_rel_error || !r.passed()) worst[r.suite] = r;
  }
  for (const auto& r : results) {
    std::printf("%-16s %-28s entries %6lld max_rel_err %.3e threshold %.0e %s\n", r.suite.c_str(), r.name.c_str(),
                static_cast<long long>(r.entries), r.max_rel_error, r.threshold, r.passed() ? "PASS" : "FAIL");
  }
  std::printf("worst per block:\n");
  for (const auto& [suite, r] : worst) {
    std::printf("  %-16s %.3e (%s) %s\n", suite.c_str(), r.max_rel_error, r.name.c_str(), r.passed() ? "PASS" : "FAIL");
  }
  return ok ? 0 : 2;
}

int run_bench(const BenchArgs& a) {
  const ssm::ScanDims dims{1, a.len, a.dim, a.state};
  const auto n = static_cast<std::size_t>(a.len * a.dim * a.state);
  Rng rng(a.seed);
  std::uniform_real_distribution<double> decay(0.5, 0.99), unit(-1, 1);
  std::vector<double> a_bar(n), b_bar(n), c(static_cast<std::size_t>(a.len * a.state)),
      y(static_cast<std::size_t>(a.len * a.dim)), out(y.size());
  for (auto& v : a_bar) v = decay(rng);
  for (auto& v : b_bar) v = unit(rng);
  for (auto& v : c) v = unit(rng);
  for (auto& v : y) v = unit(rng);

  auto time_ms = [&](auto&& fn) {
    double best = 1e300;
    for (int r = 0; r < a.repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      fn();
      best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
  };
  std::cout << "strategy,T,Dp,W,chunk,wall_ms\n";
  const double seq = time_ms([&] {
    ssm::scan_kernel_sequential<double>(dims, a_bar.data(), b_bar.data(), c.data(), y.data(), out.data(), nullptr);
  });
  std::printf("sequential,%lld,%lld,%lld,%lld,%.3f\n", static_cast<long long>(a.len), static_cast<long long>(a.dim),
              static_cast<long long>(a.state), static_cast<long long>(a.len), seq);
  for (Index chunk : a.chunks) {
    const double par = time_ms([&] {
      ssm::scan_kernel_chunked<double>(dims, a_bar.data(), b_bar.data(), c.data(), y.data(), out.data(), nullptr, chunk,
                                       num_threads());
    });
    std::printf("parallel,%lld,%lld,%lld,%lld,%.3f\n", static_cast<long long>(a.len), static_cast<long long>(a.dim),
                static_cast<long long>(a.state), static_cast<long long>(chunk), par);
  }
  std::fflush(stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Skeleton action recognition with shift graph convolutions and a selective state space bottleneck"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  SynthArgs synth;
  auto* cs = app.add_subcommand("synth", "Write a seeded synthetic SKL1 dataset");
  cs->add_option("--out", synth.out, "Output SKL1 file")->required();
  cs->add_option("--classes", synth.opt.classes, "Number of classes")->check(CLI::Range(2, 65535));
  cs->add_option("--samples", synth.opt.samples_per_class, "Samples per class")->check(CLI::PositiveNumber);
  cs->add_option("--joints", synth.opt.joints, "Joints per skeleton")->check(CLI::Range(1, 65535));
  cs->add_option("--frames", synth.opt.frames, "Frames per sequence")->check(CLI::PositiveNumber);
  cs->add_option("--noise", synth.opt.noise, "Gaussian noise sigma")->check(CLI::NonNegativeNumber);
  cs->add_option("--seed", synth.opt.seed, "RNG seed");

  TrainArgs tr;
  auto* ct = app.add_subcommand("train", "Train a model on an SKL1 dataset");
  ct->add_option("--config", tr.config, "Training config JSON (defaults when omitted)")->check(CLI::ExistingFile);
  ct->add_option("--data", tr.data, "Training SKL1 file")->required()->check(CLI::ExistingFile);
  ct->add_option("--eval-data", tr.eval_data, "Evaluation SKL1 file (training file when omitted)")
      ->check(CLI::ExistingFile);
  ct->add_option("--modality", tr.modality, "joint | bone | joint_motion | bone_motion")
      ->transform(CLI::CheckedTransformer(kModalities).description(""))
      ->type_name("MODALITY");
  ct->add_option("--out", tr.out, "Output directory for metrics.jsonl and best.ckpt")->required();
  ct->add_option("--seed", tr.seed, "Override the config seed");
  ct->add_option("--precision", tr.precision, "Override precision: float32 | float64")
      ->check(CLI::IsMember({"float32", "float64"}));
  ct->add_option("--epochs", tr.epochs, "Override the epoch count")->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* ce = app.add_subcommand("eval", "Score an SKL1 dataset with a checkpoint");
  ce->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ce->add_option("--data", ev.data, "SKL1 file")->required()->check(CLI::ExistingFile);
  ce->add_option("--modality", ev.modality, "Override the checkpoint modality")
      ->check(CLI::IsMember({"joint", "bone", "joint_motion", "bone_motion"}));
  ce->add_option("--scores", ev.scores, "Output scores JSON")->required();

  FuseArgs fu;
  auto* cf = app.add_subcommand("fuse", "Fuse stream scores by summing probabilities");
  cf->add_option("streams", fu.streams, "Scores JSON files")->required()->check(CLI::ExistingFile);
  cf->add_option("--labels", fu.labels, "SKL1 file providing ground-truth labels")->check(CLI::ExistingFile);

  std::string gc_module = "all";
  std::uint64_t gc_seed = 7;
  auto* cg = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  std::vector<std::string> suites = gradcheck_suite_names();
  suites.insert(suites.begin(), "all");
  cg->add_option("--module", gc_module, "Suite name or all")->check(CLI::IsMember(suites));
  cg->add_option("--seed", gc_seed, "RNG seed");

  BenchArgs bench;
  auto* cb = app.add_subcommand("bench-scan", "Time sequential vs chunked parallel scan");
  cb->add_option("--len", bench.len, "Sequence length T")->check(CLI::PositiveNumber);
  cb->add_option("--dim", bench.dim, "Channels Dp")->check(CLI::PositiveNumber);
  cb->add_option("--state", bench.state, "State size W")->check(CLI::PositiveNumber);
  cb->add_option("--chunks", bench.chunks, "Chunk sizes")->delimiter(',')->check(CLI::PositiveNumber);
  cb->add_option("--repeats", bench.repeats, "Timing repeats (min reported)")->check(CLI::PositiveNumber);
  cb->add_option("--seed", bench.seed, "RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*cs) return run_synth(synth);
    if (*ct) return run_train(tr);
    if (*ce) return run_eval(ev);
    if (*cf) return run_fuse(fu);
    if (*cg) return run_gradcheck(gc_module, gc_seed);
    if (*cb) return run_bench(bench);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
