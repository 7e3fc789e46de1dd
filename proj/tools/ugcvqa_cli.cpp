// Copyright (c) 2026, The ugcvqa Authors. All rights reserved.
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
// ugcvqa: train, score, evaluate and split from the command line.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ugcvqa/error.hpp"
#include "ugcvqa/train_eval.hpp"

using namespace ugcvqa;
namespace fs = std::filesystem;

namespace {

void print_report(const EvaluationReport& r, bool json) {
  if (json) {
    std::cout << r.to_json().dump(2) << "\n";
  } else {
    std::cout << r.to_text();
  }
}

int run_train(const fs::path& config_path, const std::optional<double>& lr,
              const std::optional<int64_t>& max_steps) {
  auto config = TrainConfig::load(config_path);
  if (lr) config.learning_rate = *lr;
  if (max_steps) config.max_steps = *max_steps;
  const auto result = train(config);
  std::cout << "steps " << result.steps << "\n";
  for (size_t e = 0; e < result.epochs.size(); ++e) {
    const auto& log = result.epochs[e];
    std::cout << "epoch " << e + 1 << " train_loss " << log.train_loss;
    if (log.val_srocc) std::cout << " val_srocc " << *log.val_srocc;
    std::cout << "\n";
  }
  if (config.checkpoint_dir.empty()) {
    std::cerr << "note: no checkpoint_dir set, nothing was saved\n";
  } else {
    std::cout << "best checkpoint " << (config.checkpoint_dir / "best.ckpt").string() << "\n";
  }
  return 0;
}

int run_score(const fs::path& ckpt_path, const std::string& media,
              const std::optional<std::string>& reference, const std::optional<double>& fps,
              bool json) {
  auto ckpt = Checkpoint::load(ckpt_path);
  const auto s = score(ckpt, media, reference, fps);
  if (json) {
    nlohmann::json j = {{"media", media}, {"score", s.Q}, {"frame_scores", s.q},
                        {"pooled_frame_scores", s.q_prime}};
    std::cout << j.dump(2) << "\n";
  } else {
    std::printf("%.6f\n", s.Q);
  }
  return 0;
}

int run_evaluate(const fs::path& ckpt_path, const fs::path& manifest, const std::string& split,
                 const std::optional<fs::path>& out, bool json) {
  auto ckpt = Checkpoint::load(ckpt_path);
  const auto e = evaluate_db(ckpt, manifest, parse_split(split));
  print_report(e.report, json);
  if (out) e.report.write_text(*out);
  return 0;
}

int run_split(const fs::path& manifest, int repeats, uint64_t seed, double fraction,
              const fs::path& out) {
  const auto splits = make_splits(load_manifest(manifest), fraction, repeats, seed);
  for (const auto& p : write_splits(splits, out)) std::cout << p.string() << "\n";
  return 0;
}

int run_protocol(const fs::path& config_path, int repeats, double fraction, bool json) {
  const auto r = run_split_protocol(TrainConfig::load(config_path), repeats, fraction);
  for (size_t i = 0; i < r.per_split.size(); ++i) {
    const auto& s = r.per_split[i];
    std::printf("split %02zu srocc %.4f krocc %.4f plcc %.4f rmse %.4f\n", i, s.srocc, s.krocc,
                s.plcc, s.rmse);
  }
  print_report(r.mean, json);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep-feature video quality assessment"};
  app.require_subcommand(1);

  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  fs::path config_path;
  std::optional<double> lr;
  std::optional<int64_t> max_steps;
  train_cmd->add_option("--config", config_path, "key=value config file")->required();
  train_cmd->add_option("--learning-rate", lr, "Override learning_rate");
  train_cmd->add_option("--max-steps", max_steps, "Override max_steps");

  auto* score_cmd = app.add_subcommand("score", "Score one video or frame directory");
  fs::path ckpt_path;
  std::string media;
  std::optional<std::string> reference;
  std::optional<double> fps;
  bool json = false;
  score_cmd->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  score_cmd->add_option("--video", media, "Video file or frame directory")->required();
  score_cmd->add_option("--reference", reference, "Reference video (full-reference models)");
  score_cmd->add_option("--fps", fps, "Frame rate for frame directories");
  score_cmd->add_flag("--json", json, "Print frame scores as JSON");

  auto* eval_cmd = app.add_subcommand("evaluate", "SROCC/KROCC/PLCC/RMSE on a manifest split");
  fs::path manifest;
  std::string split = "test";
  std::optional<fs::path> out_file;
  eval_cmd->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  eval_cmd->add_option("--manifest", manifest, "Manifest CSV")->required();
  eval_cmd->add_option("--split", split, "train, val or test")->capture_default_str();
  eval_cmd->add_option("--out", out_file, "Also write the report here");
  eval_cmd->add_flag("--json", json, "Print the report as JSON");

  auto* split_cmd = app.add_subcommand("split", "Write random train/val partitions");
  int repeats = 10;
  uint64_t seed = 0;
  double fraction = 0.8;
  fs::path out_dir = "splits";
  split_cmd->add_option("--manifest", manifest, "Manifest CSV")->required();
  split_cmd->add_option("--repeats", repeats, "Number of partitions")->capture_default_str();
  split_cmd->add_option("--seed", seed, "Seed")->capture_default_str();
  split_cmd->add_option("--train-fraction", fraction, "Training share")->capture_default_str();
  split_cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();

  auto* proto_cmd =
      app.add_subcommand("protocol", "Train and validate on repeated random splits");
  proto_cmd->add_option("--config", config_path, "key=value config file")->required();
  proto_cmd->add_option("--repeats", repeats, "Number of partitions")->capture_default_str();
  proto_cmd->add_option("--train-fraction", fraction, "Training share")->capture_default_str();
  proto_cmd->add_flag("--json", json, "Print the mean report as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return run_train(config_path, lr, max_steps);
    if (*score_cmd) return run_score(ckpt_path, media, reference, fps, json);
    if (*eval_cmd) return run_evaluate(ckpt_path, manifest, split, out_file, json);
    if (*split_cmd) return run_split(manifest, repeats, seed, fraction, out_dir);
    if (*proto_cmd) return run_protocol(config_path, repeats, fraction, json);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
