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
#pragma once

// Model assembly (backbone -> features -> frame score -> temporal pool),
// self-describing checkpoints, end-to-end training, scoring, database
// evaluation and repeated random splits.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ugcvqa/backbone.hpp"
#include "ugcvqa/fr_features.hpp"
#include "ugcvqa/media_ingest.hpp"
#include "ugcvqa/metrics.hpp"
#include "ugcvqa/nr_features.hpp"
#include "ugcvqa/quality_head.hpp"

namespace ugcvqa {

enum class Mode { fr, nr };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

struct PreprocessConfig {
  double frame_interval = 0.5;
  int min_dim = 520;
  int crop_size = 448;
};

struct TrainConfig {
  Mode mode = Mode::nr;
  double learning_rate = 1e-5;
  int batch_size = 6;
  int epochs = 30;
  // Stops after this many optimiser steps when > 0.
  int64_t max_steps = 0;
  // Epochs without a validation SROCC improvement before stopping; 0 never stops early.
  int patience = 5;
  PreprocessConfig preprocess;
  uint64_t seed = 0;
  TemporalPoolParams tp;
  SimilarityConstants similarity;
  BackboneConfig backbone;
  std::filesystem::path pretrained;  // empty: random initialisation
  std::filesystem::path manifest;
  std::filesystem::path checkpoint_dir;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Keep every frame graph alive between the forward and backward pass
  // instead of recomputing it; faster, but memory grows with frames.
  bool cache_activations = false;
  bool verbose = true;

  void validate() const;
  nlohmann::json to_json() const;

  // Flat key=value file; '#' starts a comment. Relative paths resolve
  // against the file's directory.
  static TrainConfig parse(const std::string& text,
                           const std::filesystem::path& base_dir = ".");
  static TrainConfig load(const std::filesystem::path& path);
};

class QualityModel {
 public:
  QualityModel() = default;
  QualityModel(Mode mode, BackboneParams backbone, uint64_t seed, TemporalPoolParams tp,
               SimilarityConstants similarity);

  Mode mode() const { return mode_; }
  int64_t feature_dim() const;

  // frame / reference: preprocessed (3, H, W) crops in [0, 1].
  ag::Var<float> frame_score(const Tensor<float>& frame, const Tensor<float>* reference);

  // Inference over an already preprocessed sequence.
  FrameScoreSeries score_sequence(const FrameSequence& frames, const FrameSequence* reference);

  void for_each_param(const std::function<void(Param<float>&)>& fn);
  std::vector<Param<float>*> parameters();

  BackboneParams backbone;
  StaircaseParams<float> staircase;  // NR only
  RegressionParams<float> head;
  TemporalPoolParams tp;
  SimilarityConstants similarity;

 private:
  Mode mode_ = Mode::nr;
};

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  QualityModel model;
  PreprocessConfig preprocess;
  nlohmann::json training = nlohmann::json::object();  // config echo and progress

  void save(const std::filesystem::path& path);
  static Checkpoint load(const std::filesystem::path& path);
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_srocc;
};

struct TrainResult {
  Checkpoint best;
  std::vector<double> step_losses;
  std::vector<EpochLog> epochs;
  int64_t steps = 0;
};

// Called after every optimiser step with (step, batch loss, model);
// returning false stops training.
using StepCallback = std::function<bool(int64_t, double, QualityModel&)>;

TrainResult train(const TrainConfig& config, const StepCallback& on_step = {});

// Forward + backward for one video; accumulates parameter gradients
// scaled by loss_scale and returns (pooled score, unscaled loss).
std::pair<double, double> video_gradient_step(QualityModel& model, const FrameSequence& frames,
                                              const FrameSequence* reference, double label,
                                              double loss_scale, bool cache_activations);

// Center-crop inference on one media item. For NR checkpoints the
// reference is never opened.
FrameScoreSeries score(Checkpoint& checkpoint, const std::string& media,
                       const std::optional<std::string>& reference = std::nullopt,
                       std::optional<double> fps = std::nullopt);

FrameScoreSeries score(Checkpoint& checkpoint, const VideoRecord& record);

struct DatabaseEvaluation {
  EvaluationReport report;
  std::vector<double> predictions;
  std::vector<double> labels;
};

DatabaseEvaluation evaluate_db(Checkpoint& checkpoint, const std::vector<VideoRecord>& records,
                               Split split);
DatabaseEvaluation evaluate_db(Checkpoint& checkpoint, const std::filesystem::path& manifest,
                               Split split);

// `repeats` reproducible random partitions of the records into training
// and validation sets (round(train_fraction * n) training records each).
std::vector<std::vector<VideoRecord>> make_splits(const std::vector<VideoRecord>& records,
                                                  double train_fraction, int repeats,
                                                  uint64_t seed);

// Writes split_00.csv, split_01.csv, ... and returns their paths.
std::vector<std::filesystem::path> write_splits(const std::vector<std::vector<VideoRecord>>& splits,
                                                const std::filesystem::path& out_dir);

struct ProtocolResult {
  std::vector<EvaluationReport> per_split;
  EvaluationReport mean;
};

// Trains and validates once per random split and averages the criteria.
ProtocolResult run_split_protocol(const TrainConfig& config, int repeats,
                                  double train_fraction = 0.8);

}  // namespace ugcvqa
