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
#include "ugcvqa/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "ugcvqa/adam.hpp"

namespace ugcvqa {
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kCheckpointFormat = "ugcvqa-checkpoint";

uint64_t mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t seed, uint64_t stream) { return mix(seed ^ mix(stream)); }

// Fisher-Yates with a splitmix stream so orderings do not depend on the
// standard library's distributions.
void seeded_shuffle(std::vector<size_t>& v, uint64_t seed) {
  uint64_t state = seed;
  for (size_t i = v.size(); i > 1; --i) {
    state = mix(state);
    std::swap(v[i - 1], v[static_cast<size_t>(state % i)]);
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " expects a number, got '" + v + "'");
  }
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " expects an integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + " expects true/false, got '" + v + "'");
}

nlohmann::json backbone_json(const BackboneConfig& c) {
  return {{"stem_channels", c.stem_channels},
          {"blocks", c.blocks},
          {"base_width", c.base_width},
          {"expansion", c.expansion}};
}

BackboneConfig backbone_from_json(const nlohmann::json& j) {
  BackboneConfig c;
  c.stem_channels = j.at("stem_channels").get<int>();
  c.blocks = j.at("blocks").get<std::array<int, 4>>();
  c.base_width = j.at("base_width").get<int>();
  c.expansion = j.at("expansion").get<int>();
  return c;
}

void log_line(bool verbose, const std::string& line) {
  if (verbose) std::clog << line << std::endl;
}

}  // namespace

std::string_view to_string(Mode mode) { return mode == Mode::fr ? "fr" : "nr"; }

Mode parse_mode(std::string_view text) {
  if (text == "fr") return Mode::fr;
  if (text == "nr") return Mode::nr;
  throw ConfigError("mode must be fr or nr, got '" + std::string(text) + "'");
}

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be a finite non-negative number");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (patience < 0) throw ConfigError("patience must be >= 0");
  if (!(preprocess.frame_interval > 0.0)) throw ConfigError("frame_interval must be positive");
  if (preprocess.crop_size < 32 || preprocess.crop_size % 32 != 0) {
    throw ConfigError("crop_size must be a positive multiple of 32");
  }
  if (preprocess.crop_size > preprocess.min_dim) {
    throw ConfigError("crop_size must not exceed min_dim");
  }
  tp.validate();
  similarity.validate();
  if (manifest.empty()) throw ConfigError("manifest is required");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  for (int b : backbone.blocks) {
    if (b < 1) throw ConfigError("every backbone stage needs at least one block");
  }
  if (backbone.stem_channels < 1 || backbone.base_width < 1 || backbone.expansion < 1 ||
      backbone.stage_channels(0) % 4 != 0) {
    throw ConfigError("backbone widths must be positive and stage channels divisible by 4");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"mode", to_string(mode)},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"max_steps", max_steps},
          {"patience", patience},
          {"frame_interval", preprocess.frame_interval},
          {"min_dim", preprocess.min_dim},
          {"crop_size", preprocess.crop_size},
          {"seed", seed},
          {"tp_tau", tp.tau},
          {"tp_temperature", tp.temperature},
          {"tp_gamma", tp.gamma},
          {"c1", similarity.c1},
          {"c2", similarity.c2},
          {"variance", similarity.variance == VarianceMode::population ? "population" : "sample"},
          {"backbone", backbone_json(backbone)},
          {"pretrained", pretrained.string()},
          {"manifest", manifest.string()},
          {"checkpoint_dir", checkpoint_dir.string()},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_eps", adam_eps},
          {"cache_activations", cache_activations}};
}

TrainConfig TrainConfig::parse(const std::string& text, const fs::path& base_dir) {
  TrainConfig c;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  auto path_of = [&](const std::string& v) {
    fs::path p(v);
    return p.is_relative() ? (base_dir / p).lexically_normal() : p;
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + " is not key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "mode") c.mode = parse_mode(value);
    else if (key == "learning_rate") c.learning_rate = parse_double(key, value);
    else if (key == "batch_size") c.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "epochs") c.epochs = static_cast<int>(parse_int(key, value));
    else if (key == "max_steps") c.max_steps = parse_int(key, value);
    else if (key == "patience") c.patience = static_cast<int>(parse_int(key, value));
    else if (key == "frame_interval") c.preprocess.frame_interval = parse_double(key, value);
    else if (key == "min_dim") c.preprocess.min_dim = static_cast<int>(parse_int(key, value));
    else if (key == "crop_size") c.preprocess.crop_size = static_cast<int>(parse_int(key, value));
    else if (key == "seed") c.seed = static_cast<uint64_t>(parse_int(key, value));
    else if (key == "tp_tau") c.tp.tau = static_cast<int>(parse_int(key, value));
    else if (key == "tp_temperature") c.tp.temperature = parse_double(key, value);
    else if (key == "tp_gamma") c.tp.gamma = parse_double(key, value);
    else if (key == "c1") c.similarity.c1 = parse_double(key, value);
    else if (key == "c2") c.similarity.c2 = parse_double(key, value);
    else if (key == "variance") {
      if (value == "population") c.similarity.variance = VarianceMode::population;
      else if (value == "sample") c.similarity.variance = VarianceMode::sample;
      else throw ConfigError("variance must be population or sample");
    } else if (key == "backbone_stem_channels") {
      c.backbone.stem_channels = static_cast<int>(parse_int(key, value));
    } else if (key == "backbone_width") {
      c.backbone.base_width = static_cast<int>(parse_int(key, value));
    } else if (key == "backbone_blocks") {
      std::istringstream parts(value);
      std::string part;
      size_t i = 0;
      while (std::getline(parts, part, ',')) {
        if (i >= 4) throw ConfigError("backbone_blocks takes four counts");
        c.backbone.blocks[i++] = static_cast<int>(parse_int(key, trim(part)));
      }
      if (i != 4) throw ConfigError("backbone_blocks takes four counts");
    } else if (key == "pretrained") c.pretrained = value.empty() ? fs::path() : path_of(value);
    else if (key == "manifest") c.manifest = path_of(value);
    else if (key == "checkpoint_dir") c.checkpoint_dir = path_of(value);
    else if (key == "adam_beta1") c.adam_beta1 = parse_double(key, value);
    else if (key == "adam_beta2") c.adam_beta2 = parse_double(key, value);
    else if (key == "adam_eps") c.adam_eps = parse_double(key, value);
    else if (key == "cache_activations") c.cache_activations = parse_bool(key, value);
    else if (key == "verbose") c.verbose = parse_bool(key, value);
    else throw ConfigError("unknown config key '" + key + "' on line " + std::to_string(line_no));
  }
  return c;
}

TrainConfig TrainConfig::load(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

// ----------------------------------------------------------------- model

QualityModel::QualityModel(Mode mode, BackboneParams backbone_params, uint64_t seed,
                           TemporalPoolParams tp_params, SimilarityConstants constants)
    : backbone(std::move(backbone_params)),
      tp(tp_params),
      similarity(constants),
      mode_(mode) {
  tp.validate();
  similarity.validate();
  if (mode_ == Mode::nr) {
    staircase = StaircaseParams<float>::random(backbone.config().tap_channels(TapSet::nr),
                                               derive_seed(seed, 2));
  }
  head = RegressionParams<float>::random(feature_dim(), derive_seed(seed, 3));
}

int64_t QualityModel::feature_dim() const {
  const auto channels = backbone.config().tap_channels(mode_ == Mode::fr ? TapSet::fr : TapSet::nr);
  if (mode_ == Mode::fr) return 2 * std::accumulate(channels.begin(), channels.end(), int64_t{0});
  return 2 * channels.back();
}

ag::Var<float> QualityModel::frame_score(const Tensor<float>& frame,
                                         const Tensor<float>* reference) {
  ag::Var<float> features;
  if (mode_ == Mode::fr) {
    if (!reference) throw Error("full-reference scoring needs a reference frame");
    auto dist = extract_pyramid(ag::constant(frame), backbone, TapSet::fr);
    auto ref = extract_pyramid(ag::constant(*reference), backbone, TapSet::fr);
    features = fr_feature_vector(ref, dist, similarity);
  } else {
    auto pyramid = extract_pyramid(ag::constant(frame), backbone, TapSet::nr);
    auto fused = staircase_fuse<float>(std::span<const ag::Var<float>>(pyramid.stages), staircase);
    features = global_pool_stats(fused);
  }
  return regress_frame_score(features, head);
}

FrameScoreSeries QualityModel::score_sequence(const FrameSequence& frames,
                                              const FrameSequence* reference) {
  if (frames.size() == 0) throw Error("cannot score an empty frame sequence");
  if (mode_ == Mode::fr && (!reference || reference->size() != frames.size())) {
    throw Error("full-reference scoring needs an aligned reference sequence");
  }
  ag::NoGradGuard no_grad;
  std::vector<double> q;
  for (size_t t = 0; t < frames.size(); ++t) {
    const Tensor<float>* ref = mode_ == Mode::fr ? &reference->frames[t] : nullptr;
    q.push_back(frame_score(frames.frames[t], ref).value()[0]);
  }
  return temporal_pool(q, tp);
}

void QualityModel::for_each_param(const std::function<void(Param<float>&)>& fn) {
  backbone.for_each_param(fn);
  if (mode_ == Mode::nr) staircase.for_each_param(fn);
  head.for_each_param(fn);
}

std::vector<Param<float>*> QualityModel::parameters() {
  std::vector<Param<float>*> out;
  for_each_param([&](Param<float>& p) { out.push_back(&p); });
  return out;
}

// ------------------------------------------------------------ checkpoint

void Checkpoint::save(const fs::path& path) {
  TensorArchive archive;
  const auto& norm = model.backbone.normalization;
  archive.metadata = {
      {"format", kCheckpointFormat},
      {"version", kCheckpointVersion},
      {"mode", to_string(model.mode())},
      {"feature_layout", model.mode() == Mode::fr ? kFrFeatureLayout : kNrFeatureLayout},
      {"feature_dim", model.feature_dim()},
      {"backbone", backbone_json(model.backbone.config())},
      {"normalization", {{"mean", norm.mean}, {"std", norm.std}}},
      {"temporal_pool",
       {{"tau", model.tp.tau}, {"temperature", model.tp.temperature}, {"gamma", model.tp.gamma}}},
      {"similarity",
       {{"c1", model.similarity.c1},
        {"c2", model.similarity.c2},
        {"variance",
         model.similarity.variance == VarianceMode::population ? "population" : "sample"}}},
      {"preprocess",
       {{"frame_interval", preprocess.frame_interval},
        {"min_dim", preprocess.min_dim},
        {"crop_size", preprocess.crop_size}}},
      {"training", training}};
  model.for_each_param([&](Param<float>& p) { archive.put(p.name, p.value); });
  archive.write(path);
}

Checkpoint Checkpoint::load(const fs::path& path) {
  const TensorArchive archive = TensorArchive::read(path);
  const auto& meta = archive.metadata;
  if (meta.value("format", "") != kCheckpointFormat) {
    throw ParseError(path.string() + ": not a quality-model checkpoint");
  }
  if (meta.value("version", -1) != kCheckpointVersion) {
    throw ParseError(path.string() + ": unsupported checkpoint version");
  }
  Checkpoint ckpt;
  try {
    const Mode mode = parse_mode(meta.at("mode").get<std::string>());
    const std::string layout = meta.at("feature_layout").get<std::string>();
    if (layout != (mode == Mode::fr ? kFrFeatureLayout : kNrFeatureLayout)) {
      throw ParseError(path.string() + ": unknown feature layout " + layout);
    }
    BackboneParams backbone(backbone_from_json(meta.at("backbone")));
    backbone.normalization.mean = meta.at("normalization").at("mean").get<std::array<float, 3>>();
    backbone.normalization.std = meta.at("normalization").at("std").get<std::array<float, 3>>();
    TemporalPoolParams tp;
    tp.tau = meta.at("temporal_pool").at("tau").get<int>();
    tp.temperature = meta.at("temporal_pool").at("temperature").get<double>();
    tp.gamma = meta.at("temporal_pool").at("gamma").get<double>();
    SimilarityConstants sim;
    sim.c1 = meta.at("similarity").at("c1").get<double>();
    sim.c2 = meta.at("similarity").at("c2").get<double>();
    sim.variance = meta.at("similarity").at("variance").get<std::string>() == "sample"
                       ? VarianceMode::sample
                       : VarianceMode::population;
    ckpt.model = QualityModel(mode, std::move(backbone), 0, tp, sim);
    ckpt.preprocess.frame_interval = meta.at("preprocess").at("frame_interval").get<double>();
    ckpt.preprocess.min_dim = meta.at("preprocess").at("min_dim").get<int>();
    ckpt.preprocess.crop_size = meta.at("preprocess").at("crop_size").get<int>();
    ckpt.training = meta.value("training", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": malformed checkpoint header: " + e.what());
  }

  std::set<std::string> seen;
  std::vector<std::string> problems;
  ckpt.model.for_each_param([&](Param<float>& p) {
    seen.insert(p.name);
    if (!archive.contains(p.name)) {
      problems.push_back("missing " + p.name);
    } else if (archive.get(p.name).shape() != p.value.shape()) {
      problems.push_back("shape mismatch " + p.name);
    } else {
      p.value = archive.get(p.name);
    }
  });
  for (const auto& name : archive.names()) {
    if (!seen.count(name)) problems.push_back("unexpected " + name);
  }
  if (!problems.empty()) {
    std::string msg = path.string() + ": checkpoint tensors do not match the model:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw ParseError(msg);
  }
  return ckpt;
}

// -------------------------------------------------------------- training

std::pair<double, double> video_gradient_step(QualityModel& model, const FrameSequence& frames,
                                              const FrameSequence* reference, double label,
                                              double loss_scale, bool cache_activations) {
  const size_t n = frames.size();
  if (n == 0) throw TrainingError("video has no frames");
  auto ref_of = [&](size_t t) -> const Tensor<float>* {
    return model.mode() == Mode::fr ? &reference->frames.at(t) : nullptr;
  };

  std::vector<ag::Var<float>> graphs;
  std::vector<double> q(n);
  if (cache_activations) {
    for (size_t t = 0; t < n; ++t) {
      graphs.push_back(model.frame_score(frames.frames[t], ref_of(t)));
      q[t] = graphs.back().value()[0];
    }
  } else {
    ag::NoGradGuard no_grad;
    for (size_t t = 0; t < n; ++t) q[t] = model.frame_score(frames.frames[t], ref_of(t)).value()[0];
  }
  for (double v : q) {
    if (!std::isfinite(v)) throw TrainingError("non-finite frame score");
  }

  const FrameScoreSeries pooled = temporal_pool(q, model.tp);
  const double loss = training_loss(pooled.Q, label);
  const double dloss = 2.0 * (pooled.Q - label) * loss_scale;
  const std::vector<double> dq = temporal_pool_gradient(q, model.tp);

  for (size_t t = 0; t < n; ++t) {
    const double seed = dq[t] * dloss;
    if (seed == 0.0) {
      if (cache_activations) graphs[t] = {};
      continue;
    }
    ag::Var<float> root = cache_activations ? std::move(graphs[t])
                                            : model.frame_score(frames.frames[t], ref_of(t));
    ag::backward(root, Tensor<float>(Shape{1}, static_cast<float>(seed)));
    if (cache_activations) graphs[t] = {};
  }
  return {pooled.Q, loss};
}

namespace {

struct LoadedVideo {
  FrameSequence frames;
  std::optional<FrameSequence> reference;
};

LoadedVideo load_video(const VideoRecord& rec, Mode mode, const PreprocessConfig& pre,
                       const CropPolicy& policy) {
  LoadedVideo v;
  if (mode == Mode::fr) {
    auto [dist, ref] = decode_and_sample_pair(rec, pre.frame_interval);
    v.frames = preprocess_sequence(dist, pre.min_dim, policy, pre.crop_size);
    v.reference = preprocess_sequence(ref, pre.min_dim, policy, pre.crop_size);
  } else {
    v.frames = preprocess_sequence(decode_and_sample(rec, pre.frame_interval), pre.min_dim,
                                   policy, pre.crop_size);
  }
  return v;
}

}  // namespace

TrainResult train(const TrainConfig& config, const StepCallback& on_step) {
  config.validate();
  const auto records = load_manifest(config.manifest);
  std::vector<VideoRecord> train_set, val_set;
  for (const auto& r : records) {
    if (r.split == Split::train) train_set.push_back(r);
    if (r.split == Split::val) val_set.push_back(r);
  }
  if (train_set.empty()) throw ConfigError("manifest has no training records");
  if (config.mode == Mode::fr) {
    for (const auto& r : records) {
      if (r.split != Split::test && !r.reference_path) {
        throw ConfigError("full-reference training needs a reference for " + r.media_path);
      }
    }
  }
  if (!config.checkpoint_dir.empty()) fs::create_directories(config.checkpoint_dir);

  BackboneParams backbone =
      config.pretrained.empty()
          ? BackboneParams::random(config.backbone, derive_seed(config.seed, 1))
          : load_pretrained(config.pretrained, config.backbone);

  TrainResult result;
  Checkpoint current;
  current.model = QualityModel(config.mode, std::move(backbone), config.seed, config.tp,
                               config.similarity);
  current.preprocess = config.preprocess;
  current.training = {{"config", config.to_json()}};
  {
    // Labels stay on the database's native scale; keep its range for readers.
    double lo = train_set.front().mos, hi = lo, sum = 0.0;
    for (const auto& r : train_set) {
      lo = std::min(lo, r.mos);
      hi = std::max(hi, r.mos);
      sum += r.mos;
    }
    current.training["mos"] = {
        {"min", lo}, {"max", hi}, {"mean", sum / static_cast<double>(train_set.size())}};
  }
  QualityModel& model = current.model;

  Adam adam(model.parameters(),
            Adam::Options{config.adam_beta1, config.adam_beta2, config.adam_eps});

  std::optional<double> best_srocc;
  bool have_best = false;
  int stale_epochs = 0;
  bool stop = false;
  int64_t step = 0;

  for (int epoch = 0; epoch < config.epochs && !stop; ++epoch) {
    std::vector<size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    seeded_shuffle(order, derive_seed(config.seed, 100 + static_cast<uint64_t>(epoch)));

    double epoch_loss = 0.0;
    size_t epoch_videos = 0;
    for (size_t start = 0; start < order.size() && !stop; start += config.batch_size) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      adam.zero_grad();
      double batch = 0.0;
      for (size_t i = start; i < end; ++i) {
        const VideoRecord& rec = train_set[order[i]];
        const CropPolicy policy =
            CropPolicy::random(crop_seed(config.seed, rec.media_path, epoch));
        LoadedVideo video = load_video(rec, config.mode, config.preprocess, policy);
        double q = 0.0, loss = 0.0;
        try {
          std::tie(q, loss) = video_gradient_step(
              model, video.frames, video.reference ? &*video.reference : nullptr, rec.mos,
              scale, config.cache_activations);
        } catch (const TrainingError& e) {
          throw TrainingError("step " + std::to_string(step) + ", video " + rec.media_path +
                              ": " + e.what());
        }
        if (!std::isfinite(loss)) {
          std::ostringstream os;
          os << "non-finite loss at step " << step << " on " << rec.media_path
             << " (predicted " << q << ", label " << rec.mos << ")";
          throw TrainingError(os.str());
        }
        batch += loss * scale;
        epoch_loss += loss;
        ++epoch_videos;
      }
      adam.step(config.learning_rate);
      ++step;
      result.step_losses.push_back(batch);
      if (on_step && !on_step(step, batch, model)) stop = true;
      if (config.max_steps > 0 && step >= config.max_steps) stop = true;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_videos ? epoch_loss / static_cast<double>(epoch_videos) : 0.0;
    if (val_set.size() >= 3) {
      try {
        current.training["epoch"] = epoch;
        log.val_srocc = evaluate_db(current, val_set, Split::val).report.srocc;
      } catch (const UndefinedStatistic&) {
        log.val_srocc.reset();
      }
    }
    result.epochs.push_back(log);
    {
      std::ostringstream os;
      os << std::setprecision(6) << "epoch " << epoch << " step " << step
         << " train_loss=" << log.train_loss;
      if (log.val_srocc) os << " val_srocc=" << *log.val_srocc;
      log_line(config.verbose, os.str());
    }

    current.training["epoch"] = epoch;
    current.training["step"] = step;
    if (log.val_srocc && (!best_srocc || *log.val_srocc > *best_srocc)) {
      best_srocc = log.val_srocc;
      current.training["val_srocc"] = *log.val_srocc;
      result.best = current;
      have_best = true;
      stale_epochs = 0;
      if (!config.checkpoint_dir.empty()) result.best.save(config.checkpoint_dir / "best.ckpt");
    } else if (best_srocc) {
      ++stale_epochs;
      if (config.patience > 0 && stale_epochs >= config.patience) {
        log_line(config.verbose, "early stop: no validation improvement for " +
                                     std::to_string(stale_epochs) + " epochs");
        stop = true;
      }
    }
    if (!config.checkpoint_dir.empty()) current.save(config.checkpoint_dir / "last.ckpt");
  }

  if (!have_best) {
    result.best = current;
    if (!config.checkpoint_dir.empty()) result.best.save(config.checkpoint_dir / "best.ckpt");
  }
  result.steps = step;
  return result;
}

// --------------------------------------------------------------- scoring

FrameScoreSeries score(Checkpoint& checkpoint, const std::string& media,
                       const std::optional<std::string>& reference, std::optional<double> fps) {
  VideoRecord rec;
  rec.media_path = media;
  rec.fps = fps;
  if (checkpoint.model.mode() == Mode::fr) {
    if (!reference) throw Error("full-reference checkpoint needs a reference video");
    rec.reference_path = reference;
  }
  return score(checkpoint, rec);
}

FrameScoreSeries score(Checkpoint& checkpoint, const VideoRecord& record) {
  const PreprocessConfig& pre = checkpoint.preprocess;
  const CropPolicy center = CropPolicy::center();
  if (checkpoint.model.mode() == Mode::fr) {
    if (!record.reference_path) {
      throw Error("full-reference checkpoint needs a reference for " + record.media_path);
    }
    LoadedVideo v = load_video(record, Mode::fr, pre, center);
    return checkpoint.model.score_sequence(v.frames, &*v.reference);
  }
  VideoRecord nr = record;
  nr.reference_path.reset();
  LoadedVideo v = load_video(nr, Mode::nr, pre, center);
  return checkpoint.model.score_sequence(v.frames, nullptr);
}

DatabaseEvaluation evaluate_db(Checkpoint& checkpoint, const std::vector<VideoRecord>& records,
                               Split split) {
  DatabaseEvaluation out;
  for (const auto& r : records) {
    if (r.split != split) continue;
    out.predictions.push_back(score(checkpoint, r).Q);
    out.labels.push_back(r.mos);
  }
  if (out.predictions.empty()) {
    throw Error("split " + std::string(to_string(split)) + " has no records");
  }
  out.report = evaluate(out.predictions, out.labels);
  return out;
}

DatabaseEvaluation evaluate_db(Checkpoint& checkpoint, const fs::path& manifest, Split split) {
  return evaluate_db(checkpoint, load_manifest(manifest), split);
}

// ---------------------------------------------------------------- splits

std::vector<std::vector<VideoRecord>> make_splits(const std::vector<VideoRecord>& records,
                                                  double train_fraction, int repeats,
                                                  uint64_t seed) {
  if (records.size() < 5) {
    throw ConfigError("random splits need at least 5 records, got " +
                      std::to_string(records.size()));
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  const size_t n = records.size();
  const auto n_train = std::clamp<size_t>(
      static_cast<size_t>(std::llround(train_fraction * static_cast<double>(n))), 1, n - 1);
  std::vector<std::vector<VideoRecord>> splits;
  for (int r = 0; r < repeats; ++r) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    seeded_shuffle(order, derive_seed(seed, 1000 + static_cast<uint64_t>(r)));
    std::vector<VideoRecord> split = records;
    for (size_t i = 0; i < n; ++i) {
      split[order[i]].split = i < n_train ? Split::train : Split::val;
    }
    splits.push_back(std::move(split));
  }
  return splits;
}

std::vector<fs::path> write_splits(const std::vector<std::vector<VideoRecord>>& splits,
                                   const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<fs::path> paths;
  for (size_t i = 0; i < splits.size(); ++i) {
    std::ostringstream name;
    name << "split_" << std::setw(2) << std::setfill('0') << i << ".csv";
    paths.push_back(out_dir / name.str());
    write_manifest(paths.back(), splits[i]);
  }
  return paths;
}

ProtocolResult run_split_protocol(const TrainConfig& config, int repeats, double train_fraction) {
  config.validate();
  if (config.checkpoint_dir.empty()) throw ConfigError("split protocol needs a checkpoint_dir");
  const auto records = load_manifest(config.manifest);
  const auto splits = make_splits(records, train_fraction, repeats, config.seed);
  const auto manifests = write_splits(splits, config.checkpoint_dir / "splits");
  ProtocolResult result;
  for (size_t i = 0; i < splits.size(); ++i) {
    TrainConfig run = config;
    run.manifest = manifests[i];
    run.checkpoint_dir = config.checkpoint_dir / manifests[i].stem();
    TrainResult trained = train(run);
    auto eval = evaluate_db(trained.best, splits[i], Split::val);
    eval.report.write_text(run.checkpoint_dir / "report.txt");
    result.per_split.push_back(eval.report);
  }
  result.mean = average_reports(result.per_split);
  return result;
}

}  // namespace ugcvqa
