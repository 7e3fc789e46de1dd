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
#include "ugcvqa/media_ingest.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

namespace ugcvqa {
namespace fs = std::filesystem;

namespace {

constexpr double kTimeEps = 1e-9;

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool is_image_file(const fs::path& p) {
  static const std::set<std::string> kExt = {".png", ".jpg",  ".jpeg", ".bmp",
                                             ".tif", ".tiff", ".ppm",  ".pgm"};
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return kExt.count(ext) != 0;
}

Tensor<float> mat_to_tensor(const cv::Mat& bgr, const std::string& source) {
  cv::Mat img = bgr;
  if (img.empty()) throw IngestError(source + ": empty frame");
  if (img.channels() == 1) cv::cvtColor(img, img, cv::COLOR_GRAY2BGR);
  if (img.channels() == 4) cv::cvtColor(img, img, cv::COLOR_BGRA2BGR);
  if (img.depth() != CV_8U && img.depth() != CV_16U) {
    throw IngestError(source + ": unsupported pixel depth");
  }
  const int64_t h = img.rows, w = img.cols;
  Tensor<float> out(Shape{3, h, w});
  // Exact v / max so every ingest path maps a pixel to the same float.
  auto fill = [&]<typename P>(float max_value) {
    for (int64_t y = 0; y < h; ++y) {
      const auto* row = img.ptr<cv::Vec<P, 3>>(static_cast<int>(y));
      for (int64_t x = 0; x < w; ++x) {
        // BGR -> RGB
        out.at(0, y, x) = static_cast<float>(row[x][2]) / max_value;
        out.at(1, y, x) = static_cast<float>(row[x][1]) / max_value;
        out.at(2, y, x) = static_cast<float>(row[x][0]) / max_value;
      }
    }
  };
  if (img.depth() == CV_8U) {
    fill.operator()<uint8_t>(255.0f);
  } else {
    fill.operator()<uint16_t>(65535.0f);
  }
  return out;
}

std::vector<fs::path> list_frames(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  return files;
}

void check_interval(double interval) {
  if (!(interval > 0.0) || !std::isfinite(interval)) {
    throw IngestError("sampling interval must be positive, got " +
                      std::to_string(interval));
  }
}

FrameSequence sample_directory(const fs::path& dir, double interval,
                               std::optional<double> fps) {
  if (!fps || !(*fps > 0.0)) {
    throw IngestError(dir.string() +
                      ": frame directories need a positive fps in the manifest");
  }
  const auto files = list_frames(dir);
  if (files.empty()) {
    throw IngestError(dir.string() + ": zero-duration media (no frames)");
  }
  auto schedule =
      sample_schedule(static_cast<int64_t>(files.size()), *fps, interval);
  FrameSequence seq;
  for (const auto& point : schedule) {
    seq.frames.push_back(read_image(files[static_cast<size_t>(point.frame_index)]));
    seq.timestamps.push_back(point.timestamp);
  }
  return seq;
}

// Decodes every frame once but keeps only those the schedule can pick
// (plus the last one, which absorbs clamped indices), so memory stays
// bounded by the sample count rather than the clip length.
FrameSequence sample_container(const std::string& path, double interval,
                               std::optional<double> fps_override) {
  cv::VideoCapture cap(path, cv::CAP_FFMPEG);
  if (!cap.isOpened()) throw IngestError(path + ": cannot decode media");
  double fps = fps_override.value_or(cap.get(cv::CAP_PROP_FPS));
  if (!(fps > 0.0) || !std::isfinite(fps)) {
    throw IngestError(path + ": container reports no frame rate; set fps");
  }
  std::map<int64_t, cv::Mat> kept;
  cv::Mat frame, last;
  int64_t count = 0;
  int64_t k = 0;
  auto boundary_index = [&](int64_t n) {
    return static_cast<int64_t>(
        std::ceil(static_cast<double>(n) * interval * fps - kTimeEps));
  };
  while (cap.read(frame)) {
    bool wanted = false;
    while (boundary_index(k) <= count) {
      wanted = wanted || boundary_index(k) == count;
      ++k;
    }
    if (wanted) kept[count] = frame.clone();
    last = frame.clone();
    ++count;
  }
  if (count == 0) {
    throw IngestError(path + ": zero-duration media (no decodable frames)");
  }
  kept[count - 1] = last;
  const auto schedule = sample_schedule(count, fps, interval);
  FrameSequence seq;
  for (const auto& point : schedule) {
    seq.frames.push_back(mat_to_tensor(kept.at(point.frame_index), path));
    seq.timestamps.push_back(point.timestamp);
  }
  return seq;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

// Splits one CSV line; double-quoted fields may contain commas.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string resolve(const std::string& p, const fs::path& base) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return path.lexically_normal().string();
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw ParseError("unknown split '" + std::string(text) +
                   "' (expected train, val or test)");
}

std::vector<SamplePoint> sample_schedule(int64_t frame_count, double fps,
                                         double interval) {
  check_interval(interval);
  if (frame_count <= 0) throw IngestError("zero-duration media");
  if (!(fps > 0.0)) throw IngestError("fps must be positive");
  const double duration = static_cast<double>(frame_count) / fps;
  const auto samples = std::max<int64_t>(
      1, static_cast<int64_t>(std::ceil(duration / interval - kTimeEps)));
  std::vector<SamplePoint> points;
  points.reserve(static_cast<size_t>(samples));
  for (int64_t k = 0; k < samples; ++k) {
    const double t = static_cast<double>(k) * interval;
    auto index = static_cast<int64_t>(std::ceil(t * fps - kTimeEps));
    index = std::clamp<int64_t>(index, 0, frame_count - 1);
    points.push_back({index, t});
  }
  return points;
}

Tensor<float> read_image(const fs::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) throw IngestError(path.string() + ": cannot decode image");
  return mat_to_tensor(img, path.string());
}

void write_image(const fs::path& path, const Tensor<float>& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) {
    throw ShapeError("write_image expects (3,H,W), got " + shape_str(rgb.shape()));
  }
  const int h = static_cast<int>(rgb.dim(1)), w = static_cast<int>(rgb.dim(2));
  cv::Mat img(h, w, CV_8UC3);
  auto to_u8 = [](float v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  };
  for (int y = 0; y < h; ++y) {
    auto* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      row[x] = cv::Vec3b(to_u8(rgb.at(2, y, x)), to_u8(rgb.at(1, y, x)),
                         to_u8(rgb.at(0, y, x)));
    }
  }
  if (!cv::imwrite(path.string(), img)) {
    throw IngestError(path.string() + ": cannot write image");
  }
}

FrameSequence decode_and_sample(const std::string& media_path, double interval,
                                std::optional<double> fps) {
  check_interval(interval);
  std::error_code ec;
  if (fs::is_directory(media_path, ec)) {
    return sample_directory(media_path, interval, fps);
  }
  if (!fs::exists(media_path, ec)) {
    throw IngestError(media_path + ": media file does not exist");
  }
  return sample_container(media_path, interval, fps);
}

FrameSequence decode_and_sample(const VideoRecord& record, double interval) {
  return decode_and_sample(record.media_path, interval, record.fps);
}

std::pair<FrameSequence, FrameSequence> decode_and_sample_pair(
    const VideoRecord& record, double interval) {
  if (!record.reference_path) {
    throw IngestError(record.media_path + ": record has no reference");
  }
  FrameSequence dist = decode_and_sample(record, interval);
  FrameSequence ref =
      decode_and_sample(*record.reference_path, interval, record.fps);
  // Same boundary rule on both sides; a shorter reference repeats its last
  // frame, a longer one is truncated.
  if (ref.size() > dist.size()) {
    ref.frames.resize(dist.size());
    ref.timestamps.resize(dist.size());
  }
  while (ref.size() < dist.size()) {
    ref.frames.push_back(ref.frames.back());
    ref.timestamps.push_back(dist.timestamps[ref.timestamps.size()]);
  }
  return {std::move(dist), std::move(ref)};
}

Tensor<float> resize_min_dim(const Tensor<float>& frame, int min_dim) {
  if (frame.rank() != 3) {
    throw ShapeError("expected a (C,H,W) frame, got " + shape_str(frame.shape()));
  }
  const int64_t channels = frame.dim(0), h = frame.dim(1), w = frame.dim(2);
  if (h < 1 || w < 1) throw ShapeError("frame has an empty dimension");
  if (min_dim < 1) throw ConfigError("min_dim must be positive");
  int64_t out_h, out_w;
  if (h <= w) {
    out_h = min_dim;
    out_w = std::lround(static_cast<double>(w) * min_dim / static_cast<double>(h));
  } else {
    out_w = min_dim;
    out_h = std::lround(static_cast<double>(h) * min_dim / static_cast<double>(w));
  }
  if (out_h == h && out_w == w) return frame;
  Tensor<float> out(Shape{channels, out_h, out_w});
  for (int64_t c = 0; c < channels; ++c) {
    const cv::Mat src(static_cast<int>(h), static_cast<int>(w), CV_32FC1,
                      const_cast<float*>(frame.data()) + c * h * w);
    cv::Mat dst(static_cast<int>(out_h), static_cast<int>(out_w), CV_32FC1,
                out.data() + c * out_h * out_w);
    cv::resize(src, dst, dst.size(), 0, 0, cv::INTER_LINEAR);
  }
  return out;
}

CropOffset CropPolicy::offset(int64_t height, int64_t width,
                              int crop_size) const {
  if (crop_size > height || crop_size > width) {
    throw ShapeError("crop size " + std::to_string(crop_size) +
                     " exceeds resized frame " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  const int64_t range_y = height - crop_size, range_x = width - crop_size;
  if (!random_) return {range_y / 2, range_x / 2};
  const uint64_t a = splitmix64(seed_);
  const uint64_t b = splitmix64(a);
  return {static_cast<int64_t>(a % static_cast<uint64_t>(range_y + 1)),
          static_cast<int64_t>(b % static_cast<uint64_t>(range_x + 1))};
}

uint64_t crop_seed(uint64_t master_seed, std::string_view video_id,
                   int64_t epoch) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : video_id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(master_seed ^ splitmix64(h ^ splitmix64(static_cast<uint64_t>(epoch))));
}

Tensor<float> crop(const Tensor<float>& frame, CropOffset offset,
                   int crop_size) {
  const int64_t channels = frame.dim(0), h = frame.dim(1), w = frame.dim(2);
  if (offset.y < 0 || offset.x < 0 || offset.y + crop_size > h ||
      offset.x + crop_size > w) {
    throw ShapeError("crop window outside frame " + shape_str(frame.shape()));
  }
  Tensor<float> out(Shape{channels, crop_size, crop_size});
  for (int64_t c = 0; c < channels; ++c) {
    for (int64_t y = 0; y < crop_size; ++y) {
      const float* src = &frame.at(c, offset.y + y, offset.x);
      std::copy(src, src + crop_size, &out.at(c, y, 0));
    }
  }
  return out;
}

Tensor<float> preprocess(const Tensor<float>& frame, int min_dim,
                         const CropPolicy& policy, int crop_size) {
  if (crop_size > min_dim) {
    throw ConfigError("crop size " + std::to_string(crop_size) +
                      " exceeds resized min dimension " + std::to_string(min_dim));
  }
  Tensor<float> resized = resize_min_dim(frame, min_dim);
  const auto offset = policy.offset(resized.dim(1), resized.dim(2), crop_size);
  return crop(resized, offset, crop_size);
}

FrameSequence preprocess_sequence(const FrameSequence& sequence, int min_dim,
                                  const CropPolicy& policy, int crop_size) {
  FrameSequence out;
  out.timestamps = sequence.timestamps;
  for (const auto& frame : sequence.frames) {
    out.frames.push_back(preprocess(frame, min_dim, policy, crop_size));
  }
  for (size_t i = 1; i < out.frames.size(); ++i) {
    if (out.frames[i].shape() != out.frames[0].shape()) {
      throw IngestError("frames of one video have different sizes");
    }
  }
  return out;
}

std::vector<VideoRecord> load_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError(path.string() + ": cannot open manifest");
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");

  std::string line;
  int64_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!trim(line).empty()) {
      header = split_csv(line);
      break;
    }
  }
  const std::vector<std::string> expected = {"media_path", "reference_path", "mos",
                                             "split", "fps"};
  if (header != expected) {
    throw ParseError(path.string() +
                     ": manifest header must be media_path,reference_path,mos,split,fps");
  }

  std::vector<VideoRecord> records;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto where = path.string() + ": row at line " + std::to_string(line_no);
    auto fields = split_csv(line);
    if (fields.size() == 4) fields.emplace_back();
    if (fields.size() != 5) {
      throw ParseError(where + " has " + std::to_string(fields.size()) +
                       " columns, expected 5");
    }
    VideoRecord rec;
    if (fields[0].empty()) throw ParseError(where + " is missing media_path");
    rec.media_path = resolve(fields[0], base);
    if (!fields[1].empty()) rec.reference_path = resolve(fields[1], base);
    if (fields[2].empty()) throw ParseError(where + " is missing mos");
    try {
      size_t used = 0;
      rec.mos = std::stod(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError(where + " has a non-numeric mos '" + fields[2] + "'");
    }
    if (!std::isfinite(rec.mos)) throw ParseError(where + " has a non-finite mos");
    if (fields[3].empty()) throw ParseError(where + " is missing split");
    try {
      rec.split = parse_split(fields[3]);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!fields[4].empty()) {
      double fps = 0.0;
      try {
        fps = std::stod(fields[4]);
      } catch (const std::exception&) {
        throw ParseError(where + " has a non-numeric fps '" + fields[4] + "'");
      }
      if (!(fps > 0.0) || !std::isfinite(fps)) {
        throw ParseError(where + " has a non-positive fps");
      }
      rec.fps = fps;
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw ParseError(path.string() + ": manifest has no rows");
  return records;
}

void write_manifest(const fs::path& path, const std::vector<VideoRecord>& records) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os << "media_path,reference_path,mos,split,fps\n";
  os.precision(17);
  for (const auto& r : records) {
    os << csv_field(r.media_path) << ',' << csv_field(r.reference_path.value_or(""))
       << ',' << r.mos << ',' << to_string(r.split) << ',';
    if (r.fps) os << *r.fps;
    os << '\n';
  }
}

}  // namespace ugcvqa
