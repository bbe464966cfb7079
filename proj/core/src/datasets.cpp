// Copyright 2026 The gradinv Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gradinv/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

#include "gradinv/errors.hpp"

namespace gradinv::datasets {
namespace {

constexpr std::int64_t kCifarSide = 32;
constexpr std::int64_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;

// HSV with s, v fixed, h in [0, 1).
void hue_to_rgb(double h, double s, double v, double rgb[3]) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  rgb[0] = r + m;
  rgb[1] = g + m;
  rgb[2] = b + m;
}

// Motif membership for pixel (y, x) in normalised coordinates relative to
// the motif centre (u, v in roughly [-1, 1] at the motif radius).
bool in_motif(int motif, double u, double v) {
  switch (motif % 8) {
    case 0:  // disc
      return u * u + v * v <= 1.0;
    case 1:  // square
      return std::fabs(u) <= 0.85 && std::fabs(v) <= 0.85;
    case 2:  // triangle
      return v <= 0.9 && v >= -0.9 && std::fabs(u) <= (v + 0.9) * 0.55;
    case 3:  // ring
      return u * u + v * v <= 1.0 && u * u + v * v >= 0.35;
    case 4:  // cross
      return (std::fabs(u) <= 0.3 && std::fabs(v) <= 1.0) ||
             (std::fabs(v) <= 0.3 && std::fabs(u) <= 1.0);
    case 5:  // horizontal bars
      return std::fabs(u) <= 1.0 && std::fabs(v) <= 1.0 &&
             static_cast<int>(std::floor((v + 1.0) * 2.5)) % 2 == 0;
    case 6:  // diamond
      return std::fabs(u) + std::fabs(v) <= 1.0;
    default:  // vertical bars
      return std::fabs(u) <= 1.0 && std::fabs(v) <= 1.0 &&
             static_cast<int>(std::floor((u + 1.0) * 2.5)) % 2 == 0;
  }
}

std::vector<char> read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

std::uint64_t ImageBatch::batch_id() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto id : ids) {
    for (int b = 0; b < 8; ++b) {
      h ^= static_cast<std::uint64_t>(id >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

Dataset::Dataset(std::int64_t channels, std::int64_t height,
                 std::int64_t width, std::int64_t num_classes,
                 std::vector<double> pixels, std::vector<int> labels)
    : channels_(channels),
      height_(height),
      width_(width),
      num_classes_(num_classes),
      pixels_(std::move(pixels)),
      labels_(std::move(labels)) {
  if (static_cast<std::int64_t>(pixels_.size()) !=
      size() * channels_ * height_ * width_) {
    throw FormatError("dataset pixel buffer does not match sample count");
  }
  for (double p : pixels_) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw FormatError("dataset pixel outside [0, 1]");
    }
  }
  for (int l : labels_) {
    if (l < 0 || l >= num_classes_) {
      throw FormatError("dataset label " + std::to_string(l) +
                        " outside [0, " + std::to_string(num_classes_) + ")");
    }
  }
}

std::span<const double> Dataset::image(std::int64_t i) const {
  if (i < 0 || i >= size()) throw Error("dataset index out of range");
  return std::span<const double>(pixels_).subspan(i * image_numel(),
                                                  image_numel());
}

ImageBatch Dataset::batch(std::span<const std::int64_t> ids) const {
  const auto b = static_cast<std::int64_t>(ids.size());
  std::vector<double> px;
  px.reserve(b * image_numel());
  ImageBatch out;
  for (auto id : ids) {
    auto img = image(id);
    px.insert(px.end(), img.begin(), img.end());
    out.labels.push_back(labels_[id]);
    out.ids.push_back(id);
  }
  out.pixels = Tensor::from_data({b, channels_, height_, width_}, std::move(px));
  return out;
}

Dataset Dataset::subset(std::span<const std::int64_t> ids) const {
  std::vector<double> px;
  std::vector<int> labels;
  for (auto id : ids) {
    auto img = image(id);
    px.insert(px.end(), img.begin(), img.end());
    labels.push_back(labels_[id]);
  }
  return Dataset(channels_, height_, width_, num_classes_, std::move(px),
                 std::move(labels));
}

std::pair<Dataset, Dataset> Dataset::split(std::int64_t holdout) const {
  if (holdout < 0 || holdout >= size()) {
    throw ConfigError("holdout size must be in [0, dataset size)");
  }
  std::vector<std::int64_t> head(size() - holdout), tail(holdout);
  std::iota(head.begin(), head.end(), 0);
  std::iota(tail.begin(), tail.end(), size() - holdout);
  return {subset(head), subset(tail)};
}

Dataset read_cifar10_file(const std::filesystem::path& file) {
  const auto bytes = read_file(file);
  const auto n = static_cast<std::int64_t>(bytes.size());
  if (n == 0 || n % kCifarRecord != 0) {
    const auto expected = std::max<std::int64_t>(1, (n + kCifarRecord - 1) /
                                                        kCifarRecord) *
                          kCifarRecord;
    throw FormatError("CIFAR-10 file " + file.string() + " has " +
                      std::to_string(n) + " bytes; expected a multiple of " +
                      std::to_string(kCifarRecord) + " (e.g. " +
                      std::to_string(expected) + ")");
  }
  const auto records = n / kCifarRecord;
  const auto plane = kCifarSide * kCifarSide;
  std::vector<double> px(records * 3 * plane);
  std::vector<int> labels(records);
  for (std::int64_t r = 0; r < records; ++r) {
    const auto* rec =
        reinterpret_cast<const unsigned char*>(bytes.data() + r * kCifarRecord);
    labels[r] = rec[0];
    if (labels[r] > 9) {
      throw FormatError("CIFAR-10 label byte " + std::to_string(labels[r]) +
                        " out of range in record " + std::to_string(r));
    }
    for (std::int64_t i = 0; i < 3 * plane; ++i) {
      px[r * 3 * plane + i] = rec[1 + i] / 255.0;
    }
  }
  return Dataset(3, kCifarSide, kCifarSide, 10, std::move(px),
                 std::move(labels));
}

void write_cifar10_file(const std::filesystem::path& file, const Dataset& data) {
  if (data.channels() != 3 || data.height() != kCifarSide ||
      data.width() != kCifarSide || data.num_classes() > 256) {
    throw FormatError("CIFAR-10 format needs 3x32x32 images");
  }
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write " + file.string());
  std::vector<unsigned char> rec(kCifarRecord);
  for (std::int64_t r = 0; r < data.size(); ++r) {
    rec[0] = static_cast<unsigned char>(data.label(r));
    auto img = data.image(r);
    for (std::size_t i = 0; i < img.size(); ++i) {
      rec[1 + i] = static_cast<unsigned char>(std::lround(img[i] * 255.0));
    }
    out.write(reinterpret_cast<const char*>(rec.data()), kCifarRecord);
  }
  if (!out) throw IoError("short write to " + file.string());
}

Dataset load_cifar10(const std::filesystem::path& path, Cifar10Split split) {
  if (std::filesystem::is_regular_file(path)) return read_cifar10_file(path);
  if (!std::filesystem::is_directory(path)) {
    throw IoError("CIFAR-10 path not found: " + path.string());
  }
  std::vector<std::filesystem::path> files;
  if (split == Cifar10Split::kTrain) {
    for (int i = 1; i <= 5; ++i) {
      files.push_back(path / ("data_batch_" + std::to_string(i) + ".bin"));
    }
  } else {
    files.push_back(path / "test_batch.bin");
  }
  std::vector<double> px;
  std::vector<int> labels;
  for (const auto& f : files) {
    auto part = read_cifar10_file(f);
    px.insert(px.end(), part.pixels().begin(), part.pixels().end());
    labels.insert(labels.end(), part.labels().begin(), part.labels().end());
  }
  return Dataset(3, kCifarSide, kCifarSide, 10, std::move(px),
                 std::move(labels));
}

Dataset synthetic_dataset(std::int64_t num_classes, std::int64_t size,
                          std::uint64_t seed, SyntheticShape shape) {
  if (num_classes < 1 || size < 1) {
    throw ConfigError("synthetic dataset needs num_classes >= 1 and size >= 1");
  }
  if (shape.channels != 1 && shape.channels != 3) {
    throw ConfigError("synthetic dataset supports 1 or 3 channels");
  }
  Rng rng(seed);
  std::vector<int> labels(size);
  for (std::int64_t i = 0; i < size; ++i) labels[i] = static_cast<int>(i % num_classes);
  std::shuffle(labels.begin(), labels.end(), rng);

  // Per-class background colour and a contrasting motif colour.
  std::vector<std::array<double, 3>> base(num_classes), fg(num_classes);
  for (std::int64_t k = 0; k < num_classes; ++k) {
    if (shape.channels == 3) {
      double rgb[3];
      hue_to_rgb(static_cast<double>(k) / num_classes, 0.8, 0.85, rgb);
      for (int c = 0; c < 3; ++c) {
        base[k][c] = rgb[c];
        fg[k][c] = 1.0 - rgb[c];
      }
    } else {
      const double level =
          num_classes == 1 ? 0.5 : 0.15 + 0.7 * k / (num_classes - 1.0);
      base[k] = {level, level, level};
      fg[k] = {1.0 - level, 1.0 - level, 1.0 - level};
    }
  }

  const auto h = shape.height, w = shape.width, ch = shape.channels;
  std::vector<double> px(size * ch * h * w);
  std::uniform_real_distribution<double> jitter(-0.12, 0.12);
  std::uniform_real_distribution<double> radius(0.25, 0.35);
  std::normal_distribution<double> noise(0.0, 0.03);
  for (std::int64_t i = 0; i < size; ++i) {
    const int k = labels[i];
    const double cy = (0.5 + jitter(rng)) * h;
    const double cx = (0.5 + jitter(rng)) * w;
    const double r = radius(rng) * std::min(h, w);
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        const double u = (x + 0.5 - cx) / r;
        const double v = (y + 0.5 - cy) / r;
        const bool on = in_motif(k, u, v);
        for (std::int64_t c = 0; c < ch; ++c) {
          const double value = (on ? fg[k][c] : base[k][c]) + noise(rng);
          px[((i * ch + c) * h + y) * w + x] = std::clamp(value, 0.0, 1.0);
        }
      }
    }
  }
  return Dataset(ch, h, w, num_classes, std::move(px), std::move(labels));
}

Batcher::Batcher(const Dataset& data, std::int64_t batch_size, bool repeated,
                 std::uint64_t seed, bool stratified)
    : data_(&data),
      batch_size_(batch_size),
      repeated_(repeated),
      stratified_(stratified),
      rng_(seed) {
  if (batch_size < 1 || batch_size > data.size()) {
    throw ConfigError("batch size must be in [1, dataset size]");
  }
}

std::vector<std::int64_t> Batcher::draw_stratified() {
  std::vector<std::vector<std::int64_t>> by_class(data_->num_classes());
  for (std::int64_t i = 0; i < data_->size(); ++i) {
    by_class[data_->label(i)].push_back(i);
  }
  std::vector<int> classes;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    if (!by_class[k].empty()) classes.push_back(static_cast<int>(k));
  }
  std::shuffle(classes.begin(), classes.end(), rng_);
  std::vector<std::int64_t> ids;
  std::size_t c = 0;
  int attempts = 0;
  while (static_cast<std::int64_t>(ids.size()) < batch_size_) {
    const auto& pool = by_class[classes[c % classes.size()]];
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::int64_t id = pool[pick(rng_)];
    const bool fresh = std::find(ids.begin(), ids.end(), id) == ids.end();
    if (fresh || ++attempts > 32) {
      ids.push_back(id);
      ++c;
      attempts = 0;
    }
  }
  return ids;
}

std::vector<std::int64_t> Batcher::draw_ids() {
  if (stratified_) return draw_stratified();
  const auto per_epoch = data_->size() / batch_size_;
  if (order_.empty() || cursor_ >= static_cast<std::size_t>(per_epoch)) {
    order_.resize(data_->size());
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }
  auto begin = order_.begin() + cursor_ * batch_size_;
  ++cursor_;
  return std::vector<std::int64_t>(begin, begin + batch_size_);
}

ImageBatch Batcher::next() {
  if (repeated_) {
    if (fixed_.empty()) fixed_ = draw_ids();
    return data_->batch(fixed_);
  }
  auto ids = draw_ids();
  return data_->batch(ids);
}

}  // namespace gradinv::datasets
