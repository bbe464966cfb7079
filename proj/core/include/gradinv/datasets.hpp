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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gradinv/rng.hpp"
#include "gradinv/tensor.hpp"

namespace gradinv::datasets {

struct ImageBatch {
  Tensor pixels;  // [B, C, H, W], values in [0, 1]
  std::vector<int> labels;
  std::vector<std::int64_t> ids;

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
  // Stable identifier of the sample multiset+order (FNV-1a over ids).
  std::uint64_t batch_id() const;
};

// In-memory image classification dataset, immutable after construction.
class Dataset {
 public:
  Dataset(std::int64_t channels, std::int64_t height, std::int64_t width,
          std::int64_t num_classes, std::vector<double> pixels,
          std::vector<int> labels);

  std::int64_t size() const { return static_cast<std::int64_t>(labels_.size()); }
  std::int64_t channels() const { return channels_; }
  std::int64_t height() const { return height_; }
  std::int64_t width() const { return width_; }
  std::int64_t num_classes() const { return num_classes_; }
  std::int64_t image_numel() const { return channels_ * height_ * width_; }

  std::span<const double> image(std::int64_t i) const;
  int label(std::int64_t i) const { return labels_.at(i); }
  const std::vector<int>& labels() const { return labels_; }
  std::span<const double> pixels() const { return pixels_; }

  ImageBatch batch(std::span<const std::int64_t> ids) const;

  // First `size() - holdout` samples and the last `holdout` samples.
  std::pair<Dataset, Dataset> split(std::int64_t holdout) const;
  Dataset subset(std::span<const std::int64_t> ids) const;

 private:
  std::int64_t channels_, height_, width_, num_classes_;
  std::vector<double> pixels_;
  std::vector<int> labels_;
};

// Standard CIFAR-10 binary batch: 3073-byte records of one label byte and
// three 1024-byte channel planes. Pixels are scaled by 1/255.
Dataset read_cifar10_file(const std::filesystem::path& file);
// Inverse of read_cifar10_file; pixels are quantised to round(255 * v).
void write_cifar10_file(const std::filesystem::path& file, const Dataset& data);

enum class Cifar10Split { kTrain, kTest };

// Reads data_batch_{1..5}.bin (train) or test_batch.bin (test) from a
// directory; a path to a single file reads just that file.
Dataset load_cifar10(const std::filesystem::path& path,
                     Cifar10Split split = Cifar10Split::kTrain);

struct SyntheticShape {
  std::int64_t channels = 3;
  std::int64_t height = 16;
  std::int64_t width = 16;
};

// Class-conditioned procedural images: each class owns a base colour and a
// geometric motif; samples jitter motif position/size and add mild noise.
// Labels cycle through the classes (balanced to within one) in a seeded
// shuffled order. Deterministic in (num_classes, size, seed, shape).
Dataset synthetic_dataset(std::int64_t num_classes, std::int64_t size,
                          std::uint64_t seed, SyntheticShape shape = {});

// Batch stream over a dataset.
//
// repeated: the first batch drawn is returned on every call.
// otherwise: uniform sampling without replacement within an epoch (a fresh
// permutation per epoch; an incomplete tail is dropped).
// stratified: batches hold distinct labels whenever batch_size <= classes.
class Batcher {
 public:
  Batcher(const Dataset& data, std::int64_t batch_size, bool repeated,
          std::uint64_t seed, bool stratified = false);

  ImageBatch next();

 private:
  std::vector<std::int64_t> draw_ids();
  std::vector<std::int64_t> draw_stratified();

  const Dataset* data_;
  std::int64_t batch_size_;
  bool repeated_;
  bool stratified_;
  Rng rng_;
  std::vector<std::int64_t> order_;
  std::size_t cursor_ = 0;
  std::vector<std::int64_t> fixed_;
};

}  // namespace gradinv::datasets
