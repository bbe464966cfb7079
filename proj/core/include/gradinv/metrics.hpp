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
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gradinv/cost.hpp"
#include "gradinv/tensor.hpp"

namespace gradinv::metrics {

// PSNR values are capped at this many dB wherever they are serialised.
inline constexpr double kPsnrCap = 100.0;

// Single images are [C, H, W]; batches are [B, C, H, W].
double mse(std::span<const double> a, std::span<const double> b);
// +inf for identical inputs.
double psnr(std::span<const double> a, std::span<const double> b,
            double range = 1.0);
// Gaussian-window SSIM (11x11, sigma 1.5, valid region), averaged over
// channels. The window shrinks to the image when the image is smaller.
double ssim(std::span<const double> a, std::span<const double> b,
            std::int64_t channels, std::int64_t height, std::int64_t width,
            double range = 1.0);

// Distance between two images; lower is more similar.
using PerceptualFn = std::function<double(const Tensor& a, const Tensor& b)>;

// Fixed random three-layer conv extractor. Per layer, feature vectors are
// unit-normalised over channels at every position; the distance is the mean
// squared difference over positions, averaged over layers.
class PerceptualProxy {
 public:
  explicit PerceptualProxy(std::int64_t channels, std::uint64_t seed = 0x5eedULL);
  double operator()(const Tensor& a, const Tensor& b) const;

 private:
  std::vector<Tensor> features(const Tensor& x) const;
  std::vector<Tensor> weights_;
  std::int64_t channels_;
};

struct Assignment {
  std::vector<int> column_of_row;
  double cost = 0.0;
};

// Minimum-cost perfect matching on a square cost matrix (row-major n x n).
Assignment hungarian(std::span<const double> cost, std::size_t n);

struct MetricReport {
  // perm[i] = index of the recovered image matched to truth image i.
  std::vector<int> permutation;
  std::vector<double> mse, psnr_db, ssim, perceptual;
  double mean_mse = 0.0, mean_psnr_db = 0.0, mean_ssim = 0.0,
         mean_perceptual = 0.0;
  double wall_seconds = 0.0;
  std::optional<std::int64_t> peak_memory_bytes;
};

enum class AlignCost { kPerceptual, kMse };

// Matches recovered to truth images with the Hungarian method and scores
// the aligned pairs. Mean PSNR uses capped per-image values.
MetricReport hungarian_align(const Tensor& recovered, const Tensor& truth,
                             AlignCost cost = AlignCost::kPerceptual);

struct RecoveryCurve {
  std::vector<std::int64_t> t;
  std::vector<double> score;
  std::string metric = "perceptual_proxy";
};

// Trapezoidal area under the curve divided by the last timestamp. Needs at
// least two evenly spaced points.
double rci(const RecoveryCurve& curve);

}  // namespace gradinv::metrics
