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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradinv/models.hpp"
#include "gradinv/observation.hpp"
#include "gradinv/tensor.hpp"

namespace gradinv::attacks {

enum class Distance { kL2, kCosine };
enum class Optimizer { kLbfgs, kAdam };
enum class SeedSelection { kConsensus, kBestOf };
// Estimate of the summed softmax outputs per class in the label count
// formula: B / K (uniform) or the dummy batch's predictions (dummy).
enum class LabelPrior { kUniform, kDummy };

struct AttackConfig {
  std::string name = "custom";
  Distance distance = Distance::kL2;
  Optimizer optimizer = Optimizer::kLbfgs;
  // Base coefficients. The effective value is alpha * F / B, or alpha / B
  // when scale_by_image_size is off.
  double alpha_tv = 0.0;
  double alpha_l2 = 0.0;
  double alpha_bn = 0.0;
  double alpha_group = 0.0;
  bool scale_by_image_size = true;
  int seeds = 1;
  int iterations = 50;
  bool multi_observation = false;
  int max_pairs = 20;
  double lr = 0.1;  // adam only
  SeedSelection seed_selection = SeedSelection::kBestOf;
  // Average 1 - cos over layers instead of one global angle.
  bool per_layer_cosine = false;
  LabelPrior label_prior = LabelPrior::kDummy;
  // Parallel workers for seeds; 0 picks the hardware default.
  int workers = 0;

  void validate() const;
};

// Table of the four named attacks: dlg, inverting_gradients, gradinversion,
// multiple_updates.
AttackConfig preset(const std::string& name);
std::vector<std::string> preset_names();

nlohmann::json to_json(const AttackConfig& c);
AttackConfig attack_config_from_json(const nlohmann::json& j);
std::string to_string(Distance d);
std::string to_string(Optimizer o);
std::string to_string(SeedSelection s);
std::string to_string(LabelPrior p);

struct Coefficients {
  double tv = 0.0, l2 = 0.0, bn = 0.0, group = 0.0;
};

// F = H * W / 32^2.
double image_size_factor(std::int64_t height, std::int64_t width);
Coefficients scaled_coefficients(const AttackConfig& c, std::int64_t height,
                                 std::int64_t width, std::int64_t batch);

struct LabelRecovery {
  std::vector<int> labels;  // sorted multiset
  std::vector<double> raw_counts;
  bool degenerate = false;
};

// Label-count estimate from the final FC gradient. `seed` drives the dummy
// batch used to estimate the mean feature sum.
LabelRecovery recover_labels(const Observation& obs, std::int64_t batch_size,
                             std::uint64_t seed,
                             LabelPrior prior = LabelPrior::kDummy);

struct DistanceResult {
  Tensor value;
  bool zero_norm_target = false;
};

DistanceResult gradient_distance(std::span<const Tensor> dummy,
                                 std::span<const Tensor> target, Distance d,
                                 bool per_layer = false);

Tensor tv_loss(const Tensor& x);
Tensor bn_prior(const std::vector<ops::BatchStats>& batch,
                const models::BNStats& reference);
Tensor group_loss(const Tensor& x, const Tensor& consensus);

// Scaled regularisation sum. `bn_batch` holds the dummy forward's moments;
// `consensus` may be undefined when the group term is off.
Tensor total_regularization(const Tensor& x, const Coefficients& k,
                            const std::vector<ops::BatchStats>& bn_batch,
                            const models::BNStats& reference,
                            const Tensor& consensus);

struct SeedTrace {
  std::vector<double> losses;  // objective value after each iteration
  double final_loss = 0.0;
  int restarts = 0;
  bool failed = false;
};

struct RecoveryResult {
  Tensor recovered;  // clamped to [0, 1]
  Tensor raw;        // unclamped optimiser output
  std::vector<int> labels;
  bool labels_degenerate = false;
  double final_loss = 0.0;
  int chosen_seed = -1;
  std::vector<SeedTrace> seeds;
  double wall_seconds = 0.0;
  std::optional<std::int64_t> peak_memory_bytes;
  std::int64_t tensor_peak_bytes = 0;
  int iterations = 0;
  int pairs_used = 0;
  bool failed = false;
  bool zero_norm_target = false;
  std::string diagnostics;
};

struct AttackInputs {
  // Observations oldest first. The latest one is the single-observation
  // target; multi-observation attacks use the most recent max_pairs.
  std::span<const Observation> observations;
  std::int64_t batch_size = 1;
  std::uint64_t seed = 0;
  // Overrides label recovery (used when the labels are known).
  std::optional<std::vector<int>> labels;
  // Overrides the random initial batch for every seed.
  std::optional<Tensor> init;
};

RecoveryResult run_attack(const AttackInputs& in, const AttackConfig& config);

// Objective of one seed at x (gradient matching + regularisers), exposed for
// tests. Returns the scalar loss graph.
struct ObjectiveParts {
  Tensor total;
  Tensor matching;
  Tensor regularization;
  bool zero_norm_target = false;
};
ObjectiveParts attack_objective(std::span<const Observation> pairs,
                                const Tensor& x, std::span<const int> labels,
                                const AttackConfig& config,
                                const Coefficients& k, const Tensor& consensus,
                                const std::optional<Tensor>& precode_eps);

}  // namespace gradinv::attacks
