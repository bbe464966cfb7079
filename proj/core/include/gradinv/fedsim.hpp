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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradinv/datasets.hpp"
#include "gradinv/defenses.hpp"
#include "gradinv/models.hpp"
#include "gradinv/observation.hpp"

namespace gradinv::fedsim {

using datasets::Batcher;
using datasets::Dataset;
using datasets::ImageBatch;

struct TrainConfig {
  double lr = 0.01;
  std::int64_t total_iterations = 10000;
  std::int64_t attack_rate = 500;
  std::int64_t batch_size = 8;
  bool repeated_batch = true;
  int clients = 1;
  std::uint64_t seed = 0;
  // Also capture the untrained weights (recorded as t = 0).
  bool include_initial = false;
  std::int64_t eval_interval = 500;
  std::int64_t eval_samples = 1000;
  bool stratified = false;

  void validate() const;
};

struct ClientUpdate {
  models::GradientSet wire;  // what leaves the client
  double loss = 0.0;
  std::vector<ops::BatchStats> bn_batch;
  bool defense_fell_back = false;
};

// Gradients of the mean cross-entropy of one batch, passed through the
// client-side defense.
ClientUpdate client_step(const models::ParameterSet& params,
                         const ImageBatch& batch,
                         const defenses::DefenseConfig& defense, Rng& rng);

// params <- params - lr * mean(updates). Parameters are replaced, never
// mutated in place, so earlier snapshots stay intact.
void server_aggregate_and_update(models::ParameterSet& params,
                                 std::span<const models::GradientSet> updates,
                                 double lr);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalResult evaluate_model(const models::ParameterSet& params,
                          const Dataset& data, std::int64_t max_samples);

struct ModelLogRow {
  std::int64_t t = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;
  double eval_accuracy = 0.0;
};

// Called once per captured round with the observation and the attacked
// client's true batch (for evaluation only).
using AttackHook = std::function<void(const Observation&, const ImageBatch&)>;

struct TrainingResult {
  models::ParameterSet final_model;
  std::vector<Observation> observations;
  std::vector<ImageBatch> truths;
  std::vector<ModelLogRow> log;
  bool halted = false;
  std::string halt_reason;
  std::int64_t completed_iterations = 0;
};

TrainingResult run_training(const TrainConfig& config,
                            models::ParameterSet initial, const Dataset& train,
                            const Dataset& holdout,
                            const defenses::DefenseConfig& defense,
                            const AttackHook& hook = {});

// Observation archive: weights.bin, gradients.bin, meta.json and optionally
// truth.bin in one directory.
void save_observation(const std::filesystem::path& dir, const Observation& obs,
                      const ImageBatch* truth = nullptr,
                      const nlohmann::json& extra_meta = nlohmann::json::object());
Observation load_observation(const std::filesystem::path& dir);
std::optional<ImageBatch> load_truth(const std::filesystem::path& dir);

}  // namespace gradinv::fedsim
