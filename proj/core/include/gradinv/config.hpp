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
#include <string>
#include <vector>

#include "gradinv/attacks.hpp"
#include "gradinv/defenses.hpp"
#include "gradinv/fedsim.hpp"
#include "gradinv/metrics.hpp"
#include "gradinv/models.hpp"

namespace gradinv::config {

enum class DatasetKind { kSynthetic, kCifar10 };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::kSynthetic;
  std::string path;  // cifar10 only
  std::int64_t classes = 4;
  std::int64_t size = 1200;  // synthetic: total samples including holdout
  std::int64_t channels = 3;
  std::int64_t height = 16;
  std::int64_t width = 16;
  std::int64_t holdout = 200;
  std::uint64_t seed = 0;
};

enum class RepetitionMode { kFull, kAttackSeed };

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  int repetitions = 5;
  RepetitionMode repetition_mode = RepetitionMode::kFull;
  std::string output_root = "runs";
  int workers = 0;
  bool save_observations = true;
  metrics::AlignCost align_cost = metrics::AlignCost::kPerceptual;

  DatasetConfig dataset;
  models::ModelSpec model;
  fedsim::TrainConfig train;
  std::vector<attacks::AttackConfig> attacks;
  bool known_labels = false;
  defenses::DefenseConfig defense;
};

// Parses the sectioned key = value format. Unknown sections or keys, bad
// values and failed cross-checks raise ConfigError.
ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text);

void validate(const ExperimentConfig& config);

}  // namespace gradinv::config
