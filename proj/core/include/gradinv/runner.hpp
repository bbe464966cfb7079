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
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradinv/config.hpp"

namespace gradinv::runner {

// Environment variable that overrides experiment.output_root.
inline constexpr const char* kOutputRootEnv = "GRADINV_OUTPUT_ROOT";

std::filesystem::path output_root(const config::ExperimentConfig& c);

struct MetricRow {
  std::string run_id;
  std::int64_t t = 0;
  std::string attack;
  std::string defense;
  double mse = 0.0;
  double psnr_db = 0.0;  // capped
  double ssim = 0.0;
  double perceptual_proxy = 0.0;
  double rci_partial = 0.0;
  double wall_s = 0.0;
  std::optional<std::int64_t> peak_mem_bytes;
};

extern const std::vector<std::string> kMetricColumns;

// Shortest text that parses back to the same double ("nan"/"inf" for
// non-finite values).
std::string format_double(double v);

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(const std::filesystem::path& path);

struct RunOptions {
  std::optional<std::filesystem::path> output_dir;
  bool force = false;
  bool quiet = false;
};

struct RunOutcome {
  std::filesystem::path run_dir;
  int repetitions = 0;
  int failed = 0;
};

// Full pipeline: train, capture, attack, score, write the run directory.
RunOutcome execute(const config::ExperimentConfig& c,
                   const std::string& config_text, const RunOptions& opts = {});

// Aggregates from metrics.csv, model_log.json and repetitions.json only.
nlohmann::json build_summary(const std::filesystem::path& run_dir);
// Rewrites summary.json from the run directory's files.
void write_summary(const std::filesystem::path& run_dir);

struct OfflineAttackOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> batch_size;
  std::optional<int> iterations;
  std::optional<std::int64_t> t;
  std::optional<std::filesystem::path> output_dir;
};

struct OfflineAttackOutcome {
  std::filesystem::path bundle_dir;
  nlohmann::json meta;
};

// Attack on archived observations. `dir` is one capture directory or a
// directory of t* captures.
OfflineAttackOutcome attack_archive(const std::filesystem::path& dir,
                                    const std::string& preset,
                                    const OfflineAttackOptions& opts = {});

// Command-line entry point. Returns 0 on success, 1 on runtime failure and
// 2 on configuration or usage errors.
int cli_main(int argc, const char* const* argv);

}  // namespace gradinv::runner
