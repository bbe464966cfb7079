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

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gradinv/runner.hpp"
#include "test_util.hpp"

using namespace gradinv;
using namespace gradinv::runner;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"(
[experiment]
name = tiny
seed = 2
repetitions = 2
output_root = unused_root

[dataset]
kind = synthetic
classes = 4
size = 80
holdout = 16
height = 8
width = 8

[model]
conv1_channels = 3
conv2_channels = 4
kernel = 3
fc_width = 10

[train]
total_iterations = 20
attack_rate = 10
batch_size = 2
eval_interval = 10
eval_samples = 16

[attack]
presets = dlg, inverting_gradients
iterations = 3

[defense]
kind = none
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

int cli(const std::string& args, const fs::path& root = {}) {
  std::string cmd;
  if (!root.empty()) cmd += std::string(kOutputRootEnv) + "='" + root.string() + "' ";
  cmd += std::string("'") + GRADINV_CLI + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Csv, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3, 1e-300, -2.5, 123456789.0})
    EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_double(std::numeric_limits<double>::quiet_NaN()), "nan");
  EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
}

TEST(Csv, HeaderAndRoundTrip) {
  gradinv::testing::TempDir dir("csv");
  MetricRow r{"r0", 500, "dlg", "none", 0.01, 20.0, 0.5, 0.2, 0.3, 1.25, 4096};
  MetricRow s = r;
  s.t = 1000;
  s.peak_mem_bytes.reset();
  write_metrics_csv(dir.path() / "m.csv", {r, s});
  auto text = slurp(dir.path() / "m.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "run_id,t,attack,defense,mse,psnr_db,ssim,perceptual_proxy,rci_partial,wall_s,"
            "peak_mem_bytes");
  auto back = read_metrics_csv(dir.path() / "m.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].run_id, "r0");
  EXPECT_EQ(back[0].t, 500);
  EXPECT_EQ(back[0].ssim, 0.5);
  EXPECT_EQ(back[0].peak_mem_bytes, 4096);
  EXPECT_FALSE(back[1].peak_mem_bytes.has_value());
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli(""), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("run"), 2);
}

TEST(Cli, ValidateReportsWithoutWriting) {
  gradinv::testing::TempDir dir("validate");
  write(dir.path() / "ok.ini", kTiny);
  write(dir.path() / "bad.ini", std::string(kTiny) + "\n[bogus]\nk = v\n");
  const auto root = dir.path() / "out";
  EXPECT_EQ(cli("validate '" + (dir.path() / "ok.ini").string() + "'", root), 0);
  EXPECT_EQ(cli("validate '" + (dir.path() / "bad.ini").string() + "'", root), 2);
  EXPECT_EQ(cli("run '" + (dir.path() / "bad.ini").string() + "'", root), 2);
  EXPECT_FALSE(fs::exists(root));
}

TEST(Cli, MissingInputsAreRuntimeFailures) {
  EXPECT_EQ(cli("report /nonexistent/run"), 1);
  EXPECT_EQ(cli("attack /nonexistent/obs dlg"), 1);
}

TEST(Cli, RunReportAndOfflineAttack) {
  gradinv::testing::TempDir dir("run");
  write(dir.path() / "tiny.ini", kTiny);
  const auto root = dir.path() / "runs";
  ASSERT_EQ(cli("run -q '" + (dir.path() / "tiny.ini").string() + "'", root), 0);

  // The environment override wins over experiment.output_root.
  const auto run = root / "tiny";
  ASSERT_TRUE(fs::exists(run / "metrics.csv"));
  EXPECT_FALSE(fs::exists(dir.path() / "unused_root"));
  EXPECT_TRUE(fs::exists(run / "summary.json"));
  EXPECT_TRUE(fs::exists(run / "config.ini"));
  EXPECT_TRUE(fs::is_directory(run / "grids"));
  EXPECT_TRUE(fs::is_directory(run / "observations"));

  // 2 repetitions x 2 attacks x 2 captures.
  auto rows = read_metrics_csv(run / "metrics.csv");
  EXPECT_EQ(rows.size(), 8u);

  // An existing run directory is refused without --force.
  EXPECT_NE(cli("run -q '" + (dir.path() / "tiny.ini").string() + "'", root), 0);

  // report regenerates the same summary.
  const auto before = slurp(run / "summary.json");
  fs::remove(run / "summary.json");
  ASSERT_EQ(cli("report '" + run.string() + "'"), 0);
  EXPECT_EQ(slurp(run / "summary.json"), before);
  ASSERT_EQ(cli("report '" + run.string() + "'"), 0);
  EXPECT_EQ(slurp(run / "summary.json"), before);

  auto summary = nlohmann::json::parse(before);
  EXPECT_TRUE(summary.is_object());

  // Offline attack on one archived capture.
  fs::path capture;
  for (auto& e : fs::recursive_directory_iterator(run / "observations"))
    if (e.is_regular_file() && e.path().filename() == "gradients.bin") {
      capture = e.path().parent_path();
      break;
    }
  ASSERT_FALSE(capture.empty());
  const auto bundle = dir.path() / "bundle";
  ASSERT_EQ(cli("attack '" + capture.string() + "' dlg --iterations 2 -o '" + bundle.string() +
                "'"),
            0);
  EXPECT_TRUE(fs::exists(bundle / "meta.json"));
  EXPECT_TRUE(fs::exists(bundle / "recovered.bin"));
  EXPECT_EQ(cli("attack '" + capture.string() + "' nonsense"), 2);
}
