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

// Acceptance checks, one per numbered criterion. Each prints a single
// "criterion N PASS|FAIL: ..." line; the exit status is non-zero if any
// selected criterion fails. Tolerances are fixed here and nowhere else.
//
//   acceptance                 run all criteria
//   acceptance --criterion N   run one

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gradcheck.hpp"
#include "gradinv/attacks.hpp"
#include "gradinv/config.hpp"
#include "gradinv/datasets.hpp"
#include "gradinv/fedsim.hpp"
#include "gradinv/metrics.hpp"
#include "gradinv/runner.hpp"
#include "test_util.hpp"

using namespace gradinv;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string desk_text() { return slurp(fs::path(GRADINV_SOURCE_DIR) / "configs" / "desk.ini"); }

// Sets `key = value` inside [section], replacing an existing line or
// appending one at the end of the section.
std::string set_key(const std::string& text, const std::string& section, const std::string& key,
                    const std::string& value) {
  std::istringstream in(text);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  std::string current;
  long insert_at = -1;
  bool done = false;
  auto trim = [](std::string s) {
    s.erase(0, s.find_first_not_of(" \t"));
    s.erase(s.find_last_not_of(" \t\r") + 1);
    return s;
  };
  for (std::size_t i = 0; i < lines.size() && !done; ++i) {
    const auto t = trim(lines[i]);
    if (!t.empty() && t.front() == '[') {
      if (current == section) break;
      current = t.substr(1, t.size() - 2);
      if (current == section) insert_at = static_cast<long>(i) + 1;
      continue;
    }
    if (current != section) continue;
    if (!t.empty() && t.front() != ';' && t.front() != '#') insert_at = static_cast<long>(i) + 1;
    const auto eq = t.find('=');
    if (eq != std::string::npos && trim(t.substr(0, eq)) == key) {
      lines[i] = key + " = " + value;
      done = true;
    }
  }
  if (!done) {
    if (insert_at < 0) throw std::logic_error("section missing: " + section);
    lines.insert(lines.begin() + insert_at, key + " = " + value);
  }
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

std::vector<runner::MetricRow> run_in_process(const std::string& text, const fs::path& dir) {
  const auto cfg = config::parse_config_text(text);
  runner::RunOptions o;
  o.output_dir = dir;
  o.force = true;
  o.quiet = true;
  const auto outcome = runner::execute(cfg, text, o);
  if (outcome.failed > 0)
    throw std::runtime_error(std::to_string(outcome.failed) + " repetitions failed");
  return runner::read_metrics_csv(dir / "metrics.csv");
}

double mean_ssim(const std::vector<runner::MetricRow>& rows, const std::string& attack) {
  double s = 0;
  int n = 0;
  for (const auto& r : rows)
    if (r.attack == attack) {
      s += r.ssim;
      ++n;
    }
  return n ? s / n : std::nan("");
}

struct Capture {
  Observation obs;
  datasets::ImageBatch truth;
};

Capture capture(const models::ModelSpec& spec, std::int64_t b, std::uint64_t seed,
                bool stratified) {
  auto data = datasets::synthetic_dataset(spec.num_classes, std::max<std::int64_t>(64, 8 * b),
                                          seed, {spec.channels, spec.height, spec.width});
  datasets::Batcher batcher(data, b, false, seed, stratified);
  auto batch = batcher.next();
  auto p = models::init_parameters(spec, seed + 1000);
  Rng rng(seed);
  auto u = fedsim::client_step(p, batch, {}, rng);
  return {Observation{0, p, u.wire, batch.batch_id(), 0}, batch};
}

// --- criteria ---------------------------------------------------------------

Verdict autodiff_vs_finite_differences() {
  const auto t0 = Clock::now();
  const auto cases = gradinv::testing::all_op_cases();
  double worst1 = 0, worst2 = 0;
  std::string worst1_op, worst2_op;
  int ops_checked = 0, second_checked = 0;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    std::mt19937_64 rng(7000 + i);
    for (int trial = 0; trial < 50; ++trial) {
      const auto r = gradinv::testing::check_op(cases[i], rng);
      if (r.first > worst1) worst1 = r.first, worst1_op = cases[i].name;
      if (cases[i].second_order && r.second > worst2) worst2 = r.second, worst2_op = cases[i].name;
    }
    ++ops_checked;
    second_checked += cases[i].second_order;
  }
  const double wall = seconds_since(t0);
  Verdict v;
  v.pass = worst1 <= 1e-4 && worst2 <= 1e-3 && wall < 60.0;
  v.detail = std::to_string(ops_checked) + " ops x 50 tensors (" + std::to_string(second_checked) +
             " with second order); worst first-order rel err " + fmt("%.2e", worst1) + " (" +
             worst1_op + "), worst second-order " + fmt("%.2e", worst2) + " (" + worst2_op +
             "); " + fmt("%.1f", wall) + " s";
  return v;
}

Verdict fixed_point() {
  models::ModelSpec spec;  // full-size LeNet, 32x32, 10 classes
  double worst = 0;
  int checks = 0;
  for (std::int64_t b : {1, 4, 8}) {
    const auto c = capture(spec, b, 11 + b, false);
    std::vector<Observation> pairs{c.obs};
    for (auto d : {attacks::Distance::kL2, attacks::Distance::kCosine}) {
      auto cfg = attacks::preset("dlg");
      cfg.distance = d;
      const auto parts = attacks::attack_objective(pairs, c.truth.pixels, c.truth.labels, cfg,
                                                   {}, Tensor(), std::nullopt);
      worst = std::max(worst, std::fabs(parts.matching.item()));
      ++checks;
    }
  }
  return {worst <= 1e-10, std::to_string(checks) + " (B, distance) cases; max L_grad at truth " +
                              fmt("%.2e", worst) + " (limit 1e-10)"};
}

Verdict dlg_small_mlp() {
  const auto t0 = Clock::now();
  models::ModelSpec spec;
  spec.arch = models::Architecture::kMlp;
  spec.height = spec.width = 8;
  spec.batch_norm = false;
  int ok = 0;
  std::string mses;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto c = capture(spec, 1, 300 + seed, false);
    std::vector<Observation> obs{c.obs};
    attacks::AttackInputs in{obs, 1, seed};
    auto cfg = attacks::preset("dlg");
    cfg.iterations = 200;
    const auto r = attacks::run_attack(in, cfg);
    const double m = metrics::mse(r.recovered.data(), c.truth.pixels.data());
    ok += m <= 1e-3;
    mses += (seed ? ", " : "") + fmt("%.1e", m);
  }
  const double wall = seconds_since(t0);
  return {ok >= 4 && wall < 120.0, std::to_string(ok) + "/5 seeds reach MSE <= 1e-3 (" + mses +
                                       "); " + fmt("%.1f", wall) + " s"};
}

Verdict label_recovery() {
  models::ModelSpec spec;  // 32x32, 10 classes
  std::string detail;
  bool pass = true;
  for (std::int64_t b : {1, 2, 4, 8}) {
    int ok = 0;
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
      const std::uint64_t seed = 100 * b + trial;
      const auto c = capture(spec, b, seed, true);
      auto want = c.truth.labels;
      std::sort(want.begin(), want.end());
      ok += attacks::recover_labels(c.obs, b, seed).labels == want;
    }
    pass = pass && ok == 20;
    detail += (detail.empty() ? "" : ", ") + ("B=" + std::to_string(b) + " " +
                                              std::to_string(ok) + "/20");
  }
  return {pass, "exact multisets: " + detail};
}

Verdict hungarian_vs_brute_force() {
  std::mt19937_64 rng(55);
  int ok = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 6;
    auto c = gradinv::testing::random_vector(n * n, rng, 0.0, 1.0);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += c[i * n + perm[i]];
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto a = metrics::hungarian(c, n);
    double check = 0;
    for (std::size_t i = 0; i < n; ++i) check += c[i * n + a.column_of_row[i]];
    ok += std::fabs(a.cost - best) <= 1e-12 && std::fabs(check - best) <= 1e-12;
  }
  return {ok == 200, std::to_string(ok) + "/200 matrices (n <= 6) match the brute-force optimum"};
}

Verdict rci_oracle() {
  std::mt19937_64 rng(66);
  std::uniform_int_distribution<int> npts(2, 21), step(1, 1000);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    metrics::RecoveryCurve c;
    const int n = npts(rng), d = step(rng);
    for (int i = 0; i < n; ++i) {
      c.t.push_back(static_cast<std::int64_t>(d) * (i + 1));
      c.score.push_back(u(rng));
    }
    double area = 0;
    for (int i = 0; i + 1 < n; ++i)
      area += (c.t[i + 1] - c.t[i]) * 0.5 * (c.score[i] + c.score[i + 1]);
    const double want = area / static_cast<double>(c.t.back());
    worst = std::max(worst, std::fabs(metrics::rci(c) - want));
  }
  metrics::RecoveryCurve flat;
  for (int i = 0; i <= 20; ++i) {
    flat.t.push_back(500 * i);
    flat.score.push_back(0.4321);
  }
  const double cst = std::fabs(metrics::rci(flat) - 0.4321);
  return {worst <= 1e-12 && cst <= 1e-12,
          "max |RCI - trapezoid/I_N| over 100 curves " + fmt("%.1e", worst) +
              "; constant curve error " + fmt("%.1e", cst)};
}

Verdict batch_size_trend(const fs::path& scratch) {
  const auto t0 = Clock::now();
  std::vector<double> s;
  for (int b : {1, 2, 4, 8}) {
    auto text = set_key(desk_text(), "attack", "presets", "dlg");
    text = set_key(text, "train", "batch_size", std::to_string(b));
    text = set_key(text, "experiment", "name", "trend_b" + std::to_string(b));
    s.push_back(mean_ssim(run_in_process(text, scratch / ("trend_b" + std::to_string(b))), "dlg"));
  }
  int inversions = 0;
  bool small = true;
  for (std::size_t i = 1; i < s.size(); ++i)
    if (s[i] > s[i - 1]) {
      ++inversions;
      small = small && s[i] - s[i - 1] <= 0.02;
    }
  const double wall = seconds_since(t0);
  std::string d = "DLG mean SSIM for B=1,2,4,8: ";
  for (std::size_t i = 0; i < s.size(); ++i) d += (i ? ", " : "") + fmt("%.3f", s[i]);
  d += "; " + std::to_string(inversions) + " inversion(s); " + fmt("%.0f", wall) + " s";
  return {inversions <= 1 && small && wall < 900.0, d};
}

Verdict gaussian_defense_direction(const fs::path& scratch) {
  const auto t0 = Clock::now();
  // Captures every 500 iterations keep the GradInversion matrix in budget.
  auto base = set_key(desk_text(), "attack", "presets", "gradinversion");
  base = set_key(base, "train", "attack_rate", "500");
  std::map<std::string, double> ssim, acc;
  for (std::string d : {"none", "gaussian"}) {
    auto text = set_key(base, "experiment", "name", "defense_" + d);
    text = set_key(text, "defense", "kind", d);
    if (d == "gaussian") text = set_key(text, "defense", "sigma", "0.1");
    const auto dir = scratch / ("defense_" + d);
    ssim[d] = mean_ssim(run_in_process(text, dir), "gradinversion");
    acc[d] = runner::build_summary(dir)["model"]["final_accuracy_mean"].get<double>();
  }
  const double wall = seconds_since(t0);
  const double ratio = ssim["gaussian"] / ssim["none"];
  const double gap = 100.0 * std::fabs(acc["gaussian"] - acc["none"]);
  return {ratio <= 0.5 && gap <= 5.0 && wall < 1200.0,
          "GradInversion mean SSIM undefended " + fmt("%.3f", ssim["none"]) + ", sigma=0.1 " +
              fmt("%.3f", ssim["gaussian"]) + " (ratio " + fmt("%.2f", ratio) +
              ", limit 0.50); accuracy " + fmt("%.1f", 100 * acc["none"]) + "% vs " +
              fmt("%.1f", 100 * acc["gaussian"]) + "% (gap " + fmt("%.1f", gap) +
              " points, limit 5); " + fmt("%.0f", wall) + " s"};
}

Verdict multi_observation_reduction() {
  models::ModelSpec spec;
  spec.height = spec.width = 16;
  spec.num_classes = 4;
  auto data = datasets::synthetic_dataset(4, 120, 5, {3, 16, 16});
  auto [train, hold] = data.split(20);
  fedsim::TrainConfig tc;
  tc.total_iterations = 60;
  tc.attack_rate = 20;
  tc.batch_size = 4;
  tc.eval_interval = 60;
  tc.eval_samples = 20;
  tc.seed = 9;
  auto tr = fedsim::run_training(tc, models::init_parameters(spec, 9), train, hold, {});
  attacks::AttackInputs in{tr.observations, 4, 123};
  auto multi = attacks::preset("multiple_updates");
  multi.iterations = 30;
  multi.max_pairs = 1;
  auto single = multi;
  single.multi_observation = false;
  const auto a = attacks::run_attack(in, multi);
  const auto b = attacks::run_attack(in, single);
  double worst = 0;
  std::size_t n = 0;
  bool aligned = a.seeds.size() == b.seeds.size() && a.pairs_used == 1;
  for (std::size_t s = 0; aligned && s < a.seeds.size(); ++s) {
    aligned = a.seeds[s].losses.size() == b.seeds[s].losses.size();
    for (std::size_t i = 0; aligned && i < a.seeds[s].losses.size(); ++i, ++n)
      worst = std::max(worst, std::fabs(a.seeds[s].losses[i] - b.seeds[s].losses[i]));
  }
  return {aligned && n > 0 && worst <= 1e-10,
          std::to_string(n) + " per-iteration losses over " + std::to_string(a.seeds.size()) +
              " seeds; max difference " + fmt("%.1e", worst) + " (limit 1e-10)" +
              (aligned ? "" : "; traces misaligned")};
}

Verdict compute_ordering() {
  models::ModelSpec spec;
  spec.height = spec.width = 16;
  spec.num_classes = 4;
  // One unscored attack first: the process's first heap growth otherwise
  // lands in whichever attack runs first.
  {
    const auto c = capture(spec, 4, 499, false);
    std::vector<Observation> obs{c.obs};
    auto cfg = attacks::preset("dlg");
    cfg.iterations = 5;
    attacks::run_attack({obs, 4, 0}, cfg);
  }
  int ok = 0;
  std::string d;
  for (std::uint64_t run = 0; run < 5; ++run) {
    const auto c = capture(spec, 4, 500 + run, false);
    std::vector<Observation> obs{c.obs};
    attacks::AttackInputs in{obs, 4, run};
    const auto dlg = attacks::run_attack(in, attacks::preset("dlg"));
    const auto gi = attacks::run_attack(in, attacks::preset("gradinversion"));
    const auto mem = [](const attacks::RecoveryResult& r) {
      return r.peak_memory_bytes.value_or(r.tensor_peak_bytes);
    };
    const bool faster = dlg.wall_seconds < gi.wall_seconds;
    const bool heavier = mem(gi) >= mem(dlg);
    ok += faster && heavier;
    d += (run ? "; " : "") + fmt("%.1f", dlg.wall_seconds) + "s/" + fmt("%.1f", gi.wall_seconds) +
         "s " + std::to_string(mem(dlg) >> 10) + "k/" + std::to_string(mem(gi) >> 10) + "k";
  }
  return {ok >= 4, std::to_string(ok) + "/5 paired runs with DLG faster and GradInversion peak "
                                        "memory >= DLG after one warm-up attack (DLG/GI: " + d + ")"};
}

// metrics.csv with wall_s and peak_mem_bytes blanked.
std::string masked_metrics(const fs::path& csv) {
  std::istringstream in(slurp(csv));
  std::string out;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() == 11) cells[9] = cells[10] = "*";
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
    out += "\n";
  }
  return out;
}

Verdict run_determinism(const fs::path& scratch) {
  // All four attacks on a shortened desk schedule, two repetitions.
  auto text = set_key(desk_text(), "experiment", "repetitions", "2");
  text = set_key(text, "train", "total_iterations", "400");
  text = set_key(text, "train", "eval_interval", "200");
  text = set_key(text, "attack", "iterations", "20");
  text = set_key(text, "experiment", "name", "determinism");
  const auto cfg_path = scratch / "determinism.ini";
  std::ofstream(cfg_path) << text;
  std::vector<std::string> masked;
  for (std::string tag : {"a", "b"}) {
    const auto root = scratch / ("det_" + tag);
    const std::string cmd = std::string(runner::kOutputRootEnv) + "='" + root.string() + "' '" +
                            GRADINV_CLI + "' run -q '" + cfg_path.string() + "' >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
      return {false, "run " + tag + " exited with status " + std::to_string(status)};
    masked.push_back(masked_metrics(root / "determinism" / "metrics.csv"));
  }
  const auto rows = std::count(masked[0].begin(), masked[0].end(), '\n') - 1;
  return {masked[0] == masked[1] && rows > 0,
          std::to_string(rows) + " metric rows; masked metrics.csv " +
              (masked[0] == masked[1] ? "byte-identical" : "differs") + " across two runs"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "Run a single criterion (1-11)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  gradinv::testing::TempDir scratch("acceptance");
  const std::vector<std::function<Verdict()>> criteria{
      autodiff_vs_finite_differences,
      fixed_point,
      dlg_small_mlp,
      label_recovery,
      hungarian_vs_brute_force,
      rci_oracle,
      [&] { return batch_size_trend(scratch.path()); },
      [&] { return gaussian_defense_direction(scratch.path()); },
      multi_observation_reduction,
      compute_ordering,
      [&] { return run_determinism(scratch.path()); },
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<int>(i) + 1 != only) continue;
    Verdict v;
    try {
      v = criteria[i]();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %zu %s: %s\n", i + 1, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed ? 1 : 0;
}
