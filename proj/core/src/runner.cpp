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

#include "gradinv/runner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "gradinv/checkpoint.hpp"
#include "gradinv/errors.hpp"
#include "gradinv/image_io.hpp"
#include "gradinv/parallel.hpp"

namespace gradinv::runner {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string> kMetricColumns = {
    "run_id", "t",       "attack",           "defense",     "mse",   "psnr_db",
    "ssim",   "perceptual_proxy", "rci_partial", "wall_s", "peak_mem_bytes"};

fs::path output_root(const config::ExperimentConfig& c) {
  if (const char* env = std::getenv(kOutputRootEnv); env && *env) return env;
  return c.output_root;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

namespace {

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("bad number '" + s + "' in metrics.csv");
  }
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string stamp(std::int64_t t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "t%06lld", static_cast<long long>(t));
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("short write to " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("bad JSON in " + path.string() + ": " + e.what());
  }
}

// JSON has no NaN; non-finite values become null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

void write_metrics_csv(const fs::path& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < kMetricColumns.size(); ++i) {
    out << (i ? "," : "") << kMetricColumns[i];
  }
  out << '\n';
  for (const auto& r : rows) {
    out << r.run_id << ',' << r.t << ',' << r.attack << ',' << r.defense << ','
        << format_double(r.mse) << ',' << format_double(r.psnr_db) << ','
        << format_double(r.ssim) << ',' << format_double(r.perceptual_proxy)
        << ',' << format_double(r.rci_partial) << ',' << format_double(r.wall_s)
        << ',';
    if (r.peak_mem_bytes) out << *r.peak_mem_bytes;
    out << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<MetricRow> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (split_csv(line) != kMetricColumns) {
    throw FormatError(path.string() + " has an unexpected header");
  }
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != kMetricColumns.size()) {
      throw FormatError("malformed row in " + path.string() + ": " + line);
    }
    MetricRow r;
    r.run_id = c[0];
    r.t = static_cast<std::int64_t>(parse_double(c[1]));
    r.attack = c[2];
    r.defense = c[3];
    r.mse = parse_double(c[4]);
    r.psnr_db = parse_double(c[5]);
    r.ssim = parse_double(c[6]);
    r.perceptual_proxy = parse_double(c[7]);
    r.rci_partial = parse_double(c[8]);
    r.wall_s = parse_double(c[9]);
    if (!c[10].empty()) r.peak_mem_bytes = std::stoll(c[10]);
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace {

std::string defense_label(const defenses::DefenseConfig& d) {
  if (d.kind == defenses::DefenseKind::kGaussian) {
    return "gaussian(" + format_double(d.sigma) + ")";
  }
  return defenses::to_string(d.kind);
}

json recovery_meta(const attacks::RecoveryResult& r, const attacks::AttackConfig& a,
                   std::uint64_t attack_seed) {
  json seeds = json::array();
  for (const auto& s : r.seeds) {
    json losses = json::array();
    for (double v : s.losses) losses.push_back(num(v));
    seeds.push_back({{"losses", losses},
                     {"final_loss", num(s.final_loss)},
                     {"restarts", s.restarts},
                     {"failed", s.failed}});
  }
  json j = {{"attack", attacks::to_json(a)},
            {"attack_seed", attack_seed},
            {"labels", r.labels},
            {"labels_degenerate", r.labels_degenerate},
            {"final_loss", num(r.final_loss)},
            {"chosen_seed", r.chosen_seed},
            {"seeds", seeds},
            {"iterations", r.iterations},
            {"pairs_used", r.pairs_used},
            {"failed", r.failed},
            {"zero_norm_target", r.zero_norm_target},
            {"wall_seconds", r.wall_seconds},
            {"tensor_peak_bytes", r.tensor_peak_bytes}};
  j["peak_memory_bytes"] =
      r.peak_memory_bytes ? json(*r.peak_memory_bytes) : json(nullptr);
  if (!r.diagnostics.empty()) j["diagnostics"] = r.diagnostics;
  return j;
}

json report_meta(const metrics::MetricReport& m) {
  json psnr = json::array();
  for (double v : m.psnr_db) psnr.push_back(std::min(v, metrics::kPsnrCap));
  return {{"permutation", m.permutation},
          {"mse", m.mse},
          {"psnr_db", psnr},
          {"ssim", m.ssim},
          {"perceptual_proxy", m.perceptual},
          {"mean_mse", m.mean_mse},
          {"mean_psnr_db", m.mean_psnr_db},
          {"mean_ssim", m.mean_ssim},
          {"mean_perceptual_proxy", m.mean_perceptual}};
}

void write_bundle(const fs::path& dir, const attacks::RecoveryResult& r,
                  const json& meta) {
  fs::create_directories(dir);
  write_json(dir / "meta.json", meta);
  image_io::write_png(dir / "recovered.png", image_io::make_grid({r.recovered}));
  checkpoint::ArrayFile f;
  f.meta["kind"] = "recovery";
  std::vector<double> labels(r.labels.begin(), r.labels.end());
  f.arrays.push_back({"recovered", r.recovered.shape(), r.recovered.to_vector()});
  f.arrays.push_back({"raw", r.raw.shape(), r.raw.to_vector()});
  f.arrays.push_back({"labels", {static_cast<std::int64_t>(labels.size())}, labels});
  checkpoint::write_arrays(dir / "recovered.bin", f);
}

struct Data {
  datasets::Dataset train;
  datasets::Dataset holdout;
};

Data load_data(const config::DatasetConfig& d) {
  datasets::Dataset full = [&] {
    if (d.kind == config::DatasetKind::kCifar10) {
      return datasets::load_cifar10(d.path, datasets::Cifar10Split::kTrain);
    }
    return datasets::synthetic_dataset(d.classes, d.size, d.seed,
                                       {d.channels, d.height, d.width});
  }();
  if (d.holdout >= full.size()) {
    throw ConfigError("holdout leaves no training samples");
  }
  auto [train, holdout] = full.split(d.holdout);
  return {std::move(train), std::move(holdout)};
}

struct RepOutput {
  std::string run_id;
  std::vector<MetricRow> rows;
  std::vector<fedsim::ModelLogRow> log;
  bool failed = false;
  std::string reason;
};

}  // namespace

RunOutcome execute(const config::ExperimentConfig& c,
                   const std::string& config_text, const RunOptions& opts) {
  config::validate(c);
  const fs::path run_dir = opts.output_dir ? *opts.output_dir : output_root(c) / c.name;
  if (fs::exists(run_dir) && !fs::is_empty(run_dir)) {
    if (!opts.force) {
      throw IoError("run directory " + run_dir.string() +
                    " is not empty (use --force to replace it)");
    }
    if (!fs::exists(run_dir / "config.ini")) {
      throw IoError("refusing to replace " + run_dir.string() +
                    ": it does not look like a run directory");
    }
    fs::remove_all(run_dir);
  }
  fs::create_directories(run_dir / "grids");
  {
    std::ofstream out(run_dir / "config.ini");
    out << config_text;
  }

  const auto data = load_data(c.dataset);
  const auto defense = defense_label(c.defense);
  std::size_t history_cap = 1;
  for (const auto& a : c.attacks)
    if (a.multi_observation) history_cap = std::max<std::size_t>(history_cap, a.max_pairs);

  const std::size_t workers = c.workers > 0 ? c.workers : default_workers();
  const std::size_t rep_workers = std::min<std::size_t>(workers, c.repetitions);
  const int attack_workers = rep_workers > 1 ? 1 : static_cast<int>(workers);
  std::mutex log_mutex;
  auto say = [&](const std::string& s) {
    if (opts.quiet) return;
    std::lock_guard<std::mutex> lock(log_mutex);
    std::cerr << s << '\n';
  };

  std::vector<RepOutput> reps(c.repetitions);
  parallel_for(reps.size(), rep_workers, [&](std::size_t rep) {
    auto& out = reps[rep];
    out.run_id = c.name + "-rep" + std::to_string(rep);
    const std::uint64_t attack_base = c.seed + rep;
    const std::uint64_t train_seed =
        c.repetition_mode == config::RepetitionMode::kFull ? c.seed + rep : c.seed;

    auto spec = c.model;
    auto params = models::init_parameters(spec, derive_seed(train_seed, {0x1417}));
    auto train_cfg = c.train;
    train_cfg.seed = train_seed;

    std::vector<Observation> history;
    std::map<std::string, metrics::RecoveryCurve> curves;
    json attack_configs = json::object();
    for (auto a : c.attacks) attack_configs[a.name] = attacks::to_json(a);

    auto hook = [&](const Observation& obs, const datasets::ImageBatch& truth) {
      history.push_back(obs);
      if (history.size() > history_cap) history.erase(history.begin());
      const auto attack_seed = derive_seed(attack_base, {static_cast<std::uint64_t>(obs.t)});
      if (c.save_observations) {
        fedsim::save_observation(
            run_dir / "observations" / out.run_id / stamp(obs.t), obs, &truth,
            {{"attack_seed", attack_seed},
             {"run_id", out.run_id},
             {"known_labels", c.known_labels},
             {"attacks", attack_configs}});
      }
      std::vector<Tensor> grid_rows = {truth.pixels};
      std::vector<std::vector<int>> grid_perms = {{}};
      for (auto a : c.attacks) {
        a.workers = attack_workers;
        attacks::AttackInputs in;
        in.observations = history;
        in.batch_size = truth.size();
        in.seed = attack_seed;
        if (c.known_labels) in.labels = truth.labels;
        auto r = attacks::run_attack(in, a);
        MetricRow row;
        row.run_id = out.run_id;
        row.t = obs.t;
        row.attack = a.name;
        row.defense = defense;
        row.wall_s = r.wall_seconds;
        row.peak_mem_bytes = r.peak_memory_bytes;
        json meta = recovery_meta(r, a, attack_seed);
        meta["t"] = obs.t;
        meta["run_id"] = out.run_id;
        if (r.failed) {
          row.mse = row.psnr_db = row.ssim = row.perceptual_proxy =
              row.rci_partial = std::nan("");
          say(out.run_id + " " + stamp(obs.t) + " " + a.name + ": attack failed (" +
              r.diagnostics + ")");
        } else {
          const auto m = metrics::hungarian_align(r.recovered, truth.pixels, c.align_cost);
          row.mse = m.mean_mse;
          row.psnr_db = m.mean_psnr_db;
          row.ssim = m.mean_ssim;
          row.perceptual_proxy = m.mean_perceptual;
          auto& curve = curves[a.name];
          curve.t.push_back(obs.t);
          curve.score.push_back(m.mean_perceptual);
          row.rci_partial = curve.t.size() < 2 ? m.mean_perceptual : metrics::rci(curve);
          meta["metrics"] = report_meta(m);
          grid_rows.push_back(r.recovered);
          grid_perms.push_back(m.permutation);
          say(out.run_id + " " + stamp(obs.t) + " " + a.name + ": ssim " +
              format_double(m.mean_ssim) + ", mse " + format_double(m.mean_mse));
        }
        write_bundle(run_dir / "attacks" / out.run_id / a.name / stamp(obs.t), r, meta);
        out.rows.push_back(std::move(row));
      }
      image_io::write_png(run_dir / "grids" / (out.run_id + "_" + stamp(obs.t) + ".png"),
                          image_io::make_grid(grid_rows, grid_perms));
    };

    try {
      auto result = fedsim::run_training(train_cfg, std::move(params), data.train,
                                         data.holdout, c.defense, hook);
      out.log = std::move(result.log);
      if (result.halted) {
        out.failed = true;
        out.reason = result.halt_reason;
      }
    } catch (const NumericFault& e) {
      out.failed = true;
      out.reason = e.what();
    }
    if (out.failed) say("WARNING: repetition " + out.run_id + " failed: " + out.reason);
  });

  std::vector<MetricRow> rows;
  json log = json::array(), status = json::array();
  int failed = 0;
  for (const auto& r : reps) {
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
    json lr = json::array();
    for (const auto& m : r.log) {
      lr.push_back({{"t", m.t},
                    {"train_loss", num(m.train_loss)},
                    {"eval_loss", num(m.eval_loss)},
                    {"eval_accuracy", num(m.eval_accuracy)}});
    }
    log.push_back({{"run_id", r.run_id}, {"rows", lr}});
    status.push_back({{"run_id", r.run_id},
                      {"status", r.failed ? "failed" : "ok"},
                      {"reason", r.reason}});
    failed += r.failed ? 1 : 0;
  }
  write_metrics_csv(run_dir / "metrics.csv", rows);
  write_json(run_dir / "model_log.json", log);
  write_json(run_dir / "repetitions.json",
             {{"experiment", c.name}, {"defense", defense}, {"repetitions", status}});
  write_summary(run_dir);
  return {run_dir, c.repetitions, failed};
}

json build_summary(const fs::path& run_dir) {
  const auto rows = read_metrics_csv(run_dir / "metrics.csv");
  const auto reps = read_json(run_dir / "repetitions.json");
  const auto log = read_json(run_dir / "model_log.json");

  std::set<std::string> failed;
  std::vector<std::string> ok_ids;
  for (const auto& r : reps.at("repetitions")) {
    const auto id = r.at("run_id").get<std::string>();
    if (r.at("status") == "ok") ok_ids.push_back(id);
    else failed.insert(id);
  }

  json summary;
  summary["experiment"] = reps.at("experiment");
  summary["defense"] = reps.at("defense");
  summary["repetitions"] = {{"total", reps.at("repetitions").size()},
                            {"ok", ok_ids.size()},
                            {"failed", std::vector<std::string>(failed.begin(), failed.end())}};
  summary["note"] =
      "perceptual_proxy is a fixed random-feature distance, not LPIPS";

  // attack -> t -> per-metric accumulators over repetitions.
  struct Acc {
    double mse = 0, psnr = 0, ssim = 0, perc = 0;
    int n = 0;
  };
  std::vector<std::string> attack_order;
  std::map<std::string, std::map<std::int64_t, Acc>> per_t;
  std::map<std::string, std::map<std::string, metrics::RecoveryCurve>> rep_curves;
  std::map<std::string, std::pair<double, int>> wall, mem;
  for (const auto& r : rows) {
    if (std::find(attack_order.begin(), attack_order.end(), r.attack) == attack_order.end()) {
      attack_order.push_back(r.attack);
    }
    if (failed.count(r.run_id) || !std::isfinite(r.ssim)) continue;
    auto& a = per_t[r.attack][r.t];
    a.mse += r.mse;
    a.psnr += r.psnr_db;
    a.ssim += r.ssim;
    a.perc += r.perceptual_proxy;
    ++a.n;
    auto& curve = rep_curves[r.attack][r.run_id];
    curve.t.push_back(r.t);
    curve.score.push_back(r.perceptual_proxy);
    wall[r.attack].first += r.wall_s;
    ++wall[r.attack].second;
    if (r.peak_mem_bytes) {
      mem[r.attack].first += static_cast<double>(*r.peak_mem_bytes);
      ++mem[r.attack].second;
    }
  }

  auto safe_rci = [](const metrics::RecoveryCurve& c) -> json {
    if (c.t.size() < 2) return nullptr;
    try {
      return metrics::rci(c);
    } catch (const ConfigError&) {
      return nullptr;
    }
  };

  json attacks_json = json::object();
  for (const auto& name : attack_order) {
    json curve = json::array();
    metrics::RecoveryCurve mean_curve;
    Acc total;
    for (const auto& [t, a] : per_t[name]) {
      const double n = a.n;
      curve.push_back({{"t", t},
                       {"mse", a.mse / n},
                       {"psnr_db", a.psnr / n},
                       {"ssim", a.ssim / n},
                       {"perceptual_proxy", a.perc / n},
                       {"n", a.n}});
      mean_curve.t.push_back(t);
      mean_curve.score.push_back(a.perc / n);
      total.mse += a.mse / n;
      total.psnr += a.psnr / n;
      total.ssim += a.ssim / n;
      total.perc += a.perc / n;
      ++total.n;
    }
    json rci_rep = json::object();
    double rci_sum = 0.0;
    int rci_n = 0;
    for (const auto& [id, c] : rep_curves[name]) {
      auto v = safe_rci(c);
      rci_rep[id] = v;
      if (!v.is_null()) {
        rci_sum += v.get<double>();
        ++rci_n;
      }
    }
    json entry;
    entry["curve"] = curve;
    if (total.n > 0) {
      entry["means"] = {{"mse", total.mse / total.n},
                        {"psnr_db", total.psnr / total.n},
                        {"ssim", total.ssim / total.n},
                        {"perceptual_proxy", total.perc / total.n}};
    } else {
      entry["means"] = nullptr;
    }
    entry["rci_per_repetition"] = rci_rep;
    entry["rci_mean"] = rci_n ? json(rci_sum / rci_n) : json(nullptr);
    entry["rci_of_mean_curve"] = safe_rci(mean_curve);
    entry["wall_s_mean"] =
        wall[name].second ? json(wall[name].first / wall[name].second) : json(nullptr);
    entry["peak_mem_bytes_mean"] =
        mem[name].second ? json(mem[name].first / mem[name].second) : json(nullptr);
    attacks_json[name] = entry;
  }
  summary["attacks"] = attacks_json;

  json acc_rep = json::object();
  double acc_sum = 0.0, loss_sum = 0.0;
  int acc_n = 0;
  for (const auto& r : log) {
    const auto id = r.at("run_id").get<std::string>();
    if (failed.count(id) || r.at("rows").empty()) continue;
    const auto& last = r.at("rows").back();
    acc_rep[id] = last.at("eval_accuracy");
    if (last.at("eval_accuracy").is_number() && last.at("eval_loss").is_number()) {
      acc_sum += last.at("eval_accuracy").get<double>();
      loss_sum += last.at("eval_loss").get<double>();
      ++acc_n;
    }
  }
  summary["model"] = {{"final_accuracy_per_repetition", acc_rep},
                      {"final_accuracy_mean", acc_n ? json(acc_sum / acc_n) : json(nullptr)},
                      {"final_eval_loss_mean", acc_n ? json(loss_sum / acc_n) : json(nullptr)}};
  return summary;
}

void write_summary(const fs::path& run_dir) {
  write_json(run_dir / "summary.json", build_summary(run_dir));
}

OfflineAttackOutcome attack_archive(const fs::path& dir, const std::string& preset,
                                    const OfflineAttackOptions& opts) {
  std::vector<fs::path> captures;
  if (fs::exists(dir / "meta.json")) {
    // A single capture; its siblings serve multi-observation attacks.
    captures.push_back(dir);
    if (dir.has_parent_path()) {
      for (const auto& e : fs::directory_iterator(dir.parent_path())) {
        if (e.is_directory() && e.path() != dir && fs::exists(e.path() / "meta.json")) {
          captures.push_back(e.path());
        }
      }
    }
  } else if (fs::is_directory(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_directory() && fs::exists(e.path() / "meta.json")) captures.push_back(e.path());
    }
  }
  if (captures.empty()) throw IoError("no observation archive under " + dir.string());

  std::vector<std::pair<std::int64_t, fs::path>> stamped;
  for (const auto& p : captures) stamped.emplace_back(read_json(p / "meta.json").at("t"), p);
  std::sort(stamped.begin(), stamped.end());
  std::int64_t target_t = stamped.back().first;
  if (fs::exists(dir / "meta.json")) target_t = read_json(dir / "meta.json").at("t");
  if (opts.t) target_t = *opts.t;
  const auto target = std::find_if(stamped.begin(), stamped.end(),
                                   [&](const auto& s) { return s.first == target_t; });
  if (target == stamped.end()) {
    throw IoError("no capture at t=" + std::to_string(target_t) + " under " + dir.string());
  }
  const auto meta = read_json(target->second / "meta.json");

  attacks::AttackConfig cfg;
  if (meta.contains("attacks") && meta.at("attacks").contains(preset)) {
    cfg = attacks::attack_config_from_json(meta.at("attacks").at(preset));
  } else {
    cfg = attacks::preset(preset);
  }
  if (opts.iterations) cfg.iterations = *opts.iterations;

  std::vector<Observation> obs;
  const auto last = static_cast<std::size_t>(target - stamped.begin());
  const std::size_t first =
      cfg.multi_observation && last + 1 > static_cast<std::size_t>(cfg.max_pairs)
          ? last + 1 - cfg.max_pairs
          : (cfg.multi_observation ? 0 : last);
  for (std::size_t i = first; i <= last; ++i) {
    obs.push_back(fedsim::load_observation(stamped[i].second));
  }
  const auto truth = fedsim::load_truth(target->second);

  attacks::AttackInputs in;
  in.observations = obs;
  if (opts.batch_size) in.batch_size = *opts.batch_size;
  else if (meta.contains("batch_size")) in.batch_size = meta.at("batch_size");
  else throw ConfigError("batch size unknown; pass --batch-size");
  in.seed = opts.seed ? *opts.seed : meta.value("attack_seed", std::uint64_t{0});
  if (meta.value("known_labels", false) && truth) in.labels = truth->labels;

  auto r = attacks::run_attack(in, cfg);
  json out_meta = recovery_meta(r, cfg, in.seed);
  out_meta["t"] = target_t;
  out_meta["source"] = target->second.string();
  if (truth && !r.failed && truth->pixels.shape() == r.recovered.shape()) {
    out_meta["metrics"] = report_meta(metrics::hungarian_align(r.recovered, truth->pixels));
  }
  const fs::path bundle =
      opts.output_dir ? *opts.output_dir : target->second / ("offline_" + cfg.name);
  write_bundle(bundle, r, out_meta);
  return {bundle, out_meta};
}

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"gradinv: gradient inversion experiments for federated learning"};
  app.require_subcommand(1);

  std::string run_config;
  std::string run_output;
  bool force = false, quiet = false;
  auto* run = app.add_subcommand("run", "Train, capture, attack and score");
  run->add_option("config", run_config, "Experiment config file")->required();
  run->add_option("-o,--output", run_output, "Run directory (default: <output root>/<name>)");
  run->add_flag("--force", force, "Replace an existing run directory");
  run->add_flag("-q,--quiet", quiet, "No progress lines");

  std::string obs_dir, preset, attack_output;
  std::int64_t attack_t = -1, batch_size = 0;
  std::uint64_t seed = 0;
  int iterations = -1;
  auto* attack = app.add_subcommand("attack", "Offline attack on archived observations");
  attack->add_option("observation-dir", obs_dir, "Capture directory")->required();
  attack->add_option("preset", preset, "Attack preset")->required();
  auto* seed_opt = attack->add_option("--seed", seed, "Attack seed (default: from archive)");
  attack->add_option("--batch-size", batch_size, "Batch size (default: from archive)");
  attack->add_option("--iterations", iterations, "Override the iteration budget");
  attack->add_option("--t", attack_t, "Target capture timestamp");
  attack->add_option("-o,--output", attack_output, "Bundle directory");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Re-aggregate a run directory");
  report->add_option("run-dir", report_dir, "Run directory")->required();

  std::string validate_config;
  auto* validate = app.add_subcommand("validate", "Check a config without running");
  validate->add_option("config", validate_config, "Experiment config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*validate) {
      config::parse_config(validate_config);
      std::cout << validate_config << ": ok\n";
      return 0;
    }
    if (*run) {
      const auto text = read_text(run_config);
      const auto cfg = config::parse_config_text(text);
      RunOptions o;
      if (!run_output.empty()) o.output_dir = run_output;
      o.force = force;
      o.quiet = quiet;
      const auto outcome = execute(cfg, text, o);
      std::cout << outcome.run_dir.string() << '\n';
      if (outcome.failed == outcome.repetitions) {
        std::cerr << "error: all " << outcome.repetitions << " repetitions failed\n";
        return 1;
      }
      if (outcome.failed > 0) {
        std::cerr << "WARNING: " << outcome.failed << " of " << outcome.repetitions
                  << " repetitions failed and are excluded from the summary\n";
      }
      return 0;
    }
    if (*attack) {
      OfflineAttackOptions o;
      if (*seed_opt) o.seed = seed;
      if (batch_size > 0) o.batch_size = batch_size;
      if (iterations >= 0) o.iterations = iterations;
      if (attack_t >= 0) o.t = attack_t;
      if (!attack_output.empty()) o.output_dir = attack_output;
      const auto outcome = attack_archive(obs_dir, preset, o);
      std::cout << outcome.bundle_dir.string() << '\n';
      return outcome.meta.value("failed", false) ? 1 : 0;
    }
    if (*report) {
      write_summary(report_dir);
      std::cout << (fs::path(report_dir) / "summary.json").string() << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace gradinv::runner
