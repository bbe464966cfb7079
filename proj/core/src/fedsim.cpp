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

#include "gradinv/fedsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gradinv/checkpoint.hpp"
#include "gradinv/errors.hpp"

namespace gradinv::fedsim {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (total_iterations < 0) throw ConfigError("total_iterations must be >= 0");
  if (attack_rate < 1) throw ConfigError("attack_rate must be >= 1");
  if (total_iterations % attack_rate != 0) {
    throw ConfigError("attack_rate must divide total_iterations");
  }
  if (clients < 1) throw ConfigError("clients must be >= 1");
  if (eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
  if (!std::isfinite(lr)) throw ConfigError("lr must be finite");
}

ClientUpdate client_step(const models::ParameterSet& params,
                         const ImageBatch& batch,
                         const defenses::DefenseConfig& defense, Rng& rng) {
  GradModeGuard enable(true);
  models::ForwardOptions fo;
  fo.mode = models::Mode::kTrain;
  fo.rng = &rng;
  auto lg = models::loss_gradients(params, batch.pixels, batch.labels, fo, false);
  ClientUpdate u;
  u.loss = lg.loss.item();
  u.bn_batch = lg.forward.bn_batch;
  for (auto& s : u.bn_batch) {
    s.mean = s.mean.detach();
    s.variance = s.variance.detach();
  }
  auto d = defenses::apply_defense(defense, params, batch.pixels, batch.labels,
                                   lg.grads, rng, fo);
  u.wire = std::move(d.wire);
  u.defense_fell_back = d.fell_back;
  return u;
}

void server_aggregate_and_update(models::ParameterSet& params,
                                 std::span<const models::GradientSet> updates,
                                 double lr) {
  if (updates.empty()) throw StructuralError("no client updates to aggregate");
  const auto n = params.size();
  for (const auto& u : updates) {
    if (u.size() != n) throw StructuralError("client update not aligned with model");
    for (std::size_t i = 0; i < n; ++i) {
      if (u[i].shape() != params.params()[i].value.shape()) {
        throw StructuralError("client update shape mismatch for " +
                              params.params()[i].name);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(updates.size());
  std::vector<Tensor> values;
  values.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto w = params.params()[i].value.to_vector();
    std::vector<double> mean(w.size(), 0.0);
    for (const auto& u : updates) {
      auto g = u[i].data();
      for (std::size_t j = 0; j < w.size(); ++j) mean[j] += g[j];
    }
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * (mean[j] * inv);
    values.push_back(Tensor::from_data(params.params()[i].value.shape(), std::move(w)));
  }
  params.set_values(std::move(values));
}

EvalResult evaluate_model(const models::ParameterSet& params,
                          const Dataset& data, std::int64_t max_samples) {
  NoGradGuard no_grad;
  EvalResult r;
  const auto n = std::min(data.size(), max_samples);
  if (n <= 0) return r;
  const auto& spec = params.spec();
  constexpr std::int64_t kChunk = 250;
  double loss = 0.0, correct = 0.0;
  for (std::int64_t start = 0; start < n; start += kChunk) {
    const auto m = std::min(kChunk, n - start);
    std::vector<std::int64_t> ids(m);
    for (std::int64_t i = 0; i < m; ++i) ids[i] = start + i;
    auto batch = data.batch(ids);
    models::ForwardOptions fo;
    fo.mode = models::Mode::kEval;
    if (auto b = models::precode_of(params)) fo.precode_eps = Tensor::zeros({m, b->latent()});
    auto logits = models::forward(params, batch.pixels, fo).logits;
    loss += ops::cross_entropy(logits, batch.labels).item() * static_cast<double>(m);
    auto l = logits.data();
    const auto k = spec.num_classes;
    for (std::int64_t i = 0; i < m; ++i) {
      const auto row = l.subspan(i * k, k);
      const auto arg = std::max_element(row.begin(), row.end()) - row.begin();
      if (arg == batch.labels[i]) correct += 1.0;
    }
  }
  r.loss = loss / static_cast<double>(n);
  r.accuracy = correct / static_cast<double>(n);
  return r;
}

namespace {

Observation snapshot(std::int64_t t, const models::ParameterSet& params,
                     const models::GradientSet& wire, const ImageBatch& batch) {
  Observation o;
  o.t = t;
  o.weights = params.clone();
  for (const auto& g : wire) o.gradients.push_back(g.clone());
  o.batch_id = batch.batch_id();
  o.client = 0;
  return o;
}

// Running statistics follow the mean of the clients' reported batch moments.
void update_bn(models::ParameterSet& params,
               const std::vector<ClientUpdate>& updates) {
  if (params.spec().num_bn_layers() == 0) return;
  std::vector<ops::BatchStats> mean = updates.front().bn_batch;
  if (updates.size() > 1) {
    for (std::size_t l = 0; l < mean.size(); ++l) {
      auto m = mean[l].mean.to_vector(), v = mean[l].variance.to_vector();
      for (std::size_t c = 1; c < updates.size(); ++c) {
        auto mc = updates[c].bn_batch[l].mean.data();
        auto vc = updates[c].bn_batch[l].variance.data();
        for (std::size_t j = 0; j < m.size(); ++j) {
          m[j] += mc[j];
          v[j] += vc[j];
        }
      }
      const double inv = 1.0 / static_cast<double>(updates.size());
      for (auto& e : m) e *= inv;
      for (auto& e : v) e *= inv;
      mean[l].mean = Tensor::from_data(mean[l].mean.shape(), std::move(m));
      mean[l].variance = Tensor::from_data(mean[l].variance.shape(), std::move(v));
    }
  }
  models::update_running_stats(params, mean);
}

}  // namespace

TrainingResult run_training(const TrainConfig& config,
                            models::ParameterSet initial, const Dataset& train,
                            const Dataset& holdout,
                            const defenses::DefenseConfig& defense,
                            const AttackHook& hook) {
  config.validate();
  defense.validate();
  TrainingResult r;
  auto params = std::move(initial);

  std::vector<Batcher> batchers;
  std::vector<Rng> client_rngs;
  for (int c = 0; c < config.clients; ++c) {
    batchers.emplace_back(train, config.batch_size, config.repeated_batch,
                          derive_seed(config.seed, {0xba7c, static_cast<std::uint64_t>(c)}),
                          config.stratified);
    client_rngs.emplace_back(
        derive_seed(config.seed, {0xc11e, static_cast<std::uint64_t>(c)}));
  }

  auto log_row = [&](std::int64_t t, double train_loss) {
    auto e = evaluate_model(params, holdout, config.eval_samples);
    r.log.push_back({t, train_loss, e.loss, e.accuracy});
  };

  double last_loss = std::nan("");
  try {
    log_row(0, last_loss);
    for (std::int64_t t = 1; t <= config.total_iterations; ++t) {
      std::vector<ClientUpdate> updates;
      std::vector<ImageBatch> batches;
      for (int c = 0; c < config.clients; ++c) {
        batches.push_back(batchers[c].next());
        updates.push_back(client_step(params, batches.back(), defense, client_rngs[c]));
      }
      last_loss = updates.front().loss;
      const bool initial_capture = config.include_initial && t == 1;
      for (const std::int64_t stamp : {std::int64_t{0}, t}) {
        const bool take = stamp == 0 ? initial_capture : t % config.attack_rate == 0;
        if (!take) continue;
        r.observations.push_back(snapshot(stamp, params, updates.front().wire,
                                          batches.front()));
        r.truths.push_back(batches.front());
        if (hook) hook(r.observations.back(), batches.front());
      }
      std::vector<models::GradientSet> wires;
      for (auto& u : updates) wires.push_back(u.wire);
      server_aggregate_and_update(params, wires, config.lr);
      update_bn(params, updates);
      r.completed_iterations = t;
      if (t % config.eval_interval == 0) log_row(t, last_loss);
    }
  } catch (const NumericFault& e) {
    r.halted = true;
    r.halt_reason = std::string("numeric fault at iteration ") +
                    std::to_string(r.completed_iterations + 1) + ": " + e.what();
  }
  r.final_model = std::move(params);
  return r;
}

void save_observation(const std::filesystem::path& dir, const Observation& obs,
                      const ImageBatch* truth,
                      const nlohmann::json& extra_meta) {
  std::filesystem::create_directories(dir);
  checkpoint::save_checkpoint(dir / "weights.bin", obs.weights,
                              {{"t", obs.t}, {"batch_id", obs.batch_id}});
  checkpoint::save_gradients(dir / "gradients.bin", obs.weights, obs.gradients);
  nlohmann::json meta = extra_meta;
  meta.update(nlohmann::json{{"t", obs.t},
                         {"batch_id", std::to_string(obs.batch_id)},
                         {"client", obs.client},
                         {"model", models::to_json(obs.weights.spec())}});
  if (truth) {
    checkpoint::ArrayFile f;
    f.meta["kind"] = "truth";
    std::vector<double> labels(truth->labels.begin(), truth->labels.end());
    std::vector<double> ids(truth->ids.begin(), truth->ids.end());
    f.arrays.push_back({"pixels", truth->pixels.shape(), truth->pixels.to_vector()});
    f.arrays.push_back({"labels", {truth->size()}, labels});
    f.arrays.push_back({"ids", {truth->size()}, ids});
    checkpoint::write_arrays(dir / "truth.bin", f);
    meta["batch_size"] = truth->size();
  }
  std::ofstream out(dir / "meta.json");
  if (!out) throw IoError("cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << '\n';
}

Observation load_observation(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw IoError("missing " + (dir / "meta.json").string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad observation metadata: " + std::string(e.what()));
  }
  Observation o;
  o.t = meta.at("t").get<std::int64_t>();
  o.batch_id = std::stoull(meta.at("batch_id").get<std::string>());
  o.client = meta.value("client", 0);
  o.weights = checkpoint::load_checkpoint(dir / "weights.bin");
  o.gradients = checkpoint::load_gradients(dir / "gradients.bin", o.weights);
  return o;
}

std::optional<ImageBatch> load_truth(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "truth.bin")) return std::nullopt;
  const auto f = checkpoint::read_arrays(dir / "truth.bin");
  ImageBatch b;
  const auto& px = f.get("pixels");
  b.pixels = Tensor::from_data(px.shape, px.data);
  for (double v : f.get("labels").data) b.labels.push_back(static_cast<int>(v));
  for (double v : f.get("ids").data) b.ids.push_back(static_cast<std::int64_t>(v));
  return b;
}

}  // namespace gradinv::fedsim
