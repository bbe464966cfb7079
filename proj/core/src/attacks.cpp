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

#include "gradinv/attacks.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

#include "gradinv/cost.hpp"
#include "gradinv/errors.hpp"
#include "gradinv/optim.hpp"
#include "gradinv/parallel.hpp"
#include "gradinv/rng.hpp"

namespace gradinv::attacks {

void AttackConfig::validate() const {
  if (alpha_tv < 0 || alpha_l2 < 0 || alpha_bn < 0 || alpha_group < 0) {
    throw ConfigError("attack coefficients must be non-negative");
  }
  if (seeds < 1) throw ConfigError("attack needs at least one seed");
  if (iterations < 0) throw ConfigError("attack iterations must be >= 0");
  if (max_pairs < 1) throw ConfigError("max_pairs must be >= 1");
  if (optimizer == Optimizer::kAdam && !(lr > 0)) {
    throw ConfigError("adam learning rate must be positive");
  }
}

AttackConfig preset(const std::string& name) {
  AttackConfig c;
  c.name = name;
  if (name == "dlg") {
    return c;
  }
  if (name == "inverting_gradients") {
    c.alpha_tv = 0.08;
    c.optimizer = Optimizer::kAdam;
    c.distance = Distance::kCosine;
    return c;
  }
  if (name == "gradinversion") {
    c.alpha_tv = 0.08;
    c.alpha_l2 = 0.0008;
    c.alpha_bn = 0.0001;
    c.alpha_group = 0.0001;
    c.seeds = 6;
    c.seed_selection = SeedSelection::kConsensus;
    return c;
  }
  if (name == "multiple_updates") {
    c.alpha_tv = 0.08;
    c.scale_by_image_size = false;
    c.multi_observation = true;
    c.seeds = 2;
    c.seed_selection = SeedSelection::kBestOf;
    return c;
  }
  throw ConfigError("unknown attack preset '" + name + "'");
}

std::vector<std::string> preset_names() {
  return {"dlg", "inverting_gradients", "gradinversion", "multiple_updates"};
}

std::string to_string(Distance d) { return d == Distance::kL2 ? "l2" : "cosine"; }
std::string to_string(Optimizer o) { return o == Optimizer::kLbfgs ? "lbfgs" : "adam"; }
std::string to_string(LabelPrior p) {
  return p == LabelPrior::kUniform ? "uniform" : "dummy";
}
std::string to_string(SeedSelection s) {
  return s == SeedSelection::kConsensus ? "consensus" : "best-of";
}

nlohmann::json to_json(const AttackConfig& c) {
  return {{"name", c.name},
          {"distance", to_string(c.distance)},
          {"optimizer", to_string(c.optimizer)},
          {"alpha_tv", c.alpha_tv},
          {"alpha_l2", c.alpha_l2},
          {"alpha_bn", c.alpha_bn},
          {"alpha_group", c.alpha_group},
          {"scale_by_image_size", c.scale_by_image_size},
          {"seeds", c.seeds},
          {"iterations", c.iterations},
          {"multi_observation", c.multi_observation},
          {"max_pairs", c.max_pairs},
          {"lr", c.lr},
          {"seed_selection", to_string(c.seed_selection)},
          {"per_layer_cosine", c.per_layer_cosine},
          {"label_prior", to_string(c.label_prior)}};
}

AttackConfig attack_config_from_json(const nlohmann::json& j) {
  AttackConfig c;
  try {
    c.name = j.at("name").get<std::string>();
    const auto distance = j.at("distance").get<std::string>();
    if (distance != "l2" && distance != "cosine") throw ConfigError("bad distance " + distance);
    c.distance = distance == "l2" ? Distance::kL2 : Distance::kCosine;
    const auto opt = j.at("optimizer").get<std::string>();
    if (opt != "lbfgs" && opt != "adam") throw ConfigError("bad optimizer " + opt);
    c.optimizer = opt == "lbfgs" ? Optimizer::kLbfgs : Optimizer::kAdam;
    c.alpha_tv = j.at("alpha_tv");
    c.alpha_l2 = j.at("alpha_l2");
    c.alpha_bn = j.at("alpha_bn");
    c.alpha_group = j.at("alpha_group");
    c.scale_by_image_size = j.at("scale_by_image_size");
    c.seeds = j.at("seeds");
    c.iterations = j.at("iterations");
    c.multi_observation = j.at("multi_observation");
    c.max_pairs = j.at("max_pairs");
    c.lr = j.at("lr");
    const auto sel = j.at("seed_selection").get<std::string>();
    if (sel != "consensus" && sel != "best-of") throw ConfigError("bad seed_selection " + sel);
    c.seed_selection = sel == "consensus" ? SeedSelection::kConsensus : SeedSelection::kBestOf;
    c.per_layer_cosine = j.at("per_layer_cosine");
    const auto prior = j.value("label_prior", std::string("dummy"));
    if (prior != "uniform" && prior != "dummy") throw ConfigError("bad label_prior " + prior);
    c.label_prior = prior == "uniform" ? LabelPrior::kUniform : LabelPrior::kDummy;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad attack config: ") + e.what());
  }
  c.validate();
  return c;
}

double image_size_factor(std::int64_t height, std::int64_t width) {
  return static_cast<double>(height * width) / (32.0 * 32.0);
}

Coefficients scaled_coefficients(const AttackConfig& c, std::int64_t height,
                                 std::int64_t width, std::int64_t batch) {
  const double f = c.scale_by_image_size ? image_size_factor(height, width) : 1.0;
  const double s = f / static_cast<double>(batch);
  return {c.alpha_tv * s, c.alpha_l2 * s, c.alpha_bn * s, c.alpha_group * s};
}

namespace {

std::vector<int> uniform_labels(std::int64_t b, std::int64_t k) {
  std::vector<int> out(b);
  for (std::int64_t i = 0; i < b; ++i) out[i] = static_cast<int>(i % k);
  return out;
}

// Counts from signs alone: most negative rows first, cycling.
std::vector<int> sign_labels(const std::vector<double>& rows, std::int64_t b) {
  std::vector<int> neg;
  for (std::size_t n = 0; n < rows.size(); ++n)
    if (rows[n] < 0) neg.push_back(static_cast<int>(n));
  if (neg.empty()) return uniform_labels(b, static_cast<std::int64_t>(rows.size()));
  std::stable_sort(neg.begin(), neg.end(),
                   [&](int a, int c) { return rows[a] < rows[c]; });
  std::vector<int> out(b);
  for (std::int64_t i = 0; i < b; ++i) out[i] = neg[i % neg.size()];
  std::sort(out.begin(), out.end());
  return out;
}

// Floors of the clamped estimates, then the remaining slots go to the
// largest fractional parts (or are taken from the smallest).
std::vector<int> repair_counts(const std::vector<double>& raw, std::int64_t b) {
  const auto k = raw.size();
  std::vector<std::int64_t> count(k);
  std::vector<double> frac(k);
  std::int64_t total = 0;
  for (std::size_t n = 0; n < k; ++n) {
    const double r = std::clamp(raw[n], 0.0, static_cast<double>(b));
    count[n] = static_cast<std::int64_t>(std::floor(r));
    frac[n] = r - std::floor(r);
    total += count[n];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t c) { return frac[a] > frac[c]; });
  for (std::size_t i = 0; total < b; i = (i + 1) % k) {
    ++count[order[i]];
    ++total;
  }
  for (std::size_t i = k; total > b;) {
    i = (i == 0 ? k : i) - 1;
    if (count[order[i]] > 0) {
      --count[order[i]];
      --total;
    }
  }
  std::vector<int> out;
  for (std::size_t n = 0; n < k; ++n)
    for (std::int64_t c = 0; c < count[n]; ++c) out.push_back(static_cast<int>(n));
  return out;
}

}  // namespace

LabelRecovery recover_labels(const Observation& obs, std::int64_t batch_size,
                             std::uint64_t seed, LabelPrior prior) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  const auto& spec = obs.weights.spec();
  const auto k = spec.num_classes;
  LabelRecovery out;
  const auto rows = models::final_fc_gradient_rows(obs.weights, obs.gradients);
  const bool all_zero =
      std::all_of(rows.begin(), rows.end(), [](double v) { return v == 0.0; });
  if (all_zero) {
    out.labels = uniform_labels(batch_size, k);
    out.degenerate = true;
    return out;
  }

  Rng rng(seed);
  double obar = 0.0;
  std::vector<double> psum(k, static_cast<double>(batch_size) / static_cast<double>(k));
  {
    NoGradGuard no_grad;
    const auto dummy = normal_tensor(spec.input_shape(batch_size), rng);
    models::ForwardOptions fo;
    fo.mode = models::Mode::kTrain;
    fo.rng = &rng;
    const auto fwd = models::forward(obs.weights, dummy, fo);
    obar = ops::sum(fwd.features).item() / static_cast<double>(batch_size);
    if (prior == LabelPrior::kDummy) {
      const auto p = ops::softmax(fwd.logits).to_vector();
      std::fill(psum.begin(), psum.end(), 0.0);
      for (std::int64_t b = 0; b < batch_size; ++b)
        for (std::int64_t n = 0; n < k; ++n) psum[n] += p[b * k + n];
    }
  }
  if (!std::isfinite(obar) || std::fabs(obar) < 1e-12) {
    out.labels = sign_labels(rows, batch_size);
    out.degenerate = true;
    return out;
  }
  const double b = static_cast<double>(batch_size);
  out.raw_counts.resize(k);
  for (std::int64_t n = 0; n < k; ++n) {
    out.raw_counts[n] = psum[n] - b * rows[n] / obar;
  }
  out.labels = repair_counts(out.raw_counts, batch_size);
  return out;
}

DistanceResult gradient_distance(std::span<const Tensor> dummy,
                                 std::span<const Tensor> target, Distance d,
                                 bool per_layer) {
  if (dummy.size() != target.size() || dummy.empty()) {
    throw StructuralError("gradient_distance: sets not aligned");
  }
  for (std::size_t i = 0; i < dummy.size(); ++i) {
    if (dummy[i].shape() != target[i].shape()) {
      throw StructuralError("gradient_distance: shape mismatch at entry " +
                            std::to_string(i));
    }
  }
  DistanceResult r;
  if (d == Distance::kL2) {
    Tensor acc;
    for (std::size_t i = 0; i < dummy.size(); ++i) {
      auto term = ops::sum(ops::square(ops::sub(dummy[i], target[i])));
      acc = acc.defined() ? ops::add(acc, term) : term;
    }
    r.value = acc;
    return r;
  }

  auto tnorm_sq = [](const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return s;
  };
  if (per_layer) {
    Tensor acc;
    double layers = 0.0;
    for (std::size_t i = 0; i < dummy.size(); ++i) {
      const double tn = std::sqrt(tnorm_sq(target[i]));
      Tensor term;
      if (tn == 0.0) {
        r.zero_norm_target = true;
        term = Tensor::scalar(1.0);
      } else {
        const auto num = ops::dot(dummy[i], target[i].detach());
        const auto den = ops::scale(
            ops::sqrt(ops::add_const(ops::sum(ops::square(dummy[i])), 1e-300)), tn);
        term = ops::add_const(ops::neg(ops::div(num, den)), 1.0);
      }
      acc = acc.defined() ? ops::add(acc, term) : term;
      layers += 1.0;
    }
    r.value = ops::scale(acc, 1.0 / layers);
    return r;
  }

  double tsq = 0.0;
  for (const auto& t : target) tsq += tnorm_sq(t);
  if (tsq == 0.0) {
    r.zero_norm_target = true;
    r.value = Tensor::scalar(1.0);
    return r;
  }
  Tensor num, dsq;
  for (std::size_t i = 0; i < dummy.size(); ++i) {
    auto n = ops::dot(dummy[i], target[i].detach());
    auto q = ops::sum(ops::square(dummy[i]));
    num = num.defined() ? ops::add(num, n) : n;
    dsq = dsq.defined() ? ops::add(dsq, q) : q;
  }
  const auto den = ops::scale(ops::sqrt(ops::add_const(dsq, 1e-300)), std::sqrt(tsq));
  r.value = ops::add_const(ops::neg(ops::div(num, den)), 1.0);
  return r;
}

Tensor tv_loss(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("tv_loss expects [B, C, H, W]");
  Tensor total = Tensor::scalar(0.0);
  if (x.dim(3) > 1) total = ops::add(total, ops::sum(ops::abs(ops::finite_diff(x, 3))));
  if (x.dim(2) > 1) total = ops::add(total, ops::sum(ops::abs(ops::finite_diff(x, 2))));
  return total;
}

Tensor bn_prior(const std::vector<ops::BatchStats>& batch,
                const models::BNStats& reference) {
  if (batch.size() != reference.mean.size()) {
    throw StructuralError("bn_prior: layer count mismatch");
  }
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t l = 0; l < batch.size(); ++l) {
    total = ops::add(total, ops::norm_l2(ops::sub(batch[l].mean, reference.mean[l])));
    total = ops::add(
        total, ops::norm_l2(ops::sub(batch[l].variance, reference.variance[l])));
  }
  return total;
}

Tensor group_loss(const Tensor& x, const Tensor& consensus) {
  return ops::sum(ops::square(ops::sub(x, consensus.detach())));
}

Tensor total_regularization(const Tensor& x, const Coefficients& k,
                            const std::vector<ops::BatchStats>& bn_batch,
                            const models::BNStats& reference,
                            const Tensor& consensus) {
  Tensor total = Tensor::scalar(0.0);
  if (k.tv > 0) total = ops::add(total, ops::scale(tv_loss(x), k.tv));
  if (k.l2 > 0) total = ops::add(total, ops::scale(ops::norm_l2(x), k.l2));
  if (k.bn > 0) {
    if (bn_batch.empty()) {
      throw ConfigError("BN prior requested for a model without BN layers");
    }
    total = ops::add(total, ops::scale(bn_prior(bn_batch, reference), k.bn));
  }
  if (k.group > 0 && consensus.defined()) {
    total = ops::add(total, ops::scale(group_loss(x, consensus), k.group));
  }
  return total;
}

ObjectiveParts attack_objective(std::span<const Observation> pairs,
                                const Tensor& x, std::span<const int> labels,
                                const AttackConfig& config,
                                const Coefficients& k, const Tensor& consensus,
                                const std::optional<Tensor>& precode_eps) {
  ObjectiveParts out;
  Tensor matching;
  std::vector<ops::BatchStats> latest_bn;
  for (const auto& obs : pairs) {
    models::ForwardOptions fo;
    fo.mode = models::Mode::kTrain;
    fo.precode_eps = precode_eps;
    auto lg = models::loss_gradients(obs.weights, x, labels, fo, true);
    auto d = gradient_distance(lg.grads, obs.gradients, config.distance,
                               config.per_layer_cosine);
    out.zero_norm_target = out.zero_norm_target || d.zero_norm_target;
    matching = matching.defined() ? ops::add(matching, d.value) : d.value;
    latest_bn = std::move(lg.forward.bn_batch);
  }
  out.matching = matching;
  out.regularization = total_regularization(x, k, latest_bn,
                                            pairs.back().weights.bn(), consensus);
  out.total = ops::add(out.matching, out.regularization);
  return out;
}

namespace {

struct SeedState {
  std::vector<double> x;
  std::optional<optim::Lbfgs> lbfgs;
  std::optional<optim::Adam> adam;
  SeedTrace trace;
  std::optional<Tensor> eps;
};

}  // namespace

RecoveryResult run_attack(const AttackInputs& in, const AttackConfig& config) {
  config.validate();
  if (in.observations.empty()) {
    throw StructuralError("run_attack needs at least one observation");
  }
  CostProbe probe;
  RecoveryResult result;
  const auto& latest = in.observations.back();
  const auto& spec = latest.weights.spec();
  const auto b = in.batch_size;
  const Shape shape = spec.input_shape(b);

  std::size_t first = in.observations.size() - 1;
  if (config.multi_observation) {
    const auto n = std::min<std::size_t>(config.max_pairs, in.observations.size());
    first = in.observations.size() - n;
    for (std::size_t i = first; i < in.observations.size(); ++i) {
      if (in.observations[i].batch_id != latest.batch_id) {
        throw ConfigError(
            "multi-observation attack needs one repeated batch across pairs");
      }
    }
  }
  const auto pairs = in.observations.subspan(first);
  result.pairs_used = static_cast<int>(pairs.size());

  if (in.labels) {
    if (static_cast<std::int64_t>(in.labels->size()) != b) {
      throw ShapeError("known labels do not match the batch size");
    }
    result.labels = *in.labels;
  } else {
    auto rec = recover_labels(latest, b, derive_seed(in.seed, {0x1abe1}),
                              config.label_prior);
    result.labels = rec.labels;
    result.labels_degenerate = rec.degenerate;
  }

  const auto k = scaled_coefficients(config, spec.height, spec.width, b);
  if (k.bn > 0 && spec.num_bn_layers() == 0) {
    throw ConfigError("attack '" + config.name +
                      "' uses the BN prior but the model has no BN layers");
  }
  const bool consensus_mode =
      config.seed_selection == SeedSelection::kConsensus && config.seeds > 1;
  const auto precode = models::precode_of(latest.weights);

  std::vector<SeedState> seeds(config.seeds);
  auto draw = [&](int s) {
    auto& st = seeds[s];
    if (in.init && st.trace.restarts == 0) {
      if (in.init->shape() != shape) throw ShapeError("attack init has wrong shape");
      st.x = in.init->to_vector();
    } else {
      Rng rng(derive_seed(in.seed, {static_cast<std::uint64_t>(s), 0x1417,
                                    static_cast<std::uint64_t>(st.trace.restarts)}));
      st.x = ops::clamp(normal_tensor(shape, rng, 0.5, 0.25), 0.0, 1.0).to_vector();
    }
    if (precode) {
      Rng rng(derive_seed(in.seed, {static_cast<std::uint64_t>(s), 0xe95}));
      st.eps = normal_tensor({b, precode->latent()}, rng);
    }
    st.lbfgs.reset();
    st.adam.reset();
    if (config.optimizer == Optimizer::kLbfgs) {
      st.lbfgs.emplace();
    } else {
      optim::AdamOptions ao;
      ao.lr = config.lr;
      st.adam.emplace(ao);
    }
  };
  for (int s = 0; s < config.seeds; ++s) draw(s);

  std::atomic<bool> zero_norm{false};
  auto objective_for = [&](int s, const Tensor& consensus) {
    return [&, s, consensus](std::span<const double> xv, std::span<double> g) {
      GradModeGuard enable(true);
      auto xt = Tensor::from_data(shape, {xv.begin(), xv.end()}, true);
      auto parts = attack_objective(pairs, xt, result.labels, config, k,
                                    consensus, seeds[s].eps);
      if (parts.zero_norm_target) zero_norm = true;
      auto gx = grad(parts.total, {xt}).grads[0];
      auto gd = gx.data();
      std::copy(gd.begin(), gd.end(), g.begin());
      return parts.total.item();
    };
  };

  auto advance = [&](int s, const Tensor& consensus) {
    auto& st = seeds[s];
    if (st.trace.failed) return;
    for (;;) {
      try {
        const auto f = objective_for(s, consensus);
        const auto info = st.lbfgs ? st.lbfgs->step(f, st.x) : st.adam->step(f, st.x);
        st.trace.losses.push_back(info.value);
        return;
      } catch (const NumericFault&) {
        if (st.trace.restarts >= 1) {
          st.trace.failed = true;
          return;
        }
        ++st.trace.restarts;
        draw(s);
      }
    }
  };

  auto current_consensus = [&]() {
    std::vector<double> c(shape_numel(shape), 0.0);
    double live = 0.0;
    for (const auto& st : seeds) {
      if (st.trace.failed) continue;
      for (std::size_t i = 0; i < c.size(); ++i) c[i] += st.x[i];
      live += 1.0;
    }
    if (live > 0)
      for (auto& v : c) v /= live;
    return Tensor::from_data(shape, std::move(c));
  };

  const std::size_t workers =
      config.workers > 0 ? static_cast<std::size_t>(config.workers) : default_workers();
  if (consensus_mode) {
    for (int it = 0; it < config.iterations; ++it) {
      const auto consensus = k.group > 0 ? current_consensus() : Tensor();
      parallel_for(seeds.size(), workers,
                   [&](std::size_t s) { advance(static_cast<int>(s), consensus); });
      if (k.group > 0) {
        for (auto& st : seeds)
          if (st.lbfgs) st.lbfgs->invalidate();
      }
    }
  } else {
    parallel_for(seeds.size(), workers, [&](std::size_t s) {
      for (int it = 0; it < config.iterations; ++it) advance(static_cast<int>(s), Tensor());
    });
  }
  result.iterations = config.iterations;

  // Final point per seed: the last iterate under consensus (its objective
  // drifts with the consensus), otherwise the best point evaluated.
  int chosen = -1;
  std::vector<double> chosen_x;
  for (int s = 0; s < config.seeds; ++s) {
    auto& st = seeds[s];
    if (st.trace.failed) continue;
    std::vector<double> xs = st.x;
    double loss;
    const bool use_best = !consensus_mode;
    const auto& best_x = st.lbfgs ? st.lbfgs->best_x() : st.adam->best_x();
    const double best_v = st.lbfgs ? st.lbfgs->best_value() : st.adam->best_value();
    if (use_best && !best_x.empty()) {
      xs = best_x;
      loss = best_v;
    } else if (!st.trace.losses.empty()) {
      loss = st.trace.losses.back();
    } else {
      std::vector<double> g(xs.size());
      try {
        loss = objective_for(s, Tensor())(xs, g);
      } catch (const NumericFault&) {
        st.trace.failed = true;
        continue;
      }
    }
    st.trace.final_loss = loss;
    if (chosen < 0 || loss < seeds[chosen].trace.final_loss) {
      chosen = s;
      chosen_x = xs;
    }
  }
  for (const auto& st : seeds) result.seeds.push_back(st.trace);
  result.zero_norm_target = zero_norm;

  if (chosen < 0) {
    result.failed = true;
    result.diagnostics = "all " + std::to_string(config.seeds) +
                         " seeds hit non-finite losses twice";
    result.raw = Tensor::zeros(shape);
  } else {
    result.chosen_seed = chosen;
    result.final_loss = seeds[chosen].trace.final_loss;
    result.raw = Tensor::from_data(shape, std::move(chosen_x));
  }
  result.recovered = ops::clamp(result.raw, 0.0, 1.0);
  const auto cost = probe.finish();
  result.wall_seconds = cost.wall_seconds;
  result.peak_memory_bytes = cost.peak_memory_bytes;
  result.tensor_peak_bytes = cost.tensor_peak_bytes;
  return result;
}

}  // namespace gradinv::attacks
