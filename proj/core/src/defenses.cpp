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

#include "gradinv/defenses.hpp"

#include <cmath>
#include <iostream>

#include "gradinv/attacks.hpp"
#include "gradinv/errors.hpp"
#include "gradinv/optim.hpp"

namespace gradinv::defenses {

void DefenseConfig::validate() const {
  if (!(sigma >= 0)) throw ConfigError("defense sigma must be >= 0");
  if (!(dcs.lr > 0)) throw ConfigError("dcs lr must be > 0");
  if (dcs.iterations < 0) throw ConfigError("dcs iterations must be >= 0");
  if (precode_latent < 0) throw ConfigError("precode latent must be >= 0");
}

std::string to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::kNone: return "none";
    case DefenseKind::kGaussian: return "gaussian";
    case DefenseKind::kPrecode: return "precode";
    case DefenseKind::kDcs: return "dcs";
  }
  return "none";
}

DefenseKind defense_kind_from_string(const std::string& s) {
  if (s == "none") return DefenseKind::kNone;
  if (s == "gaussian") return DefenseKind::kGaussian;
  if (s == "precode") return DefenseKind::kPrecode;
  if (s == "dcs") return DefenseKind::kDcs;
  throw ConfigError("unknown defense '" + s + "'");
}

nlohmann::json to_json(const DefenseConfig& c) {
  nlohmann::json j = {{"kind", to_string(c.kind)}};
  if (c.kind == DefenseKind::kGaussian) j["sigma"] = c.sigma;
  if (c.kind == DefenseKind::kPrecode) j["precode_latent"] = c.precode_latent;
  if (c.kind == DefenseKind::kDcs) {
    j["dcs"] = {{"lr", c.dcs.lr}, {"iterations", c.dcs.iterations},
                {"lambda", c.dcs.lambda}};
  }
  return j;
}

models::GradientSet gaussian_defense(const models::GradientSet& grads,
                                     double sigma, Rng& rng) {
  models::GradientSet out;
  out.reserve(grads.size());
  std::normal_distribution<double> noise(0.0, sigma);
  for (const auto& g : grads) {
    auto v = g.to_vector();
    if (sigma > 0)
      for (auto& e : v) e += noise(rng);
    out.push_back(Tensor::from_data(g.shape(), std::move(v)));
  }
  return out;
}

namespace {

models::ParameterSet with_bottleneck(const models::ParameterSet& base,
                                     std::int64_t latent, Tensor enc_w,
                                     Tensor enc_b, Tensor dec_w, Tensor dec_b) {
  if (base.spec().precode) throw ConfigError("model already has a bottleneck");
  auto spec = base.spec();
  spec.precode = true;
  spec.precode_latent = latent == spec.feature_width() ? 0 : latent;
  std::vector<models::Parameter> params;
  for (const auto& p : base.params()) {
    if (p.is_final_fc || p.name == "fc_out.bias") continue;
    params.push_back({p.name, p.kind, p.value.clone().set_requires_grad(true),
                      p.is_final_fc});
  }
  using models::LayerKind;
  params.push_back({"precode.encoder.weight", LayerKind::kPrecodeEncoder,
                    enc_w.set_requires_grad(true)});
  params.push_back({"precode.encoder.bias", LayerKind::kPrecodeEncoder,
                    enc_b.set_requires_grad(true)});
  params.push_back({"precode.decoder.weight", LayerKind::kPrecodeDecoder,
                    dec_w.set_requires_grad(true)});
  params.push_back({"precode.decoder.bias", LayerKind::kPrecodeDecoder,
                    dec_b.set_requires_grad(true)});
  for (const auto& p : base.params()) {
    if (p.is_final_fc || p.name == "fc_out.bias") {
      params.push_back({p.name, p.kind, p.value.clone().set_requires_grad(true),
                        p.is_final_fc});
    }
  }
  return models::ParameterSet(spec, std::move(params), base.bn().clone());
}

}  // namespace

models::ParameterSet attach_precode(const models::ParameterSet& base,
                                    std::uint64_t seed, std::int64_t latent) {
  const auto f = base.spec().feature_width();
  if (latent == 0) latent = f;
  Rng rng(seed);
  const double enc = 1.0 / std::sqrt(static_cast<double>(f));
  const double dec = 1.0 / std::sqrt(static_cast<double>(latent));
  return with_bottleneck(base, latent, uniform_tensor({2 * latent, f}, rng, -enc, enc),
                         uniform_tensor({2 * latent}, rng, -enc, enc),
                         uniform_tensor({f, latent}, rng, -dec, dec),
                         uniform_tensor({f}, rng, -dec, dec));
}

models::ParameterSet attach_identity_precode(const models::ParameterSet& base) {
  const auto f = base.spec().feature_width();
  std::vector<double> enc(2 * f * f, 0.0), dec(f * f, 0.0);
  for (std::int64_t i = 0; i < f; ++i) {
    enc[i * f + i] = 1.0;
    dec[i * f + i] = 1.0;
  }
  return with_bottleneck(base, f, Tensor::from_data({2 * f, f}, std::move(enc)),
                         Tensor::zeros({2 * f}),
                         Tensor::from_data({f, f}, std::move(dec)),
                         Tensor::zeros({f}));
}

namespace {

double pixel_mse(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double cosine_distance(const models::GradientSet& a, const models::GradientSet& b) {
  return attacks::gradient_distance(a, b, attacks::Distance::kCosine).value.item();
}

DcsResult dcs_attempt(const models::ParameterSet& params, const Tensor& truth,
                      std::span<const int> labels, const models::GradientSet& real,
                      const DcsConfig& config, Rng& rng,
                      const models::ForwardOptions& forward) {
  GradModeGuard enable(true);
  const auto shape = truth.shape();
  const auto truth_d = truth.detach();
  DcsResult r;
  std::vector<double> x = uniform_tensor(shape, rng, 0.0, 1.0).to_vector();

  auto objective = [&](std::span<const double> xv, std::span<double> g) {
    auto xt = Tensor::from_data(shape, {xv.begin(), xv.end()}, true);
    auto lg = models::loss_gradients(params, xt, labels, forward, true);
    auto match = attacks::gradient_distance(lg.grads, real,
                                            attacks::Distance::kCosine);
    auto apart = ops::scale(ops::norm_l2(ops::sub(xt, truth_d)), -config.lambda);
    auto total = ops::add(match.value, apart);
    auto gx = grad(total, {xt}).grads[0].data();
    std::copy(gx.begin(), gx.end(), g.begin());
    return total.item();
  };
  auto proxy_grads = [&](const std::vector<double>& xv) {
    auto xt = Tensor::from_data(shape, xv);
    return models::loss_gradients(params, xt, labels, forward, false).grads;
  };

  auto g0 = proxy_grads(x);
  r.initial_distance = cosine_distance(g0, real);
  r.initial_mse = pixel_mse(x, truth_d.data());
  optim::AdamOptions ao;
  ao.lr = config.lr;
  optim::Adam adam(ao);
  for (int it = 0; it < config.iterations; ++it) {
    r.trace.push_back(adam.step(objective, x).value);
    for (auto& v : x) v = std::clamp(v, 0.0, 1.0);
  }
  r.grads = config.iterations > 0 ? proxy_grads(x) : std::move(g0);
  r.final_distance = cosine_distance(r.grads, real);
  r.final_mse = pixel_mse(x, truth_d.data());
  r.proxy = Tensor::from_data(shape, std::move(x));
  return r;
}

}  // namespace

DcsResult dcs_conceal(const models::ParameterSet& params, const Tensor& truth,
                      std::span<const int> labels,
                      const models::GradientSet& real, const DcsConfig& config,
                      Rng& rng, const models::ForwardOptions& forward) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      return dcs_attempt(params, truth, labels, real, config, rng, forward);
    } catch (const NumericFault&) {
    }
  }
  std::cerr << "warning: DCS hit non-finite values twice; sending gaussian "
               "(sigma=0.01) gradients instead\n";
  DcsResult r;
  r.grads = gaussian_defense(real, 0.01, rng);
  r.fell_back = true;
  return r;
}

DefendedUpdate apply_defense(const DefenseConfig& config,
                             const models::ParameterSet& params,
                             const Tensor& x, std::span<const int> labels,
                             const models::GradientSet& raw, Rng& rng,
                             const models::ForwardOptions& forward) {
  DefendedUpdate out;
  switch (config.kind) {
    case DefenseKind::kNone:
    case DefenseKind::kPrecode:
      out.wire = raw;
      break;
    case DefenseKind::kGaussian:
      out.wire = gaussian_defense(raw, config.sigma, rng);
      break;
    case DefenseKind::kDcs: {
      auto r = dcs_conceal(params, x, labels, raw, config.dcs, rng, forward);
      out.wire = std::move(r.grads);
      out.fell_back = r.fell_back;
      break;
    }
  }
  return out;
}

}  // namespace gradinv::defenses
