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
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradinv/models.hpp"
#include "gradinv/rng.hpp"

namespace gradinv::defenses {

enum class DefenseKind { kNone, kGaussian, kPrecode, kDcs };

struct DcsConfig {
  double lr = 0.1;
  int iterations = 50;
  // Weight of the dissimilarity term; the objective adds -lambda*||x~ - x*||.
  double lambda = 0.01;
};

struct DefenseConfig {
  DefenseKind kind = DefenseKind::kNone;
  double sigma = 0.0;
  DcsConfig dcs;
  // 0 picks the feature width.
  std::int64_t precode_latent = 0;

  void validate() const;
};

std::string to_string(DefenseKind k);
DefenseKind defense_kind_from_string(const std::string& s);
nlohmann::json to_json(const DefenseConfig& c);

// Adds independent N(0, sigma^2) noise to every element.
models::GradientSet gaussian_defense(const models::GradientSet& grads,
                                     double sigma, Rng& rng);

// Copy of `base` with a variational bottleneck in front of the final FC
// layer. Existing parameters keep their values.
models::ParameterSet attach_precode(const models::ParameterSet& base,
                                    std::uint64_t seed,
                                    std::int64_t latent = 0);

// Bottleneck with mu = identity, log-variance = 0, decoder = identity. With
// eps = 0 the logits equal the base model's.
models::ParameterSet attach_identity_precode(const models::ParameterSet& base);

struct DcsResult {
  models::GradientSet grads;  // proxy gradients for the wire
  Tensor proxy;               // optimised x~
  std::vector<double> trace;  // objective per iteration
  double initial_distance = 0.0;
  double final_distance = 0.0;
  double initial_mse = 0.0;
  double final_mse = 0.0;
  bool fell_back = false;
};

// Optimises a proxy batch whose gradients match `real` (cosine) while its
// pixels move away from `truth`. Only gradients of the proxy are returned.
DcsResult dcs_conceal(const models::ParameterSet& params, const Tensor& truth,
                      std::span<const int> labels,
                      const models::GradientSet& real, const DcsConfig& config,
                      Rng& rng, const models::ForwardOptions& forward = {});

struct DefendedUpdate {
  models::GradientSet wire;
  bool fell_back = false;
};

// Client-side dispatch. `raw` are the undefended gradients of (x, labels).
DefendedUpdate apply_defense(const DefenseConfig& config,
                             const models::ParameterSet& params,
                             const Tensor& x, std::span<const int> labels,
                             const models::GradientSet& raw, Rng& rng,
                             const models::ForwardOptions& forward = {});

}  // namespace gradinv::defenses
