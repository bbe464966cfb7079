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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradinv/ops.hpp"
#include "gradinv/rng.hpp"
#include "gradinv/tensor.hpp"

namespace gradinv::models {

enum class Architecture { kLeNet, kMlp };
enum class Activation { kRelu, kSigmoid, kTanh };

// Static description of a classifier. Everything needed to rebuild the
// forward pass from a flat parameter list.
//
// LeNet: conv(c1, k x k, same padding) -> BN -> ReLU -> avgpool2
//        -> conv(c2, k x k, same padding) -> BN -> ReLU -> avgpool2
//        -> FC(fc_width) -> ReLU -> [PRECODE] -> FC(num_classes)
// MLP:   FC(mlp_hidden) -> activation -> [PRECODE] -> FC(num_classes)
struct ModelSpec {
  Architecture arch = Architecture::kLeNet;
  std::int64_t channels = 3;
  std::int64_t height = 32;
  std::int64_t width = 32;
  std::int64_t num_classes = 10;
  bool batch_norm = true;
  std::int64_t conv1_channels = 12;
  std::int64_t conv2_channels = 24;
  std::int64_t kernel = 5;
  std::int64_t fc_width = 768;
  std::int64_t mlp_hidden = 64;
  Activation mlp_activation = Activation::kSigmoid;
  bool precode = false;
  // 0 selects the feature width.
  std::int64_t precode_latent = 0;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  // Width of the input to the final fully connected layer.
  std::int64_t feature_width() const;
  std::int64_t latent_width() const;
  std::int64_t num_bn_layers() const;
  Shape input_shape(std::int64_t batch) const;

  bool operator==(const ModelSpec&) const = default;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

enum class LayerKind { kConv, kBatchNorm, kLinear, kPrecodeEncoder, kPrecodeDecoder };

struct Parameter {
  std::string name;
  LayerKind kind;
  Tensor value;
  bool is_final_fc = false;
};

// Per-BN-layer running moments, one [C] tensor per layer.
struct BNStats {
  std::vector<Tensor> mean;
  std::vector<Tensor> variance;

  BNStats clone() const;
};

using GradientSet = std::vector<Tensor>;

class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(ModelSpec spec, std::vector<Parameter> params, BNStats bn);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<Parameter>& params() const { return params_; }
  const BNStats& bn() const { return bn_; }
  BNStats& bn() { return bn_; }
  std::size_t size() const { return params_.size(); }

  // Parameter values in canonical order, as differentiation targets.
  std::vector<Tensor> tensors() const;
  const Tensor& at(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;
  std::size_t final_fc_weight_index() const;
  std::int64_t parameter_count() const;

  // Replaces every parameter value, keeping names and order.
  void set_values(std::vector<Tensor> values);

  // Deep copy: no storage shared with the original.
  ParameterSet clone() const;

 private:
  void validate() const;

  ModelSpec spec_;
  std::vector<Parameter> params_;
  BNStats bn_;
};

// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; BN gamma=1,
// beta=0, running mean 0, running variance 1.
ParameterSet init_parameters(const ModelSpec& spec, std::uint64_t seed);

// Variational bottleneck placed in front of the final FC layer.
struct PrecodeBottleneck {
  Tensor encoder_weight;  // [2 * latent, features], rows: mu then log var
  Tensor encoder_bias;    // [2 * latent]
  Tensor decoder_weight;  // [features, latent]
  Tensor decoder_bias;    // [features]

  std::int64_t latent() const { return decoder_weight.dim(1); }
  std::int64_t features() const { return encoder_weight.dim(1); }
};

std::optional<PrecodeBottleneck> precode_of(const ParameterSet& params);

// D(mu + exp(0.5 * logvar) * eps) with (mu, logvar) = E(features).
Tensor precode_forward(const PrecodeBottleneck& bottleneck,
                       const Tensor& features, const Tensor& eps);

enum class Mode { kTrain, kEval };

struct ForwardOptions {
  Mode mode = Mode::kTrain;
  // Reparameterisation noise [B, latent] for PRECODE models. When absent,
  // it is drawn from `rng`.
  std::optional<Tensor> precode_eps;
  Rng* rng = nullptr;
};

struct ForwardResult {
  Tensor logits;
  // Moments of each BN layer's input batch (for the BN prior and for
  // running-stat updates).
  std::vector<ops::BatchStats> bn_batch;
  // Input to the final FC layer.
  Tensor features;
};

ForwardResult forward(const ParameterSet& params, const Tensor& batch,
                      const ForwardOptions& options = {});

// Logits only; convenience wrapper over forward().
Tensor lenet_forward(const ParameterSet& params, const Tensor& batch,
                     Mode mode);

struct LossGradients {
  Tensor loss;  // mean cross-entropy over the batch
  GradientSet grads;
  ForwardResult forward;
};

// Gradients of the mean cross-entropy w.r.t. every parameter, in canonical
// order. With create_graph the gradients stay differentiable (w.r.t. the
// batch as well), which gradient matching needs.
LossGradients loss_gradients(const ParameterSet& params, const Tensor& batch,
                             std::span<const int> labels,
                             const ForwardOptions& options = {},
                             bool create_graph = false);

// Entry n: sum of the gradients of the incoming weights of output unit n of
// the final FC layer.
std::vector<double> final_fc_gradient_rows(const ParameterSet& params,
                                           const GradientSet& grads);

// running <- (1 - momentum) * running + momentum * batch.
void update_running_stats(ParameterSet& params,
                          const std::vector<ops::BatchStats>& batch);

std::string to_string(Architecture a);
std::string to_string(Activation a);

}  // namespace gradinv::models
