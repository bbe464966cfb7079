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

#include "gradinv/models.hpp"

#include <cmath>

#include "gradinv/errors.hpp"

namespace gradinv::models {
namespace {

Tensor leaf(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

Tensor uniform_fan_in(const Shape& shape, std::int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return leaf(uniform_tensor(shape, rng, -bound, bound));
}

void add_linear(std::vector<Parameter>& out, const std::string& name,
                std::int64_t in, std::int64_t outw, Rng& rng, LayerKind kind,
                bool final_fc = false) {
  out.push_back({name + ".weight", kind, uniform_fan_in({outw, in}, in, rng),
                 final_fc});
  out.push_back({name + ".bias", kind, uniform_fan_in({outw}, in, rng),
                 final_fc});
}

Tensor activate(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::kRelu:
      return ops::relu(x);
    case Activation::kSigmoid:
      return ops::sigmoid(x);
    case Activation::kTanh:
      return ops::tanh(x);
  }
  return x;
}

Architecture parse_arch(const std::string& s) {
  if (s == "lenet") return Architecture::kLeNet;
  if (s == "mlp") return Architecture::kMlp;
  throw ConfigError("unknown architecture '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "sigmoid") return Activation::kSigmoid;
  if (s == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + s + "'");
}

}  // namespace

std::string to_string(Architecture a) {
  return a == Architecture::kLeNet ? "lenet" : "mlp";
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kRelu:
      return "relu";
    case Activation::kSigmoid:
      return "sigmoid";
    case Activation::kTanh:
      return "tanh";
  }
  return "?";
}

std::int64_t ModelSpec::feature_width() const {
  return arch == Architecture::kLeNet ? fc_width : mlp_hidden;
}

std::int64_t ModelSpec::latent_width() const {
  return precode_latent > 0 ? precode_latent : feature_width();
}

std::int64_t ModelSpec::num_bn_layers() const {
  return arch == Architecture::kLeNet && batch_norm ? 2 : 0;
}

Shape ModelSpec::input_shape(std::int64_t batch) const {
  return {batch, channels, height, width};
}

nlohmann::json to_json(const ModelSpec& s) {
  return {{"arch", to_string(s.arch)},
          {"channels", s.channels},
          {"height", s.height},
          {"width", s.width},
          {"num_classes", s.num_classes},
          {"batch_norm", s.batch_norm},
          {"conv1_channels", s.conv1_channels},
          {"conv2_channels", s.conv2_channels},
          {"kernel", s.kernel},
          {"fc_width", s.fc_width},
          {"mlp_hidden", s.mlp_hidden},
          {"mlp_activation", to_string(s.mlp_activation)},
          {"precode", s.precode},
          {"precode_latent", s.precode_latent},
          {"bn_momentum", s.bn_momentum},
          {"bn_eps", s.bn_eps}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.arch = parse_arch(j.at("arch").get<std::string>());
  s.channels = j.at("channels");
  s.height = j.at("height");
  s.width = j.at("width");
  s.num_classes = j.at("num_classes");
  s.batch_norm = j.at("batch_norm");
  s.conv1_channels = j.at("conv1_channels");
  s.conv2_channels = j.at("conv2_channels");
  s.kernel = j.at("kernel");
  s.fc_width = j.at("fc_width");
  s.mlp_hidden = j.at("mlp_hidden");
  s.mlp_activation = parse_activation(j.at("mlp_activation").get<std::string>());
  s.precode = j.at("precode");
  s.precode_latent = j.at("precode_latent");
  s.bn_momentum = j.at("bn_momentum");
  s.bn_eps = j.at("bn_eps");
  return s;
}

BNStats BNStats::clone() const {
  BNStats out;
  for (const auto& m : mean) out.mean.push_back(m.clone());
  for (const auto& v : variance) out.variance.push_back(v.clone());
  return out;
}

ParameterSet::ParameterSet(ModelSpec spec, std::vector<Parameter> params,
                           BNStats bn)
    : spec_(std::move(spec)), params_(std::move(params)), bn_(std::move(bn)) {
  validate();
}

void ParameterSet::validate() const {
  int final_weights = 0;
  for (const auto& p : params_) {
    if (p.is_final_fc && p.value.rank() == 2) ++final_weights;
  }
  if (final_weights != 1) {
    throw StructuralError("parameter set must flag exactly one final FC layer");
  }
  if (static_cast<std::int64_t>(bn_.mean.size()) != spec_.num_bn_layers() ||
      bn_.variance.size() != bn_.mean.size()) {
    throw StructuralError("BN statistics do not match the model layout");
  }
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw StructuralError("no parameter named '" + name + "'");
}

const Tensor& ParameterSet::at(const std::string& name) const {
  return params_[index_of(name)].value;
}

std::size_t ParameterSet::final_fc_weight_index() const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].is_final_fc && params_[i].value.rank() == 2) return i;
  }
  throw StructuralError("model has no final fully connected layer");
}

std::int64_t ParameterSet::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void ParameterSet::set_values(std::vector<Tensor> values) {
  if (values.size() != params_.size()) {
    throw StructuralError("set_values: expected " +
                          std::to_string(params_.size()) + " tensors, got " +
                          std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != params_[i].value.shape()) {
      throw ShapeError("set_values: " + params_[i].name + " expects " +
                       shape_str(params_[i].value.shape()) + ", got " +
                       shape_str(values[i].shape()));
    }
    params_[i].value = leaf(values[i].detach());
  }
}

ParameterSet ParameterSet::clone() const {
  std::vector<Parameter> params;
  params.reserve(params_.size());
  for (const auto& p : params_) {
    params.push_back({p.name, p.kind, leaf(p.value.clone()), p.is_final_fc});
  }
  return ParameterSet(spec_, std::move(params), bn_.clone());
}

ParameterSet init_parameters(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Parameter> params;
  BNStats bn;
  std::int64_t features = 0;
  if (spec.arch == Architecture::kLeNet) {
    if (spec.height % 4 != 0 || spec.width % 4 != 0) {
      throw ConfigError("LeNet input height/width must be divisible by 4");
    }
    const auto k = spec.kernel;
    const std::int64_t chans[2] = {spec.conv1_channels, spec.conv2_channels};
    std::int64_t in = spec.channels;
    for (int l = 0; l < 2; ++l) {
      const std::string name = "conv" + std::to_string(l + 1);
      const auto fan_in = in * k * k;
      params.push_back({name + ".weight", LayerKind::kConv,
                        uniform_fan_in({chans[l], in, k, k}, fan_in, rng)});
      if (spec.batch_norm) {
        const std::string bname = "bn" + std::to_string(l + 1);
        params.push_back({bname + ".gamma", LayerKind::kBatchNorm,
                          leaf(Tensor::full({chans[l]}, 1.0))});
        params.push_back({bname + ".beta", LayerKind::kBatchNorm,
                          leaf(Tensor::zeros({chans[l]}))});
        bn.mean.push_back(Tensor::zeros({chans[l]}));
        bn.variance.push_back(Tensor::full({chans[l]}, 1.0));
      } else {
        params.push_back({name + ".bias", LayerKind::kConv,
                          uniform_fan_in({chans[l]}, fan_in, rng)});
      }
      in = chans[l];
    }
    const auto flat = spec.conv2_channels * (spec.height / 4) * (spec.width / 4);
    add_linear(params, "fc1", flat, spec.fc_width, rng, LayerKind::kLinear);
    features = spec.fc_width;
  } else {
    const auto flat = spec.channels * spec.height * spec.width;
    add_linear(params, "fc1", flat, spec.mlp_hidden, rng, LayerKind::kLinear);
    features = spec.mlp_hidden;
  }
  if (spec.precode) {
    const auto latent = spec.latent_width();
    add_linear(params, "precode.encoder", features, 2 * latent, rng,
               LayerKind::kPrecodeEncoder);
    add_linear(params, "precode.decoder", latent, features, rng,
               LayerKind::kPrecodeDecoder);
  }
  add_linear(params, "fc_out", features, spec.num_classes, rng,
             LayerKind::kLinear, /*final_fc=*/true);
  return ParameterSet(spec, std::move(params), std::move(bn));
}

std::optional<PrecodeBottleneck> precode_of(const ParameterSet& params) {
  if (!params.spec().precode) return std::nullopt;
  return PrecodeBottleneck{params.at("precode.encoder.weight"),
                           params.at("precode.encoder.bias"),
                           params.at("precode.decoder.weight"),
                           params.at("precode.decoder.bias")};
}

Tensor precode_forward(const PrecodeBottleneck& b, const Tensor& features,
                       const Tensor& eps) {
  const auto latent = b.latent();
  const auto batch = features.dim(0);
  if (eps.shape() != Shape{batch, latent}) {
    throw ShapeError("precode_forward: eps shape " + shape_str(eps.shape()) +
                     " expected " + shape_str({batch, latent}));
  }
  auto enc = ops::linear(features, b.encoder_weight, b.encoder_bias);
  auto mu = ops::slice_cols(enc, 0, latent);
  auto logvar = ops::slice_cols(enc, latent, latent);
  auto sigma = ops::exp(ops::scale(logvar, 0.5));
  auto z = ops::gaussian_sample(mu, sigma, eps);
  return ops::linear(z, b.decoder_weight, b.decoder_bias);
}

ForwardResult forward(const ParameterSet& params, const Tensor& batch,
                      const ForwardOptions& options) {
  const auto& spec = params.spec();
  if (batch.rank() != 4 || batch.dim(1) != spec.channels ||
      batch.dim(2) != spec.height || batch.dim(3) != spec.width) {
    throw ShapeError("forward: batch shape " + shape_str(batch.shape()) +
                     " does not match model input " +
                     shape_str(spec.input_shape(batch.rank() ? batch.dim(0) : 0)));
  }
  const auto n = batch.dim(0);
  ForwardResult r;
  Tensor h;
  if (spec.arch == Architecture::kLeNet) {
    const ops::Conv2dParams same{1, spec.kernel / 2};
    const auto bn_mode = options.mode == Mode::kTrain
                             ? ops::BatchNormMode::kTrain
                             : ops::BatchNormMode::kEval;
    h = batch;
    for (int l = 0; l < 2; ++l) {
      const std::string idx = std::to_string(l + 1);
      h = ops::conv2d(h, params.at("conv" + idx + ".weight"), same);
      if (spec.batch_norm) {
        auto bn = ops::batchnorm(h, params.at("bn" + idx + ".gamma"),
                                 params.at("bn" + idx + ".beta"),
                                 params.bn().mean[l], params.bn().variance[l],
                                 bn_mode, spec.bn_eps);
        r.bn_batch.push_back(bn.batch);
        h = bn.output;
      } else {
        h = ops::add(h, ops::channel_broadcast(
                            params.at("conv" + idx + ".bias"), h.shape()));
      }
      h = ops::avg_pool2d(ops::relu(h), 2);
    }
    h = ops::reshape(h, {n, h.numel() / n});
    h = ops::relu(
        ops::linear(h, params.at("fc1.weight"), params.at("fc1.bias")));
  } else {
    h = ops::reshape(batch, {n, batch.numel() / n});
    h = activate(ops::linear(h, params.at("fc1.weight"), params.at("fc1.bias")),
                 spec.mlp_activation);
  }
  if (auto bottleneck = precode_of(params)) {
    Tensor eps;
    if (options.precode_eps) {
      eps = *options.precode_eps;
    } else if (options.rng) {
      eps = normal_tensor({n, bottleneck->latent()}, *options.rng);
    } else {
      throw ConfigError("PRECODE forward needs eps or an rng");
    }
    h = precode_forward(*bottleneck, h, eps);
  }
  r.features = h;
  r.logits = ops::linear(h, params.at("fc_out.weight"), params.at("fc_out.bias"));
  return r;
}

Tensor lenet_forward(const ParameterSet& params, const Tensor& batch,
                     Mode mode) {
  ForwardOptions o;
  o.mode = mode;
  return forward(params, batch, o).logits;
}

LossGradients loss_gradients(const ParameterSet& params, const Tensor& batch,
                             std::span<const int> labels,
                             const ForwardOptions& options, bool create_graph) {
  LossGradients out;
  out.forward = forward(params, batch, options);
  out.loss = ops::cross_entropy(out.forward.logits, labels);
  const auto wrt = params.tensors();
  auto r = grad(out.loss, wrt, create_graph);
  out.grads = std::move(r.grads);
  return out;
}

std::vector<double> final_fc_gradient_rows(const ParameterSet& params,
                                           const GradientSet& grads) {
  if (grads.size() != params.size()) {
    throw StructuralError("gradient set not aligned with parameter set");
  }
  const auto idx = params.final_fc_weight_index();
  const Tensor& g = grads[idx];
  if (g.shape() != params.params()[idx].value.shape()) {
    throw StructuralError("final FC gradient has wrong shape");
  }
  const auto rows = g.dim(0), cols = g.dim(1);
  std::vector<double> out(rows, 0.0);
  auto d = g.data();
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < cols; ++j) out[i] += d[i * cols + j];
  return out;
}

void update_running_stats(ParameterSet& params,
                          const std::vector<ops::BatchStats>& batch) {
  auto& bn = params.bn();
  if (batch.size() != bn.mean.size()) {
    throw StructuralError("batch statistics do not match BN layer count");
  }
  const double m = params.spec().bn_momentum;
  for (std::size_t l = 0; l < batch.size(); ++l) {
    std::vector<double> mean = bn.mean[l].to_vector();
    std::vector<double> var = bn.variance[l].to_vector();
    auto bm = batch[l].mean.data();
    auto bv = batch[l].variance.data();
    for (std::size_t c = 0; c < mean.size(); ++c) {
      mean[c] = (1.0 - m) * mean[c] + m * bm[c];
      var[c] = (1.0 - m) * var[c] + m * bv[c];
    }
    bn.mean[l] = Tensor::from_data(bn.mean[l].shape(), std::move(mean));
    bn.variance[l] = Tensor::from_data(bn.variance[l].shape(), std::move(var));
  }
}

}  // namespace gradinv::models
