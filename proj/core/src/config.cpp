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

#include "gradinv/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gradinv/errors.hpp"

namespace gradinv::config {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"experiment",
       {"name", "seed", "repetitions", "repetition_mode", "output_root",
        "workers", "save_observations", "align_cost"}},
      {"dataset",
       {"kind", "path", "classes", "size", "channels", "height", "width",
        "holdout", "seed"}},
      {"model",
       {"arch", "batch_norm", "conv1_channels", "conv2_channels", "kernel",
        "fc_width", "mlp_hidden", "activation", "bn_momentum", "bn_eps"}},
      {"train",
       {"lr", "total_iterations", "attack_rate", "batch_size",
        "repeated_batch", "clients", "include_initial", "eval_interval",
        "eval_samples", "stratified"}},
      {"attack",
       {"presets", "iterations", "seeds", "distance", "optimizer", "alpha_tv",
        "alpha_l2", "alpha_bn", "alpha_group", "scale_by_image_size",
        "multi_observation", "max_pairs", "lr", "seed_selection",
        "per_layer_cosine", "known_labels", "label_prior"}},
      {"defense",
       {"kind", "sigma", "dcs_lr", "dcs_iterations", "dcs_lambda",
        "precode_latent"}},
  };
  return s;
}

class Reader {
 public:
  Reader(const pt::ptree& tree, std::string section)
      : section_(std::move(section)) {
    if (auto child = tree.get_child_optional(section_)) node_ = &*child;
  }

  std::optional<std::string> raw(const std::string& key) const {
    if (!node_) return std::nullopt;
    auto v = node_->get_optional<std::string>(key);
    if (!v) return std::nullopt;
    return trim(*v);
  }

  template <class T>
  void read(const std::string& key, T& out) const {
    if (auto v = raw(key)) out = convert<T>(key, *v);
  }

 private:
  static std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }

  template <class T>
  T convert(const std::string& key, const std::string& v) const {
    const std::string where = "[" + section_ + "] " + key + " = '" + v + "'";
    if constexpr (std::is_same_v<T, bool>) {
      if (v == "true" || v == "1" || v == "yes") return true;
      if (v == "false" || v == "0" || v == "no") return false;
      throw ConfigError(where + ": expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      return v;
    } else {
      std::istringstream in(v);
      T out{};
      in >> out;
      if (in.fail() || !in.eof()) throw ConfigError(where + ": expected a number");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.find('-') != std::string::npos)
          throw ConfigError(where + ": expected a non-negative integer");
      }
      return out;
    }
  }

  std::string section_;
  const pt::ptree* node_ = nullptr;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

ExperimentConfig from_tree(const pt::ptree& tree) {
  for (const auto& [section, body] : tree) {
    const auto it = schema().find(section);
    if (it == schema().end()) throw ConfigError("unknown section [" + section + "]");
    if (!body.data().empty() && body.empty()) {
      throw ConfigError("key '" + section + "' outside any section");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) {
        throw ConfigError("unknown key '" + key + "' in [" + section + "]");
      }
    }
  }

  ExperimentConfig c;
  Reader ex(tree, "experiment");
  ex.read("name", c.name);
  ex.read("seed", c.seed);
  ex.read("repetitions", c.repetitions);
  if (auto v = ex.raw("repetition_mode")) {
    if (*v == "full") c.repetition_mode = RepetitionMode::kFull;
    else if (*v == "attack_seed") c.repetition_mode = RepetitionMode::kAttackSeed;
    else throw ConfigError("repetition_mode must be full or attack_seed");
  }
  ex.read("output_root", c.output_root);
  ex.read("workers", c.workers);
  ex.read("save_observations", c.save_observations);
  if (auto v = ex.raw("align_cost")) {
    if (*v == "perceptual") c.align_cost = metrics::AlignCost::kPerceptual;
    else if (*v == "mse") c.align_cost = metrics::AlignCost::kMse;
    else throw ConfigError("align_cost must be perceptual or mse");
  }

  Reader ds(tree, "dataset");
  if (auto v = ds.raw("kind")) {
    if (*v == "synthetic") c.dataset.kind = DatasetKind::kSynthetic;
    else if (*v == "cifar10") c.dataset.kind = DatasetKind::kCifar10;
    else throw ConfigError("dataset kind must be synthetic or cifar10");
  }
  ds.read("path", c.dataset.path);
  ds.read("classes", c.dataset.classes);
  ds.read("size", c.dataset.size);
  ds.read("channels", c.dataset.channels);
  ds.read("height", c.dataset.height);
  ds.read("width", c.dataset.width);
  ds.read("holdout", c.dataset.holdout);
  ds.read("seed", c.dataset.seed);
  if (c.dataset.kind == DatasetKind::kCifar10) {
    c.dataset.classes = 10;
    c.dataset.channels = 3;
    c.dataset.height = 32;
    c.dataset.width = 32;
  }

  Reader md(tree, "model");
  auto& m = c.model;
  if (auto v = md.raw("arch")) {
    if (*v == "lenet") m.arch = models::Architecture::kLeNet;
    else if (*v == "mlp") m.arch = models::Architecture::kMlp;
    else throw ConfigError("model arch must be lenet or mlp");
  }
  md.read("batch_norm", m.batch_norm);
  md.read("conv1_channels", m.conv1_channels);
  md.read("conv2_channels", m.conv2_channels);
  md.read("kernel", m.kernel);
  md.read("fc_width", m.fc_width);
  md.read("mlp_hidden", m.mlp_hidden);
  if (auto v = md.raw("activation")) {
    if (*v == "relu") m.mlp_activation = models::Activation::kRelu;
    else if (*v == "sigmoid") m.mlp_activation = models::Activation::kSigmoid;
    else if (*v == "tanh") m.mlp_activation = models::Activation::kTanh;
    else throw ConfigError("activation must be relu, sigmoid or tanh");
  }
  md.read("bn_momentum", m.bn_momentum);
  md.read("bn_eps", m.bn_eps);
  if (m.arch == models::Architecture::kMlp) m.batch_norm = false;
  m.channels = c.dataset.channels;
  m.height = c.dataset.height;
  m.width = c.dataset.width;
  m.num_classes = c.dataset.classes;

  Reader tr(tree, "train");
  auto& t = c.train;
  tr.read("lr", t.lr);
  tr.read("total_iterations", t.total_iterations);
  tr.read("attack_rate", t.attack_rate);
  tr.read("batch_size", t.batch_size);
  tr.read("repeated_batch", t.repeated_batch);
  tr.read("clients", t.clients);
  tr.read("include_initial", t.include_initial);
  tr.read("eval_interval", t.eval_interval);
  tr.read("eval_samples", t.eval_samples);
  tr.read("stratified", t.stratified);

  Reader at(tree, "attack");
  std::string presets = "dlg";
  at.read("presets", presets);
  at.read("known_labels", c.known_labels);
  for (const auto& name : split_list(presets)) {
    auto a = attacks::preset(name);
    at.read("iterations", a.iterations);
    at.read("seeds", a.seeds);
    if (auto v = at.raw("distance")) {
      if (*v == "l2") a.distance = attacks::Distance::kL2;
      else if (*v == "cosine") a.distance = attacks::Distance::kCosine;
      else throw ConfigError("distance must be l2 or cosine");
    }
    if (auto v = at.raw("optimizer")) {
      if (*v == "lbfgs") a.optimizer = attacks::Optimizer::kLbfgs;
      else if (*v == "adam") a.optimizer = attacks::Optimizer::kAdam;
      else throw ConfigError("optimizer must be lbfgs or adam");
    }
    at.read("alpha_tv", a.alpha_tv);
    at.read("alpha_l2", a.alpha_l2);
    at.read("alpha_bn", a.alpha_bn);
    at.read("alpha_group", a.alpha_group);
    at.read("scale_by_image_size", a.scale_by_image_size);
    at.read("multi_observation", a.multi_observation);
    at.read("max_pairs", a.max_pairs);
    at.read("lr", a.lr);
    if (auto v = at.raw("seed_selection")) {
      if (*v == "consensus") a.seed_selection = attacks::SeedSelection::kConsensus;
      else if (*v == "best-of") a.seed_selection = attacks::SeedSelection::kBestOf;
      else throw ConfigError("seed_selection must be consensus or best-of");
    }
    at.read("per_layer_cosine", a.per_layer_cosine);
    if (auto v = at.raw("label_prior")) {
      if (*v == "uniform") a.label_prior = attacks::LabelPrior::kUniform;
      else if (*v == "dummy") a.label_prior = attacks::LabelPrior::kDummy;
      else throw ConfigError("label_prior must be uniform or dummy");
    }
    c.attacks.push_back(a);
  }

  Reader df(tree, "defense");
  if (auto v = df.raw("kind")) c.defense.kind = defenses::defense_kind_from_string(*v);
  df.read("sigma", c.defense.sigma);
  df.read("dcs_lr", c.defense.dcs.lr);
  df.read("dcs_iterations", c.defense.dcs.iterations);
  df.read("dcs_lambda", c.defense.dcs.lambda);
  df.read("precode_latent", c.defense.precode_latent);
  if (c.defense.kind == defenses::DefenseKind::kPrecode) {
    c.model.precode = true;
    c.model.precode_latent = c.defense.precode_latent;
  }

  validate(c);
  return c;
}

}  // namespace

void validate(const ExperimentConfig& c) {
  if (c.name.empty() || c.name.find('/') != std::string::npos) {
    throw ConfigError("experiment name must be non-empty and contain no '/'");
  }
  if (c.repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (c.workers < 0) throw ConfigError("workers must be >= 0");
  const auto& d = c.dataset;
  if (d.classes < 2) throw ConfigError("dataset needs at least two classes");
  if (d.channels < 1 || d.height < 1 || d.width < 1) {
    throw ConfigError("dataset image shape must be positive");
  }
  if (d.kind == DatasetKind::kSynthetic && d.size <= d.holdout) {
    throw ConfigError("synthetic dataset size must exceed the holdout");
  }
  if (d.kind == DatasetKind::kCifar10 && d.path.empty()) {
    throw ConfigError("cifar10 dataset needs a path");
  }
  if (d.holdout < 0) throw ConfigError("holdout must be >= 0");
  if (c.model.arch == models::Architecture::kLeNet &&
      (c.model.height % 4 != 0 || c.model.width % 4 != 0)) {
    throw ConfigError("LeNet needs image height and width divisible by 4");
  }
  c.train.validate();
  c.defense.validate();
  if (c.attacks.empty()) throw ConfigError("at least one attack preset is required");
  for (const auto& a : c.attacks) {
    a.validate();
    if (a.multi_observation && !c.train.repeated_batch) {
      throw ConfigError("attack '" + a.name +
                        "' needs train.repeated_batch = true");
    }
    if (a.alpha_bn > 0 && !c.model.batch_norm) {
      throw ConfigError("attack '" + a.name + "' uses the BN prior; enable model.batch_norm or set alpha_bn = 0");
    }
  }
}

ExperimentConfig parse_config_text(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  return from_tree(tree);
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace gradinv::config
