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

#include <fstream>
#include <sstream>

#include "gradinv/config.hpp"
#include "gradinv/errors.hpp"

using namespace gradinv;
using namespace gradinv::config;

namespace {

std::string desk_text() {
  std::ifstream in(std::string(GRADINV_SOURCE_DIR) + "/configs/desk.ini");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string with(std::string text, const std::string& from, const std::string& to) {
  auto pos = text.find(from);
  if (pos == std::string::npos) throw std::logic_error("pattern missing: " + from);
  return text.replace(pos, from.size(), to);
}

}  // namespace

TEST(Config, ShippedConfigsParse) {
  for (auto* name : {"desk.ini", "cifar10.ini"}) {
    auto path = std::filesystem::path(GRADINV_SOURCE_DIR) / "configs" / name;
    ASSERT_TRUE(std::filesystem::exists(path)) << path;
    EXPECT_NO_THROW(parse_config(path)) << name;
  }
}

TEST(Config, DeskValues) {
  auto c = parse_config_text(desk_text());
  EXPECT_EQ(c.name, "desk");
  EXPECT_EQ(c.repetitions, 5);
  EXPECT_EQ(c.dataset.height, 16);
  EXPECT_EQ(c.model.height, 16);
  EXPECT_EQ(c.model.num_classes, 4);
  EXPECT_EQ(c.train.batch_size, 4);
  ASSERT_EQ(c.attacks.size(), 4u);
  EXPECT_EQ(c.attacks[0].name, "dlg");
  EXPECT_EQ(c.attacks[0].iterations, 50);
  EXPECT_EQ(c.defense.kind, defenses::DefenseKind::kNone);
}

TEST(Config, CommentsAndWhitespace) {
  auto c = parse_config_text(with(desk_text(), "seed = 1", "; note\n  seed   =   3   \n# hash\n\n"));
  EXPECT_EQ(c.seed, 3u);
}

TEST(Config, UnknownKeyOrSectionRejected) {
  EXPECT_THROW(parse_config_text(with(desk_text(), "seed = 1", "seed = 1\ncolour = red")),
               ConfigError);
  EXPECT_THROW(parse_config_text(desk_text() + "\n[extras]\nx = 1\n"), ConfigError);
}

TEST(Config, BadValuesRejected) {
  const std::vector<std::pair<std::string, std::string>> bad{
      {"batch_size = 4", "batch_size = four"},
      {"batch_size = 4", "batch_size = 0"},
      {"repetitions = 5", "repetitions = -1"},
      {"presets = dlg, inverting_gradients, gradinversion, multiple_updates",
       "presets = dlg, nonsense"},
      {"kind = none", "kind = gaussian\nsigma = -0.1"},
      {"kind = synthetic", "kind = tape"},
      {"lr = 0.01", "lr = 0.01\nlr = 0.02"},
      {"arch = lenet", "arch = lenet\nactivation = swish"},
      {"iterations = 50", "iterations = 50\nlabel_prior = oracle"},
      {"align_cost = perceptual", "align_cost = psnr"},
  };
  for (const auto& [from, to] : bad)
    EXPECT_THROW(parse_config_text(with(desk_text(), from, to)), ConfigError) << to;
}

TEST(Config, AttackOverridesApplyToEveryPreset) {
  auto c = parse_config_text(
      with(desk_text(), "iterations = 50", "iterations = 7\nlabel_prior = uniform"));
  for (const auto& a : c.attacks) {
    EXPECT_EQ(a.iterations, 7);
    EXPECT_EQ(a.label_prior, attacks::LabelPrior::kUniform);
  }
}

TEST(Config, DefenseParameters) {
  auto c = parse_config_text(with(desk_text(), "kind = none", "kind = gaussian\nsigma = 0.01"));
  EXPECT_EQ(c.defense.kind, defenses::DefenseKind::kGaussian);
  EXPECT_DOUBLE_EQ(c.defense.sigma, 0.01);
}

TEST(Config, MissingFileIsNotConfigSuccess) {
  EXPECT_THROW(parse_config("/nonexistent/x.ini"), Error);
}
