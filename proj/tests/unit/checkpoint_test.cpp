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

#include "gradinv/checkpoint.hpp"
#include "gradinv/defenses.hpp"
#include "gradinv/errors.hpp"
#include "test_util.hpp"

using namespace gradinv;
using namespace gradinv::checkpoint;

namespace {

models::ModelSpec small_lenet() {
  models::ModelSpec s;
  s.height = s.width = 8;
  s.num_classes = 4;
  s.conv1_channels = 3;
  s.conv2_channels = 4;
  s.kernel = 3;
  s.fc_width = 10;
  return s;
}

}  // namespace

TEST(Arrays, RoundTripIsBitExact) {
  gradinv::testing::TempDir dir("arrays");
  ArrayFile f;
  f.arrays.push_back({"a", {2, 3}, {1.0 / 3, -0.0, 1e-300, 5, 6, 7}});
  f.arrays.push_back({"b", {1}, {3.14159}});
  f.meta["note"] = "x";
  write_arrays(dir.path() / "f.bin", f);
  auto g = read_arrays(dir.path() / "f.bin");
  ASSERT_EQ(g.arrays.size(), 2u);
  EXPECT_EQ(g.get("a").shape, (Shape{2, 3}));
  EXPECT_EQ(g.get("a").data, f.arrays[0].data);
  EXPECT_TRUE(std::signbit(g.get("a").data[1]));
  EXPECT_EQ(g.meta["note"], "x");
  EXPECT_FALSE(g.contains("c"));
}

TEST(Arrays, HeaderLayout) {
  gradinv::testing::TempDir dir("layout");
  ArrayFile f;
  f.arrays.push_back({"v", {2}, {1.5, 2.5}});
  write_arrays(dir.path() / "f.bin", f);
  std::ifstream in(dir.path() / "f.bin", std::ios::binary);
  std::string magic(8, '\0');
  in.read(magic.data(), 8);
  EXPECT_EQ(magic, "GINVARR1");
  unsigned char len[8];
  in.read(reinterpret_cast<char*>(len), 8);
  std::uint64_t l = 0;
  for (int i = 7; i >= 0; --i) l = (l << 8) | len[i];
  std::string header(l, '\0');
  in.read(header.data(), static_cast<std::streamsize>(l));
  auto j = nlohmann::json::parse(header);
  EXPECT_EQ(j["dtype"], "float64");
  EXPECT_EQ(j["arrays"][0]["offset"], 0);
  double v[2];
  in.read(reinterpret_cast<char*>(v), sizeof v);
  EXPECT_EQ(v[1], 2.5);
}

TEST(Arrays, BadMagicIsFormatError) {
  gradinv::testing::TempDir dir("magic");
  {
    std::ofstream out(dir.path() / "f.bin", std::ios::binary);
    out << "NOTMAGIC\0\0\0\0\0\0\0\0";
  }
  EXPECT_THROW(read_arrays(dir.path() / "f.bin"), FormatError);
}

TEST(Checkpoint, ModelRoundTrip) {
  gradinv::testing::TempDir dir("ckpt");
  auto p = defenses::attach_precode(models::init_parameters(small_lenet(), 3), 4, 5);
  p.bn().mean[0] = Tensor::full(p.bn().mean[0].shape(), 0.25);
  save_checkpoint(dir.path() / "m.bin", p);
  auto q = load_checkpoint(dir.path() / "m.bin");
  EXPECT_EQ(q.spec(), p.spec());
  ASSERT_EQ(q.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(q.params()[i].name, p.params()[i].name);
    EXPECT_EQ(q.tensors()[i].to_vector(), p.tensors()[i].to_vector());
  }
  EXPECT_EQ(q.bn().mean[0].to_vector(), p.bn().mean[0].to_vector());
}

TEST(Checkpoint, GradientsRoundTripAndLayoutCheck) {
  gradinv::testing::TempDir dir("grads");
  auto p = models::init_parameters(small_lenet(), 3);
  Rng rng(1);
  models::GradientSet g;
  for (auto& t : p.tensors()) g.push_back(normal_tensor(t.shape(), rng));
  save_gradients(dir.path() / "g.bin", p, g);
  auto back = load_gradients(dir.path() / "g.bin", p);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(back[i].to_vector(), g[i].to_vector());
  auto other = small_lenet();
  other.fc_width = 12;
  EXPECT_THROW(load_gradients(dir.path() / "g.bin", models::init_parameters(other, 1)), Error);
}
