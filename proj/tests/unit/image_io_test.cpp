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

#include "gradinv/errors.hpp"
#include "gradinv/image_io.hpp"
#include "gradinv/rng.hpp"
#include "test_util.hpp"

using namespace gradinv;
using namespace gradinv::image_io;

TEST(Png, RoundTrip) {
  gradinv::testing::TempDir dir("png");
  for (std::int64_t c : {1, 3}) {
    Image8 img{5, 7, c, {}};
    for (std::int64_t i = 0; i < 5 * 7 * c; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 7));
    const auto f = dir.path() / ("i" + std::to_string(c) + ".png");
    write_png(f, img);
    auto back = read_png(f);
    EXPECT_EQ(back.height, 5);
    EXPECT_EQ(back.width, 7);
    EXPECT_EQ(back.channels, c);
    EXPECT_EQ(back.pixels, img.pixels);
  }
}

TEST(Png, NotAPngFails) {
  gradinv::testing::TempDir dir("png_bad");
  {
    std::ofstream out(dir.path() / "x.png");
    out << "hello";
  }
  EXPECT_THROW(read_png(dir.path() / "x.png"), Error);
}

TEST(Grid, PlacesPermutedTiles) {
  Rng rng(3);
  auto a = uniform_tensor({3, 3, 4, 4}, rng, 0, 1);
  auto b = uniform_tensor({3, 3, 4, 4}, rng, 0, 1);
  auto g = make_grid({a, b}, {{}, {2, 0, 1}}, 1);
  EXPECT_EQ(g.channels, 3);
  EXPECT_EQ(g.width, 3 * 4 + 4 * 1);
  EXPECT_EQ(g.height, 2 * 4 + 3 * 1);
  // Row 1, column 0 shows image 2 of b.
  auto [y, x] = tile_origin(1, 0, 4, 4, 1);
  auto bv = b.to_vector();
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        const double v = bv[((2 * 3 + c) * 4 + i) * 4 + j];
        const auto px = g.pixels[((y + i) * g.width + (x + j)) * 3 + c];
        EXPECT_EQ(px, static_cast<std::uint8_t>(std::lround(v * 255)));
      }
  // Padding is white.
  EXPECT_EQ(g.pixels[0], 255);
}

TEST(Grid, ClampsOutOfRange) {
  auto t = Tensor::from_data({1, 1, 1, 2}, {-0.5, 1.7});
  auto g = make_grid({t}, {}, 0);
  EXPECT_EQ(g.pixels, (std::vector<std::uint8_t>{0, 255}));
}
