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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "gradinv/datasets.hpp"
#include "gradinv/errors.hpp"
#include "test_util.hpp"

using namespace gradinv;
using namespace gradinv::datasets;

TEST(Synthetic, DeterministicAndInRange) {
  auto a = synthetic_dataset(4, 40, 3);
  auto b = synthetic_dataset(4, 40, 3);
  EXPECT_EQ(a.labels(), b.labels());
  EXPECT_TRUE(std::equal(a.pixels().begin(), a.pixels().end(), b.pixels().begin()));
  for (double v : a.pixels()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  auto c = synthetic_dataset(4, 40, 4);
  EXPECT_FALSE(std::equal(a.pixels().begin(), a.pixels().end(), c.pixels().begin()));
}

TEST(Synthetic, BalancedLabels) {
  auto d = synthetic_dataset(10, 95, 1);
  std::vector<int> count(10, 0);
  for (int y : d.labels()) ++count[y];
  auto [lo, hi] = std::minmax_element(count.begin(), count.end());
  EXPECT_LE(*hi - *lo, 1);
}

TEST(Synthetic, BadArgumentsThrow) {
  EXPECT_THROW(synthetic_dataset(0, 10, 1), ConfigError);
  EXPECT_THROW(synthetic_dataset(2, 10, 1, {2, 8, 8}), ConfigError);
}

TEST(Dataset, SplitKeepsOrder) {
  auto d = synthetic_dataset(4, 20, 2, {1, 4, 4});
  auto [train, hold] = d.split(5);
  EXPECT_EQ(train.size(), 15);
  EXPECT_EQ(hold.size(), 5);
  EXPECT_EQ(hold.label(0), d.label(15));
  auto img = hold.image(4);
  auto want = d.image(19);
  EXPECT_TRUE(std::equal(img.begin(), img.end(), want.begin()));
}

TEST(Batcher, RepeatedReturnsSameBatch) {
  auto d = synthetic_dataset(4, 32, 5, {1, 4, 4});
  Batcher b(d, 4, true, 9);
  auto first = b.next();
  for (int i = 0; i < 5; ++i) {
    auto n = b.next();
    EXPECT_EQ(n.ids, first.ids);
    EXPECT_EQ(n.batch_id(), first.batch_id());
  }
}

TEST(Batcher, EpochCoversEachSampleOnce) {
  auto d = synthetic_dataset(4, 32, 5, {1, 4, 4});
  Batcher b(d, 4, false, 9);
  std::multiset<std::int64_t> seen;
  for (int i = 0; i < 8; ++i)
    for (auto id : b.next().ids) seen.insert(id);
  EXPECT_EQ(seen.size(), 32u);
  for (std::int64_t i = 0; i < 32; ++i) EXPECT_EQ(seen.count(i), 1u);
}

TEST(Batcher, StratifiedBatchesHaveDistinctLabels) {
  auto d = synthetic_dataset(10, 200, 6, {1, 4, 4});
  Batcher b(d, 8, false, 1, true);
  for (int i = 0; i < 20; ++i) {
    auto batch = b.next();
    std::set<int> labels(batch.labels.begin(), batch.labels.end());
    EXPECT_EQ(labels.size(), 8u);
  }
}

TEST(Batch, PixelsMatchImages) {
  auto d = synthetic_dataset(3, 12, 7, {3, 5, 5});
  std::vector<std::int64_t> ids{4, 1};
  auto batch = d.batch(ids);
  ASSERT_EQ(batch.pixels.shape(), (Shape{2, 3, 5, 5}));
  auto v = batch.pixels.to_vector();
  auto img = d.image(1);
  EXPECT_TRUE(std::equal(img.begin(), img.end(), v.begin() + 75));
  EXPECT_EQ(batch.labels[0], d.label(4));
}

TEST(Cifar10, RoundTripQuantisesTo8Bits) {
  gradinv::testing::TempDir dir("cifar");
  auto d = synthetic_dataset(10, 6, 8, {3, 32, 32});
  const auto f = dir.path() / "data_batch_1.bin";
  write_cifar10_file(f, d);
  EXPECT_EQ(std::filesystem::file_size(f), 6u * 3073u);
  auto back = read_cifar10_file(f);
  EXPECT_EQ(back.labels(), d.labels());
  auto a = d.pixels();
  auto b = back.pixels();
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(b[i], a[i], 0.5 / 255 + 1e-12);
    EXPECT_DOUBLE_EQ(b[i] * 255, std::round(b[i] * 255));
  }
  // Single-file path and the directory form agree when only batch 1 exists.
  EXPECT_EQ(load_cifar10(f).size(), 6);
}

TEST(Cifar10, TruncatedFileIsRejected) {
  gradinv::testing::TempDir dir("cifar_bad");
  const auto f = dir.path() / "bad.bin";
  {
    std::ofstream out(f, std::ios::binary);
    std::string junk(100, '\0');
    out << junk;
  }
  EXPECT_THROW(read_cifar10_file(f), FormatError);
  EXPECT_THROW(read_cifar10_file(dir.path() / "missing.bin"), Error);
}
