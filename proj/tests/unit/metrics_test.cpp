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
#include <numeric>
#include <random>

#include "gradinv/errors.hpp"
#include "gradinv/metrics.hpp"
#include "gradinv/rng.hpp"
#include "test_util.hpp"

using namespace gradinv;
using namespace gradinv::metrics;

TEST(Mse, KnownValue) {
  std::vector<double> a{0, 0, 0, 0}, b{1, 0, 0, 1};
  EXPECT_DOUBLE_EQ(mse(a, b), 0.5);
}

TEST(Psnr, IdenticalIsInfiniteAndKnownValue) {
  std::vector<double> a{0.2, 0.4};
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  std::vector<double> b{0.3, 0.5};  // mse 0.01 -> 20 dB
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
}

TEST(Ssim, IdenticalIsOneAndNoiseLowers) {
  std::mt19937_64 rng(1);
  auto a = gradinv::testing::random_vector(3 * 16 * 16, rng, 0, 1);
  EXPECT_NEAR(ssim(a, a, 3, 16, 16), 1.0, 1e-12);
  auto b = a;
  for (auto& v : b) v = std::clamp(v + 0.2 * (gradinv::testing::random_vector(1, rng)[0]), 0.0, 1.0);
  const double s = ssim(a, b, 3, 16, 16);
  EXPECT_LT(s, 0.99);
  EXPECT_NEAR(ssim(b, a, 3, 16, 16), s, 1e-12);
}

TEST(Ssim, SmallImagesShrinkTheWindow) {
  std::mt19937_64 rng(2);
  auto a = gradinv::testing::random_vector(3 * 8 * 8, rng, 0, 1);
  EXPECT_NEAR(ssim(a, a, 3, 8, 8), 1.0, 1e-12);
}

TEST(Perceptual, ZeroForIdenticalPositiveOtherwise) {
  PerceptualProxy p(3);
  Rng rng(3);
  auto a = uniform_tensor({3, 16, 16}, rng, 0, 1);
  auto b = uniform_tensor({3, 16, 16}, rng, 0, 1);
  EXPECT_NEAR(p(a, a), 0.0, 1e-15);
  EXPECT_GT(p(a, b), 0.0);
  EXPECT_NEAR(p(a, b), p(b, a), 1e-12);
}

TEST(Hungarian, KnownThreeByThree) {
  std::vector<double> c{4, 1, 3, 2, 0, 5, 3, 2, 2};
  auto r = hungarian(c, 3);
  EXPECT_EQ(r.column_of_row, (std::vector<int>{1, 0, 2}));
  EXPECT_DOUBLE_EQ(r.cost, 5.0);
}

TEST(Hungarian, MatchesBruteForceOnRandomMatrices) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial % 6;
    auto c = gradinv::testing::random_vector(n * n, rng, 0, 10);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += c[i * n + perm[i]];
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(hungarian(c, n).cost, best, 1e-9);
  }
}

TEST(Align, RecoversPermutation) {
  Rng rng(5);
  auto truth = uniform_tensor({3, 3, 8, 8}, rng, 0, 1);
  auto v = truth.to_vector();
  const std::int64_t n = 3 * 8 * 8;
  std::vector<double> shuffled(v.size());
  const int order[3] = {2, 0, 1};  // recovered slot k holds truth order[k]
  for (int k = 0; k < 3; ++k)
    std::copy_n(v.begin() + order[k] * n, n, shuffled.begin() + k * n);
  auto rec = Tensor::from_data(truth.shape(), shuffled);
  for (auto cost : {AlignCost::kPerceptual, AlignCost::kMse}) {
    auto r = hungarian_align(rec, truth, cost);
    EXPECT_EQ(r.permutation, (std::vector<int>{1, 2, 0}));
    EXPECT_NEAR(r.mean_mse, 0.0, 1e-15);
    EXPECT_NEAR(r.mean_ssim, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(r.mean_psnr_db, kPsnrCap);
  }
}

TEST(Rci, TrapezoidOverHorizon) {
  RecoveryCurve c{{0, 10, 20}, {1.0, 3.0, 2.0}};
  // (1+3)/2*10 + (3+2)/2*10 = 45, over 20.
  EXPECT_DOUBLE_EQ(rci(c), 2.25);
}

TEST(Rci, ConstantCurveGivesTheConstant) {
  RecoveryCurve c{{0, 5, 10, 15}, {0.37, 0.37, 0.37, 0.37}};
  EXPECT_NEAR(rci(c), 0.37, 1e-15);
}

TEST(Rci, RejectsShortOrUnevenCurves) {
  EXPECT_THROW(rci(RecoveryCurve{{0}, {1.0}}), Error);
  EXPECT_THROW(rci(RecoveryCurve{{0, 1, 3}, {1.0, 1.0, 1.0}}), Error);
}
