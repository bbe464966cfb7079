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

#include <cmath>
#include <limits>
#include <thread>

#include "gradinv/errors.hpp"
#include "gradinv/ops.hpp"
#include "gradinv/tensor.hpp"

using namespace gradinv;

TEST(Tensor, DataLengthMatchesShape) {
  EXPECT_THROW(Tensor::from_data({2, 3}, {1, 2, 3}), ShapeError);
  auto t = Tensor::zeros({2, 3, 4});
  EXPECT_EQ(t.numel(), 24);
  EXPECT_EQ(t.data().size(), 24u);
}

TEST(Tensor, DetachSharesValuesWithoutHistory) {
  auto x = Tensor::from_data({2}, {1.0, 2.0}, true);
  auto y = ops::square(x);
  auto d = y.detach();
  EXPECT_FALSE(d.requires_grad());
  EXPECT_EQ(d.to_vector(), y.to_vector());
}

TEST(Tensor, CloneIsIndependent) {
  auto x = Tensor::from_data({2}, {1.0, 2.0});
  auto c = x.clone();
  c.mutable_data()[0] = 5.0;
  EXPECT_EQ(x[0], 1.0);
}

TEST(Autodiff, SquareFirstAndSecondDerivative) {
  auto x = Tensor::from_data({1}, {3.0}, true);
  auto y = ops::sum(ops::square(x));
  auto g = grad(y, {x}, true);
  EXPECT_DOUBLE_EQ(g.grads[0].item(), 6.0);
  auto gg = grad(ops::sum(g.grads[0]), {x});
  EXPECT_DOUBLE_EQ(gg.grads[0].item(), 2.0);
}

TEST(Autodiff, NonTargetGetsNoGradient) {
  auto x = Tensor::from_data({2}, {1.0, 2.0}, true);
  auto c = Tensor::from_data({2}, {3.0, 4.0});
  auto y = ops::sum(ops::mul(x, c));
  auto g = grad(y, {x});
  EXPECT_EQ(g.grads[0].to_vector(), (std::vector<double>{3.0, 4.0}));
  EXPECT_FALSE(c.requires_grad());
}

TEST(Autodiff, UnreachableTargetIsZeroAndFlagged) {
  auto x = Tensor::from_data({2}, {1.0, 2.0}, true);
  auto z = Tensor::from_data({3}, {1.0, 2.0, 3.0}, true);
  auto y = ops::sum(ops::square(x));
  auto g = grad(y, {x, z});
  EXPECT_TRUE(g.unreachable[1]);
  EXPECT_EQ(g.grads[1].to_vector(), (std::vector<double>{0, 0, 0}));
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  auto x = Tensor::from_data({1}, {2.0}, true);
  auto y = ops::mul(x, x);
  auto z = ops::sum(ops::add(y, y));
  EXPECT_DOUBLE_EQ(grad(z, {x}).grads[0].item(), 8.0);
}

TEST(Autodiff, GradNeedsScalarOutput) {
  auto x = Tensor::from_data({2}, {1.0, 2.0}, true);
  EXPECT_THROW(grad(ops::square(x), {x}), ShapeError);
}

TEST(Autodiff, NoGradGuardStopsRecording) {
  auto x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tensor y;
  {
    NoGradGuard ng;
    y = ops::square(x);
  }
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(GradMode::enabled());
}

TEST(Autodiff, GradModeIsPerThread) {
  NoGradGuard ng;
  bool other = false;
  std::thread th([&] { other = GradMode::enabled(); });
  th.join();
  EXPECT_TRUE(other);
  EXPECT_FALSE(GradMode::enabled());
}

TEST(Numeric, NonFiniteForwardIsAnError) {
  auto x = Tensor::from_data({2}, {0.0, 1.0});
  EXPECT_THROW(ops::log(x), NumericFault);
  auto big = Tensor::from_data({1}, {1000.0});
  EXPECT_THROW(ops::exp(big), NumericFault);
}

TEST(Memory, TensorBytesTrackLiveStorage) {
  const auto before = tensor_bytes_live();
  {
    auto t = Tensor::zeros({1000});
    EXPECT_GE(tensor_bytes_live() - before, 8000);
  }
  EXPECT_EQ(tensor_bytes_live(), before);
  reset_tensor_bytes_peak();
  { auto t = Tensor::zeros({5000}); }
  EXPECT_GE(tensor_bytes_peak() - tensor_bytes_live(), 40000);
}
