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

#include "gradinv/errors.hpp"
#include "gradinv/optim.hpp"

using namespace gradinv;
using namespace gradinv::optim;

TEST(Lbfgs, QuadraticConvergesQuickly) {
  const std::vector<double> c{1.5, -2.0, 0.25, 3.0};
  Objective f = [&](std::span<const double> x, std::span<double> g) {
    double v = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      v += (x[i] - c[i]) * (x[i] - c[i]);
      g[i] = 2 * (x[i] - c[i]);
    }
    return v;
  };
  auto r = lbfgs_minimize(f, {10, 10, -10, 0}, 25);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(r.x[i], c[i], 1e-8);
}

TEST(Lbfgs, Rosenbrock) {
  Objective f = [](std::span<const double> x, std::span<double> g) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    g[0] = -2 * a - 400 * x[0] * b;
    g[1] = 200 * b;
    return a * a + 100 * b * b;
  };
  auto r = lbfgs_minimize(f, {-1.2, 1.0}, 200);
  EXPECT_NEAR(r.x[0], 1.0, 1e-4);
  EXPECT_NEAR(r.x[1], 1.0, 1e-4);
}

TEST(Lbfgs, BestTraceIsNonIncreasing) {
  Objective f = [](std::span<const double> x, std::span<double> g) {
    g[0] = 4 * x[0] * x[0] * x[0] - 2 * x[0];
    return x[0] * x[0] * x[0] * x[0] - x[0] * x[0];
  };
  auto r = lbfgs_minimize(f, {2.0}, 30);
  for (std::size_t i = 1; i < r.best_trace.size(); ++i)
    EXPECT_LE(r.best_trace[i], r.best_trace[i - 1]);
  EXPECT_NEAR(std::fabs(r.x[0]), std::sqrt(0.5), 1e-6);
}

TEST(Lbfgs, FaultAtTrialPointIsBacktracked) {
  // Objective undefined for x > 2; the first full step overshoots into it.
  Objective f = [](std::span<const double> x, std::span<double> g) {
    if (x[0] > 2.0) throw NumericFault("outside domain");
    g[0] = 2 * (x[0] - 1.9);
    return (x[0] - 1.9) * (x[0] - 1.9);
  };
  auto r = lbfgs_minimize(f, {-50.0}, 40);
  EXPECT_NEAR(r.x[0], 1.9, 1e-6);
}

TEST(Lbfgs, StationaryStartConverges) {
  Objective f = [](std::span<const double> x, std::span<double> g) {
    g[0] = 0;
    return 1.0 + 0 * x[0];
  };
  auto r = lbfgs_minimize(f, {0.3}, 10);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(r.x[0], 0.3);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Objective f = [](std::span<const double> x, std::span<double> g) {
    g[0] = 1.0;
    return x[0];
  };
  Adam opt(AdamOptions{0.1});
  std::vector<double> x{2.0};
  opt.step(f, x);
  EXPECT_NEAR(x[0], 2.0 - 0.1 / (1 + 1e-8), 1e-12);
}

TEST(Adam, ReportsValueBeforeMove) {
  Objective f = [](std::span<const double> x, std::span<double> g) {
    g[0] = 2 * x[0];
    return x[0] * x[0];
  };
  auto r = adam_minimize(f, {1.0}, 0.1, 3);
  EXPECT_DOUBLE_EQ(r.trace[0], 1.0);
  EXPECT_LT(r.value, 1.0);
}

TEST(Adam, NonFiniteObjectiveThrows) {
  Objective f = [](std::span<const double>, std::span<double>) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  std::vector<double> x{0.0};
  Adam opt;
  EXPECT_THROW(opt.step(f, x), NumericFault);
}
