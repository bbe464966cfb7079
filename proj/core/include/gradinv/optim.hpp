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
#include <deque>
#include <functional>
#include <span>
#include <vector>

namespace gradinv::optim {

// Writes the gradient at `x` into `grad` and returns the objective value.
using Objective =
    std::function<double(std::span<const double> x, std::span<double> grad)>;

struct StepInfo {
  double value = 0.0;       // objective at the accepted point
  double best_value = 0.0;  // lowest value seen so far
  int evaluations = 0;
  bool line_search_failed = false;
  bool converged = false;
};

struct LbfgsOptions {
  int history = 10;
  double armijo_c1 = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 40;
};

// Limited-memory BFGS with a backtracking Armijo line search. When the line
// search fails the iteration falls back to a backtracked steepest-descent
// step and the curvature history is cleared.
class Lbfgs {
 public:
  explicit Lbfgs(LbfgsOptions options = {}) : options_(options) {}

  // Advances `x` by one iteration.
  StepInfo step(const Objective& f, std::vector<double>& x);

  // Forces re-evaluation of the cached value/gradient at the next step, for
  // objectives that change between iterations.
  void invalidate() { cached_ = false; }

  const std::vector<double>& best_x() const { return best_x_; }
  double best_value() const { return best_value_; }

 private:
  std::vector<double> direction(const std::vector<double>& g) const;
  void evaluate(const Objective& f, const std::vector<double>& x, StepInfo& info);
  void note_best(const std::vector<double>& x, double v);

  LbfgsOptions options_;
  std::deque<std::vector<double>> s_hist_, y_hist_;
  std::deque<double> rho_hist_;
  std::vector<double> grad_;
  double value_ = 0.0;
  bool cached_ = false;
  bool first_ = true;
  std::vector<double> best_x_;
  double best_value_ = 0.0;
  bool has_best_ = false;
};

struct AdamOptions {
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  StepInfo step(const Objective& f, std::vector<double>& x);

  const std::vector<double>& best_x() const { return best_x_; }
  double best_value() const { return best_value_; }

 private:
  void note_best(const std::vector<double>& x, double v);

  AdamOptions options_;
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
  std::vector<double> best_x_;
  double best_value_ = 0.0;
  bool has_best_ = false;
};

struct MinimizeResult {
  std::vector<double> x;          // best point found
  double value = 0.0;             // objective at x
  std::vector<double> trace;      // value after each iteration
  std::vector<double> best_trace; // best-so-far after each iteration
  int iterations = 0;
  int evaluations = 0;
};

MinimizeResult lbfgs_minimize(const Objective& f, std::vector<double> x0,
                              int iterations, LbfgsOptions options = {});
MinimizeResult adam_minimize(const Objective& f, std::vector<double> x0,
                             double lr, int iterations,
                             AdamOptions options = {});

}  // namespace gradinv::optim
