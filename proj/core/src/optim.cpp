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

#include "gradinv/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gradinv/errors.hpp"

namespace gradinv::optim {
namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm1(const std::vector<double>& a) {
  double s = 0.0;
  for (double v : a) s += std::fabs(v);
  return s;
}

// Evaluates f, mapping numeric faults at trial points to +inf.
double try_eval(const Objective& f, const std::vector<double>& x,
                std::vector<double>& g, int& evals) {
  ++evals;
  try {
    const double v = f(x, g);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const NumericFault&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

void Lbfgs::note_best(const std::vector<double>& x, double v) {
  if (!has_best_ || v < best_value_) {
    best_value_ = v;
    best_x_ = x;
    has_best_ = true;
  }
}

void Lbfgs::evaluate(const Objective& f, const std::vector<double>& x,
                     StepInfo& info) {
  grad_.assign(x.size(), 0.0);
  value_ = f(x, grad_);
  ++info.evaluations;
  if (!std::isfinite(value_)) {
    throw NumericFault("objective is not finite at the current iterate");
  }
  cached_ = true;
  note_best(x, value_);
}

std::vector<double> Lbfgs::direction(const std::vector<double>& g) const {
  std::vector<double> q = g;
  const std::size_t m = s_hist_.size();
  std::vector<double> alpha(m);
  for (std::size_t k = m; k-- > 0;) {
    alpha[k] = rho_hist_[k] * dot(s_hist_[k], q);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[k] * y_hist_[k][i];
  }
  double gamma = 1.0;
  if (m > 0) {
    gamma = dot(s_hist_.back(), y_hist_.back()) /
            dot(y_hist_.back(), y_hist_.back());
  } else {
    gamma = std::min(1.0, 1.0 / std::max(norm1(g), 1e-300));
  }
  for (auto& v : q) v *= gamma;
  for (std::size_t k = 0; k < m; ++k) {
    const double beta = rho_hist_[k] * dot(y_hist_[k], q);
    for (std::size_t i = 0; i < q.size(); ++i)
      q[i] += s_hist_[k][i] * (alpha[k] - beta);
  }
  for (auto& v : q) v = -v;
  return q;
}

StepInfo Lbfgs::step(const Objective& f, std::vector<double>& x) {
  StepInfo info;
  if (!cached_) evaluate(f, x, info);
  const double gmax = std::fabs(*std::max_element(
      grad_.begin(), grad_.end(),
      [](double a, double b) { return std::fabs(a) < std::fabs(b); }));
  if (gmax == 0.0) {
    info.value = value_;
    info.best_value = best_value_;
    info.converged = true;
    return info;
  }

  std::vector<double> d = direction(grad_);
  double slope = dot(grad_, d);
  if (!(slope < 0.0)) {
    s_hist_.clear();
    y_hist_.clear();
    rho_hist_.clear();
    d = direction(grad_);
    slope = dot(grad_, d);
  }

  std::vector<double> x_new(x.size()), g_new(x.size());
  double accepted = 0.0;
  auto search = [&](const std::vector<double>& dir, double slope0,
                    double t) -> bool {
    for (int k = 0; k < options_.max_backtracks; ++k, t *= options_.backtrack) {
      for (std::size_t i = 0; i < x.size(); ++i) x_new[i] = x[i] + t * dir[i];
      const double v = try_eval(f, x_new, g_new, info.evaluations);
      if (v <= value_ + options_.armijo_c1 * t * slope0) {
        accepted = v;
        return true;
      }
    }
    return false;
  };

  bool ok = search(d, slope, 1.0);
  if (!ok) {
    info.line_search_failed = true;
    s_hist_.clear();
    y_hist_.clear();
    rho_hist_.clear();
    std::vector<double> sd(grad_.size());
    for (std::size_t i = 0; i < sd.size(); ++i) sd[i] = -grad_[i];
    const double t0 = std::min(1.0, 1.0 / std::max(norm1(grad_), 1e-300));
    ok = search(sd, -dot(grad_, grad_), t0);
  }
  if (!ok) {
    info.value = value_;
    info.best_value = best_value_;
    return info;
  }

  std::vector<double> s(x.size()), y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    s[i] = x_new[i] - x[i];
    y[i] = g_new[i] - grad_[i];
  }
  const double sy = dot(s, y);
  if (sy > 1e-10 * std::max(dot(y, y), 1e-300)) {
    s_hist_.push_back(std::move(s));
    y_hist_.push_back(std::move(y));
    rho_hist_.push_back(1.0 / sy);
    if (static_cast<int>(s_hist_.size()) > options_.history) {
      s_hist_.pop_front();
      y_hist_.pop_front();
      rho_hist_.pop_front();
    }
  }
  x.swap(x_new);
  grad_.swap(g_new);
  value_ = accepted;
  first_ = false;
  note_best(x, value_);
  info.value = value_;
  info.best_value = best_value_;
  return info;
}

void Adam::note_best(const std::vector<double>& x, double v) {
  if (!has_best_ || v < best_value_) {
    best_value_ = v;
    best_x_ = x;
    has_best_ = true;
  }
}

// Evaluates at x, records it, then moves x. The reported value belongs to the
// point before the move.
StepInfo Adam::step(const Objective& f, std::vector<double>& x) {
  StepInfo info;
  std::vector<double> g(x.size(), 0.0);
  const double v = f(x, g);
  info.evaluations = 1;
  if (!std::isfinite(v)) {
    throw NumericFault("objective is not finite at the current iterate");
  }
  note_best(x, v);
  if (m_.empty()) {
    m_.assign(x.size(), 0.0);
    v_.assign(x.size(), 0.0);
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < x.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * g[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * g[i] * g[i];
    const double mh = m_[i] / c1;
    const double vh = v_[i] / c2;
    x[i] -= options_.lr * mh / (std::sqrt(vh) + options_.eps);
  }
  info.value = v;
  info.best_value = best_value_;
  return info;
}

MinimizeResult lbfgs_minimize(const Objective& f, std::vector<double> x0,
                              int iterations, LbfgsOptions options) {
  Lbfgs opt(options);
  MinimizeResult r;
  for (int it = 0; it < iterations; ++it) {
    const auto info = opt.step(f, x0);
    r.trace.push_back(info.value);
    r.best_trace.push_back(info.best_value);
    r.evaluations += info.evaluations;
    ++r.iterations;
    if (info.converged) break;
  }
  if (opt.best_x().empty()) {
    std::vector<double> g(x0.size());
    r.value = f(x0, g);
    r.x = std::move(x0);
  } else {
    r.x = opt.best_x();
    r.value = opt.best_value();
  }
  return r;
}

MinimizeResult adam_minimize(const Objective& f, std::vector<double> x0,
                             double lr, int iterations, AdamOptions options) {
  options.lr = lr;
  Adam opt(options);
  MinimizeResult r;
  for (int it = 0; it < iterations; ++it) {
    const auto info = opt.step(f, x0);
    r.trace.push_back(info.value);
    r.best_trace.push_back(info.best_value);
    r.evaluations += info.evaluations;
    ++r.iterations;
  }
  if (opt.best_x().empty()) {
    std::vector<double> g(x0.size());
    r.value = f(x0, g);
    r.x = std::move(x0);
  } else {
    r.x = opt.best_x();
    r.value = opt.best_value();
  }
  return r;
}

}  // namespace gradinv::optim
