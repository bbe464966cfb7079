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

#include "gradinv/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "gradinv/errors.hpp"
#include "gradinv/ops.hpp"
#include "gradinv/rng.hpp"

namespace gradinv::metrics {
namespace {

void check_same(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw ShapeError("metric inputs differ in size or are empty");
  }
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(size);
  const double c = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    g[i] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Separable weighted means over every valid window position.
std::vector<double> filter(std::span<const double> img, std::int64_t h,
                           std::int64_t w, const std::vector<double>& g) {
  const auto k = static_cast<std::int64_t>(g.size());
  const auto oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(h * ow, 0.0), out(oh * ow, 0.0);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::int64_t i = 0; i < k; ++i) s += g[i] * img[y * w + x + i];
      rows[y * ow + x] = s;
    }
  for (std::int64_t y = 0; y < oh; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::int64_t i = 0; i < k; ++i) s += g[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

double mse(std::span<const double> a, std::span<const double> b) {
  check_same(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double psnr(std::span<const double> a, std::span<const double> b, double range) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(range * range / m);
}

double ssim(std::span<const double> a, std::span<const double> b,
            std::int64_t channels, std::int64_t height, std::int64_t width,
            double range) {
  check_same(a, b);
  if (static_cast<std::int64_t>(a.size()) != channels * height * width) {
    throw ShapeError("ssim: data does not match the given image shape");
  }
  int win = static_cast<int>(std::min<std::int64_t>({11, height, width}));
  if (win % 2 == 0) --win;
  const auto g = gaussian_window(win, 1.5);
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);
  const auto plane = height * width;
  double total = 0.0;
  for (std::int64_t c = 0; c < channels; ++c) {
    auto x = a.subspan(c * plane, plane);
    auto y = b.subspan(c * plane, plane);
    std::vector<double> xx(plane), yy(plane), xy(plane);
    for (std::int64_t i = 0; i < plane; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter(x, height, width, g);
    const auto my = filter(y, height, width, g);
    const auto sxx = filter(xx, height, width, g);
    const auto syy = filter(yy, height, width, g);
    const auto sxy = filter(xy, height, width, g);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / static_cast<double>(channels);
}

PerceptualProxy::PerceptualProxy(std::int64_t channels, std::uint64_t seed)
    : channels_(channels) {
  Rng rng(seed);
  const std::int64_t widths[3] = {16, 32, 32};
  std::int64_t in = channels;
  for (auto out : widths) {
    const double std = std::sqrt(2.0 / static_cast<double>(in * 9));
    weights_.push_back(normal_tensor({out, in, 3, 3}, rng, 0.0, std));
    in = out;
  }
}

std::vector<Tensor> PerceptualProxy::features(const Tensor& x) const {
  NoGradGuard no_grad;
  std::vector<Tensor> out;
  Tensor h = x.rank() == 3 ? ops::reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)}) : x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const ops::Conv2dParams p{l == 0 ? 1 : 2, 1};
    h = ops::relu(ops::conv2d(h, weights_[l], p));
    out.push_back(h);
  }
  return out;
}

double PerceptualProxy::operator()(const Tensor& a, const Tensor& b) const {
  if (a.shape() != b.shape()) throw ShapeError("perceptual: shape mismatch");
  const auto fa = features(a), fb = features(b);
  double total = 0.0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    const auto c = fa[l].dim(1);
    const auto pos = fa[l].dim(2) * fa[l].dim(3);
    const auto n = fa[l].dim(0);
    auto da = fa[l].data(), db = fb[l].data();
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t p = 0; p < pos; ++p) {
        double na = 0.0, nb = 0.0;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const auto idx = (i * c + ch) * pos + p;
          na += da[idx] * da[idx];
          nb += db[idx] * db[idx];
        }
        na = std::sqrt(na) + 1e-10;
        nb = std::sqrt(nb) + 1e-10;
        double d = 0.0;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const auto idx = (i * c + ch) * pos + p;
          const double diff = da[idx] / na - db[idx] / nb;
          d += diff * diff;
        }
        acc += d;
      }
    total += acc / static_cast<double>(n * pos);
  }
  return total / static_cast<double>(fa.size());
}

// Shortest augmenting paths with row/column potentials, O(n^3).
Assignment hungarian(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw ShapeError("hungarian: cost is not n x n");
  Assignment r;
  if (n == 0) return r;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  r.column_of_row.assign(n, -1);
  for (std::size_t j = 1; j <= n; ++j) r.column_of_row[p[j] - 1] = static_cast<int>(j - 1);
  for (std::size_t i = 0; i < n; ++i) r.cost += cost[i * n + r.column_of_row[i]];
  return r;
}

MetricReport hungarian_align(const Tensor& recovered, const Tensor& truth,
                             AlignCost cost_kind) {
  CostProbe probe;
  if (recovered.shape() != truth.shape() || truth.rank() != 4) {
    throw ShapeError("hungarian_align: batches must share a [B, C, H, W] shape");
  }
  const auto b = truth.dim(0), c = truth.dim(1), h = truth.dim(2), w = truth.dim(3);
  if (b > 64) throw ShapeError("hungarian_align supports B <= 64");
  const auto img = c * h * w;
  auto image = [&](const Tensor& t, std::int64_t i) {
    return Tensor::from_data({c, h, w}, {t.data().begin() + i * img,
                                         t.data().begin() + (i + 1) * img});
  };
  std::vector<Tensor> rec, tru;
  for (std::int64_t i = 0; i < b; ++i) {
    rec.push_back(image(recovered, i));
    tru.push_back(image(truth, i));
  }
  PerceptualProxy proxy(c);
  std::vector<double> perc(b * b), cost(b * b);
  for (std::int64_t i = 0; i < b; ++i)
    for (std::int64_t j = 0; j < b; ++j) {
      perc[i * b + j] = proxy(tru[i], rec[j]);
      cost[i * b + j] = cost_kind == AlignCost::kPerceptual
                            ? perc[i * b + j]
                            : mse(tru[i].data(), rec[j].data());
    }
  const auto a = hungarian(cost, static_cast<std::size_t>(b));
  MetricReport r;
  r.permutation = a.column_of_row;
  for (std::int64_t i = 0; i < b; ++i) {
    const auto j = r.permutation[i];
    const auto x = tru[i].data(), y = rec[j].data();
    r.mse.push_back(mse(x, y));
    r.psnr_db.push_back(psnr(x, y));
    r.ssim.push_back(ssim(x, y, c, h, w));
    r.perceptual.push_back(perc[i * b + j]);
  }
  const double n = static_cast<double>(b);
  for (std::int64_t i = 0; i < b; ++i) {
    r.mean_mse += r.mse[i] / n;
    r.mean_psnr_db += std::min(r.psnr_db[i], kPsnrCap) / n;
    r.mean_ssim += r.ssim[i] / n;
    r.mean_perceptual += r.perceptual[i] / n;
  }
  const auto cs = probe.finish();
  r.wall_seconds = cs.wall_seconds;
  r.peak_memory_bytes = cs.peak_memory_bytes;
  return r;
}

double rci(const RecoveryCurve& curve) {
  const auto n = curve.t.size();
  if (n < 2 || curve.score.size() != n) {
    throw ConfigError("RCI needs at least two (t, score) points");
  }
  const auto step = curve.t[1] - curve.t[0];
  if (step <= 0) throw ConfigError("RCI timestamps must increase");
  for (std::size_t i = 1; i < n; ++i) {
    if (curve.t[i] - curve.t[i - 1] != step) {
      throw ConfigError("RCI timestamps must be evenly spaced");
    }
  }
  double inner = 0.0;
  for (std::size_t i = 1; i + 1 < n; ++i) inner += curve.score[i];
  const double ends = 0.5 * (curve.score.front() + curve.score.back());
  return static_cast<double>(step) / static_cast<double>(curve.t.back()) *
         (ends + inner);
}

}  // namespace gradinv::metrics
