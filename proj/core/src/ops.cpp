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

#include "gradinv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "gradinv/errors.hpp"

namespace gradinv::ops {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) +
                   " vs " + shape_str(b));
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got shape " +
                     shape_str(x.shape()));
  }
}

Tensor finish(const char* op, Shape shape, std::vector<double> data) {
  try {
    return make_result(std::move(shape), std::move(data));
  } catch (const NumericFault& e) {
    throw NumericFault(std::string(op) + ": " + e.what());
  }
}

template <class F>
Tensor map_unary(const char* op, const Tensor& x, F f) {
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return finish(op, x.shape(), std::move(out));
}

template <class F>
Tensor map_binary(const char* op, const Tensor& a, const Tensor& b, F f) {
  require_same(op, a, b);
  auto x = a.data();
  auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
  return finish(op, a.shape(), std::move(out));
}

// Shape helpers for conv.
struct ConvGeometry {
  std::int64_t n, ci, h, w, co, k, ho, wo;
};

ConvGeometry conv_geometry(const char* op, const Shape& xs, const Shape& ws,
                           Conv2dParams p) {
  if (xs.size() != 4 || ws.size() != 4) shape_fail(op, xs, ws);
  if (xs[1] != ws[1] || ws[2] != ws[3]) shape_fail(op, xs, ws);
  if (p.stride < 1 || p.padding < 0) {
    throw ShapeError(std::string(op) + ": invalid stride/padding");
  }
  ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], 0, 0};
  const auto hp = g.h + 2 * p.padding - g.k;
  const auto wp = g.w + 2 * p.padding - g.k;
  if (hp < 0 || wp < 0) shape_fail(op, xs, ws);
  g.ho = hp / p.stride + 1;
  g.wo = wp / p.stride + 1;
  return g;
}

// Unfolds one image [Ci, H, W] into columns [Ci*K*K, Ho*Wo].
void im2col(const double* img, const ConvGeometry& g, Conv2dParams p,
            double* col) {
  const std::int64_t cols = g.ho * g.wo;
  for (std::int64_t c = 0; c < g.ci; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        double* row = col + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * p.stride - p.padding + ky;
          double* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = img + (c * g.h + iy) * g.w;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * p.stride - p.padding + kx;
            dst[ox] = (ix < 0 || ix >= g.w) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

// Accumulates columns back into an image (adjoint of im2col).
void col2im(const double* col, const ConvGeometry& g, Conv2dParams p,
            double* img) {
  const std::int64_t cols = g.ho * g.wo;
  for (std::int64_t c = 0; c < g.ci; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const double* row = col + ((c * g.k + ky) * g.k + kx) * cols;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * p.stride - p.padding + ky;
          if (iy < 0 || iy >= g.h) continue;
          double* dst = img + (c * g.h + iy) * g.w;
          const double* src = row + oy * g.wo;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * p.stride - p.padding + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

Tensor constant_mask(const Tensor& x, double (*f)(double)) {
  GradModeGuard off(false);
  return map_unary("mask", x, f);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  auto out = map_binary("add", a, b, [](double x, double y) { return x + y; });
  return record("add", {a, b}, out,
                [](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{g, g};
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto out = map_binary("sub", a, b, [](double x, double y) { return x - y; });
  return record("sub", {a, b}, out,
                [](const Tensor& g, const std::vector<bool>& needs) {
                  return std::vector<Tensor>{g, needs[1] ? neg(g) : Tensor()};
                });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto out = map_binary("mul", a, b, [](double x, double y) { return x * y; });
  return record("mul", {a, b}, out,
                [a, b](const Tensor& g, const std::vector<bool>& needs) {
                  return std::vector<Tensor>{needs[0] ? mul(g, b) : Tensor(),
                                             needs[1] ? mul(g, a) : Tensor()};
                });
}

Tensor div(const Tensor& a, const Tensor& b) {
  auto out = map_binary("div", a, b, [](double x, double y) { return x / y; });
  return record(
      "div", {a, b}, out,
      [a, b](const Tensor& g, const std::vector<bool>& needs) {
        Tensor ga = needs[0] ? div(g, b) : Tensor();
        Tensor gb = needs[1] ? neg(div(mul(g, a), square(b))) : Tensor();
        return std::vector<Tensor>{ga, gb};
      });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) shape_fail("scale_by", a.shape(), s.shape());
  const double f = s[0];
  auto out = map_unary("scale_by", a, [f](double x) { return x * f; });
  return record(
      "scale_by", {a, s}, out,
      [a, s](const Tensor& g, const std::vector<bool>& needs) {
        Tensor ga = needs[0] ? scale_by(g, s) : Tensor();
        Tensor gs = needs[1] ? reshape(dot(g, a), s.shape()) : Tensor();
        return std::vector<Tensor>{ga, gs};
      });
}

Tensor scale(const Tensor& a, double factor) {
  auto out = map_unary("scale", a, [factor](double x) { return x * factor; });
  return record("scale", {a}, out,
                [factor](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{scale(g, factor)};
                });
}

Tensor add_const(const Tensor& a, double value) {
  auto out = map_unary("add_const", a, [value](double x) { return x + value; });
  return record("add_const", {a}, out,
                [](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{g};
                });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& x) {
  auto out = map_unary("relu", x, [](double v) { return v > 0 ? v : 0.0; });
  // Second derivative is zero: the mask is a constant of the graph.
  return record("relu", {x}, out,
                [x](const Tensor& g, const std::vector<bool>&) {
                  auto mask = constant_mask(
                      x, [](double v) { return v > 0 ? 1.0 : 0.0; });
                  return std::vector<Tensor>{mul(g, mask)};
                });
}

Tensor sigmoid(const Tensor& x) {
  auto out = map_unary("sigmoid", x, [](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                  : std::exp(v) / (1.0 + std::exp(v));
  });
  return record("sigmoid", {x}, out,
                [x](const Tensor& g, const std::vector<bool>&) {
                  auto s = sigmoid(x);
                  return std::vector<Tensor>{mul(g, sub(s, square(s)))};
                });
}

Tensor tanh(const Tensor& x) {
  auto out = map_unary("tanh", x, [](double v) { return std::tanh(v); });
  return record("tanh", {x}, out,
                [x](const Tensor& g, const std::vector<bool>&) {
                  auto t = tanh(x);
                  return std::vector<Tensor>{
                      mul(g, add_const(neg(square(t)), 1.0))};
                });
}

Tensor exp(const Tensor& x) {
  auto out = map_unary("exp", x, [](double v) { return std::exp(v); });
  return record("exp", {x}, out,
                [x](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{mul(g, exp(x))};
                });
}

Tensor log(const Tensor& x) {
  auto out = map_unary("log", x, [](double v) { return std::log(v); });
  return record("log", {x}, out,
                [x](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{div(g, x)};
                });
}

Tensor sqrt(const Tensor& x) {
  auto out = map_unary("sqrt", x, [](double v) { return std::sqrt(v); });
  return record("sqrt", {x}, out,
                [x](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{scale(div(g, sqrt(x)), 0.5)};
                });
}

Tensor square(const Tensor& x) {
  auto out = map_unary("square", x, [](double v) { return v * v; });
  return record("square", {x}, out,
                [x](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{mul(g, scale(x, 2.0))};
                });
}

Tensor abs(const Tensor& x) {
  auto out = map_unary("abs", x, [](double v) { return std::fabs(v); });
  return record("abs", {x}, out,
                [x](const Tensor& g, const std::vector<bool>&) {
                  auto sign = constant_mask(x, [](double v) {
                    return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
                  });
                  return std::vector<Tensor>{mul(g, sign)};
                });
}

Tensor reciprocal(const Tensor& x) {
  auto out = map_unary("reciprocal", x, [](double v) { return 1.0 / v; });
  return record("reciprocal", {x}, out,
                [x](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{
                      neg(mul(g, square(reciprocal(x))))};
                });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  auto out = finish("sum", {1}, {s});
  return record("sum", {x}, out,
                [shape = x.shape()](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{expand(g, shape)};
                });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

Tensor norm_l2(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  const double n = std::sqrt(s);
  auto out = finish("norm_l2", {1}, {n});
  return record("norm_l2", {x}, out,
                [x, n](const Tensor& g, const std::vector<bool>&) {
                  if (n == 0.0) {
                    return std::vector<Tensor>{Tensor::zeros(x.shape())};
                  }
                  return std::vector<Tensor>{scale_by(x, div(g, norm_l2(x)))};
                });
}

Tensor expand(const Tensor& s, const Shape& shape) {
  if (s.numel() != 1) shape_fail("expand", s.shape(), shape);
  auto out = finish("expand", shape,
                    std::vector<double>(shape_numel(shape), s[0]));
  return record("expand", {s}, out,
                [ss = s.shape()](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{reshape(sum(g), ss)};
                });
}

Tensor sum_rows(const Tensor& x) {
  require_rank("sum_rows", x, 2);
  const auto m = x.dim(0), n = x.dim(1);
  std::vector<double> out(n, 0.0);
  auto d = x.data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) out[j] += d[i * n + j];
  auto r = finish("sum_rows", {n}, std::move(out));
  return record("sum_rows", {x}, r,
                [m](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{broadcast_rows(g, m)};
                });
}

Tensor broadcast_rows(const Tensor& v, std::int64_t m) {
  require_rank("broadcast_rows", v, 1);
  const auto n = v.dim(0);
  std::vector<double> out(m * n);
  auto d = v.data();
  for (std::int64_t i = 0; i < m; ++i)
    std::copy(d.begin(), d.end(), out.begin() + i * n);
  auto r = finish("broadcast_rows", {m, n}, std::move(out));
  return record("broadcast_rows", {v}, r,
                [](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{sum_rows(g)};
                });
}

Tensor sum_cols(const Tensor& x) {
  require_rank("sum_cols", x, 2);
  const auto m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m, 0.0);
  auto d = x.data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) out[i] += d[i * n + j];
  auto r = finish("sum_cols", {m}, std::move(out));
  return record("sum_cols", {x}, r,
                [n](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{broadcast_cols(g, n)};
                });
}

Tensor broadcast_cols(const Tensor& v, std::int64_t n) {
  require_rank("broadcast_cols", v, 1);
  const auto m = v.dim(0);
  std::vector<double> out(m * n);
  auto d = v.data();
  for (std::int64_t i = 0; i < m; ++i)
    std::fill(out.begin() + i * n, out.begin() + (i + 1) * n, d[i]);
  auto r = finish("broadcast_cols", {m, n}, std::move(out));
  return record("broadcast_cols", {v}, r,
                [](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{sum_cols(g)};
                });
}

Tensor channel_sum(const Tensor& x) {
  require_rank("channel_sum", x, 4);
  const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<double> out(c, 0.0);
  auto d = x.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < c; ++j) {
      const double* p = d.data() + (i * c + j) * hw;
      double s = 0.0;
      for (std::int64_t k = 0; k < hw; ++k) s += p[k];
      out[j] += s;
    }
  auto r = finish("channel_sum", {c}, std::move(out));
  return record("channel_sum", {x}, r,
                [shape = x.shape()](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{channel_broadcast(g, shape)};
                });
}

Tensor channel_broadcast(const Tensor& v, const Shape& shape) {
  if (v.rank() != 1 || shape.size() != 4 || shape[1] != v.dim(0)) {
    shape_fail("channel_broadcast", v.shape(), shape);
  }
  const auto n = shape[0], c = shape[1], hw = shape[2] * shape[3];
  std::vector<double> out(n * c * hw);
  auto d = v.data();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < c; ++j)
      std::fill(out.begin() + (i * c + j) * hw,
                out.begin() + (i * c + j + 1) * hw, d[j]);
  auto r = finish("channel_broadcast", shape, std::move(out));
  return record("channel_broadcast", {v}, r,
                [](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{channel_sum(g)};
                });
}

Tensor slice_cols(const Tensor& x, std::int64_t begin, std::int64_t count) {
  require_rank("slice_cols", x, 2);
  const auto m = x.dim(0), n = x.dim(1);
  if (begin < 0 || count < 0 || begin + count > n) {
    shape_fail("slice_cols", x.shape(), {begin, count});
  }
  std::vector<double> out(m * count);
  auto d = x.data();
  for (std::int64_t i = 0; i < m; ++i)
    std::copy(d.begin() + i * n + begin, d.begin() + i * n + begin + count,
              out.begin() + i * count);
  auto r = finish("slice_cols", {m, count}, std::move(out));
  return record("slice_cols", {x}, r,
                [begin, n](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{pad_cols(g, begin, n)};
                });
}

Tensor pad_cols(const Tensor& x, std::int64_t begin, std::int64_t width) {
  require_rank("pad_cols", x, 2);
  const auto m = x.dim(0), count = x.dim(1);
  if (begin < 0 || begin + count > width) {
    shape_fail("pad_cols", x.shape(), {begin, width});
  }
  std::vector<double> out(m * width, 0.0);
  auto d = x.data();
  for (std::int64_t i = 0; i < m; ++i)
    std::copy(d.begin() + i * count, d.begin() + (i + 1) * count,
              out.begin() + i * width + begin);
  auto r = finish("pad_cols", {m, width}, std::move(out));
  return record("pad_cols", {x}, r,
                [begin, count](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{slice_cols(g, begin, count)};
                });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    shape_fail("reshape", x.shape(), shape);
  }
  auto out = Tensor::from_data(shape, x.to_vector());
  return record("reshape", {x}, out,
                [old = x.shape()](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{reshape(g, old)};
                });
}

Tensor transpose(const Tensor& x) {
  require_rank("transpose", x, 2);
  const auto m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n);
  auto d = x.data();
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) out[j * m + i] = d[i * n + j];
  auto r = Tensor::from_data({n, m}, std::move(out));
  return record("transpose", {x}, r,
                [](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{transpose(g)};
                });
}

namespace {

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::int64_t outer = 1, extent = 0, inner = 1;
};

AxisSplit split_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for " + shape_str(s));
  }
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

}  // namespace

Tensor finite_diff(const Tensor& x, std::size_t axis) {
  const auto a = split_axis("finite_diff", x.shape(), axis);
  if (a.extent < 2) {
    throw ShapeError("finite_diff: axis extent < 2 in " +
                     shape_str(x.shape()));
  }
  Shape os = x.shape();
  os[axis] -= 1;
  std::vector<double> out(shape_numel(os));
  auto d = x.data();
  for (std::int64_t o = 0; o < a.outer; ++o)
    for (std::int64_t i = 0; i + 1 < a.extent; ++i)
      for (std::int64_t k = 0; k < a.inner; ++k) {
        const auto src = (o * a.extent + i) * a.inner + k;
        out[(o * (a.extent - 1) + i) * a.inner + k] =
            d[src + a.inner] - d[src];
      }
  auto r = finish("finite_diff", os, std::move(out));
  return record("finite_diff", {x}, r,
                [axis](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{finite_diff_adjoint(g, axis)};
                });
}

Tensor finite_diff_adjoint(const Tensor& g, std::size_t axis) {
  const auto a = split_axis("finite_diff_adjoint", g.shape(), axis);
  Shape os = g.shape();
  os[axis] += 1;
  const auto ext = a.extent + 1;
  std::vector<double> out(shape_numel(os), 0.0);
  auto d = g.data();
  for (std::int64_t o = 0; o < a.outer; ++o)
    for (std::int64_t i = 0; i < a.extent; ++i)
      for (std::int64_t k = 0; k < a.inner; ++k) {
        const double v = d[(o * a.extent + i) * a.inner + k];
        out[(o * ext + i + 1) * a.inner + k] += v;
        out[(o * ext + i) * a.inner + k] -= v;
      }
  auto r = finish("finite_diff_adjoint", os, std::move(out));
  return record("finite_diff_adjoint", {g}, r,
                [axis](const Tensor& gg, const std::vector<bool>&) {
                  return std::vector<Tensor>{finite_diff(gg, axis)};
                });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_fail("matmul", a.shape(), b.shape());
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  MapMatrix(out.data(), m, n).noalias() =
      ConstMapMatrix(a.data().data(), m, k) *
      ConstMapMatrix(b.data().data(), k, n);
  auto r = finish("matmul", {m, n}, std::move(out));
  return record("matmul", {a, b}, r,
                [a, b](const Tensor& g, const std::vector<bool>& needs) {
                  Tensor ga = needs[0] ? matmul_nt(g, b) : Tensor();
                  Tensor gb = needs[1] ? matmul_tn(a, g) : Tensor();
                  return std::vector<Tensor>{ga, gb};
                });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    shape_fail("matmul_nt", a.shape(), b.shape());
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> out(m * n);
  MapMatrix(out.data(), m, n).noalias() =
      ConstMapMatrix(a.data().data(), m, k) *
      ConstMapMatrix(b.data().data(), n, k).transpose();
  auto r = finish("matmul_nt", {m, n}, std::move(out));
  return record("matmul_nt", {a, b}, r,
                [a, b](const Tensor& g, const std::vector<bool>& needs) {
                  Tensor ga = needs[0] ? matmul(g, b) : Tensor();
                  Tensor gb = needs[1] ? matmul_tn(g, a) : Tensor();
                  return std::vector<Tensor>{ga, gb};
                });
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
    shape_fail("matmul_tn", a.shape(), b.shape());
  }
  const auto k = a.dim(0), m = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  MapMatrix(out.data(), m, n).noalias() =
      ConstMapMatrix(a.data().data(), k, m).transpose() *
      ConstMapMatrix(b.data().data(), k, n);
  auto r = finish("matmul_tn", {m, n}, std::move(out));
  return record("matmul_tn", {a, b}, r,
                [a, b](const Tensor& g, const std::vector<bool>& needs) {
                  Tensor ga = needs[0] ? matmul_nt(b, g) : Tensor();
                  Tensor gb = needs[1] ? matmul(a, g) : Tensor();
                  return std::vector<Tensor>{ga, gb};
                });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1)) {
    shape_fail("linear", x.shape(), w.shape());
  }
  if (b.rank() != 1 || b.dim(0) != w.dim(0)) {
    shape_fail("linear", w.shape(), b.shape());
  }
  return add(matmul_nt(x, w), broadcast_rows(b, x.dim(0)));
}

Tensor conv2d(const Tensor& x, const Tensor& w, Conv2dParams p) {
  const auto g = conv_geometry("conv2d", x.shape(), w.shape(), p);
  const auto rows = g.ci * g.k * g.k, cols = g.ho * g.wo;
  std::vector<double> col(rows * cols);
  std::vector<double> out(g.n * g.co * cols);
  ConstMapMatrix wm(w.data().data(), g.co, rows);
  for (std::int64_t i = 0; i < g.n; ++i) {
    im2col(x.data().data() + i * g.ci * g.h * g.w, g, p, col.data());
    MapMatrix(out.data() + i * g.co * cols, g.co, cols).noalias() =
        wm * ConstMapMatrix(col.data(), rows, cols);
  }
  auto r = finish("conv2d", {g.n, g.co, g.ho, g.wo}, std::move(out));
  return record("conv2d", {x, w}, r,
                [x, w, p](const Tensor& go, const std::vector<bool>& needs) {
                  Tensor gx = needs[0]
                                  ? conv2d_input_grad(go, w, x.shape(), p)
                                  : Tensor();
                  Tensor gw = needs[1]
                                  ? conv2d_weight_grad(x, go, w.shape(), p)
                                  : Tensor();
                  return std::vector<Tensor>{gx, gw};
                });
}

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& w,
                         const Shape& input_shape, Conv2dParams p) {
  const auto g = conv_geometry("conv2d_input_grad", input_shape, w.shape(), p);
  const Shape expect{g.n, g.co, g.ho, g.wo};
  if (grad_out.shape() != expect) {
    shape_fail("conv2d_input_grad", grad_out.shape(), expect);
  }
  const auto rows = g.ci * g.k * g.k, cols = g.ho * g.wo;
  std::vector<double> col(rows * cols);
  std::vector<double> out(shape_numel(input_shape), 0.0);
  ConstMapMatrix wm(w.data().data(), g.co, rows);
  for (std::int64_t i = 0; i < g.n; ++i) {
    MapMatrix(col.data(), rows, cols).noalias() =
        wm.transpose() *
        ConstMapMatrix(grad_out.data().data() + i * g.co * cols, g.co, cols);
    col2im(col.data(), g, p, out.data() + i * g.ci * g.h * g.w);
  }
  auto r = finish("conv2d_input_grad", input_shape, std::move(out));
  return record(
      "conv2d_input_grad", {grad_out, w}, r,
      [grad_out, w, p](const Tensor& gg, const std::vector<bool>& needs) {
        Tensor g0 = needs[0] ? conv2d(gg, w, p) : Tensor();
        Tensor g1 =
            needs[1] ? conv2d_weight_grad(gg, grad_out, w.shape(), p) : Tensor();
        return std::vector<Tensor>{g0, g1};
      });
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& grad_out,
                          const Shape& weight_shape, Conv2dParams p) {
  const auto g = conv_geometry("conv2d_weight_grad", x.shape(), weight_shape, p);
  const Shape expect{g.n, g.co, g.ho, g.wo};
  if (grad_out.shape() != expect) {
    shape_fail("conv2d_weight_grad", grad_out.shape(), expect);
  }
  const auto rows = g.ci * g.k * g.k, cols = g.ho * g.wo;
  std::vector<double> col(rows * cols);
  std::vector<double> out(g.co * rows, 0.0);
  MapMatrix om(out.data(), g.co, rows);
  for (std::int64_t i = 0; i < g.n; ++i) {
    im2col(x.data().data() + i * g.ci * g.h * g.w, g, p, col.data());
    om.noalias() +=
        ConstMapMatrix(grad_out.data().data() + i * g.co * cols, g.co, cols) *
        ConstMapMatrix(col.data(), rows, cols).transpose();
  }
  auto r = finish("conv2d_weight_grad", weight_shape, std::move(out));
  return record(
      "conv2d_weight_grad", {x, grad_out}, r,
      [x, grad_out, p](const Tensor& gg, const std::vector<bool>& needs) {
        Tensor g0 =
            needs[0] ? conv2d_input_grad(grad_out, gg, x.shape(), p) : Tensor();
        Tensor g1 = needs[1] ? conv2d(x, gg, p) : Tensor();
        return std::vector<Tensor>{g0, g1};
      });
}

namespace {

void check_pool(const char* op, const Tensor& x, std::int64_t k) {
  require_rank(op, x, 4);
  if (k < 1 || x.dim(2) % k != 0 || x.dim(3) % k != 0) {
    throw ShapeError(std::string(op) + ": spatial dims of " +
                     shape_str(x.shape()) + " not divisible by " +
                     std::to_string(k));
  }
}

}  // namespace

Tensor avg_pool2d(const Tensor& x, std::int64_t k) {
  check_pool("avg_pool2d", x, k);
  const auto planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto ho = h / k, wo = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
  std::vector<double> out(planes * ho * wo, 0.0);
  auto d = x.data();
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t xx = 0; xx < w; ++xx)
        out[(p * ho + y / k) * wo + xx / k] += d[(p * h + y) * w + xx] * inv;
  auto r = finish("avg_pool2d", {x.dim(0), x.dim(1), ho, wo}, std::move(out));
  return record("avg_pool2d", {x}, r,
                [k](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{avg_unpool2d(g, k)};
                });
}

Tensor avg_unpool2d(const Tensor& g, std::int64_t k) {
  require_rank("avg_unpool2d", g, 4);
  const auto planes = g.dim(0) * g.dim(1), ho = g.dim(2), wo = g.dim(3);
  const auto h = ho * k, w = wo * k;
  const double inv = 1.0 / static_cast<double>(k * k);
  std::vector<double> out(planes * h * w);
  auto d = g.data();
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t xx = 0; xx < w; ++xx)
        out[(p * h + y) * w + xx] = d[(p * ho + y / k) * wo + xx / k] * inv;
  auto r = finish("avg_unpool2d", {g.dim(0), g.dim(1), h, w}, std::move(out));
  return record("avg_unpool2d", {g}, r,
                [k](const Tensor& gg, const std::vector<bool>&) {
                  return std::vector<Tensor>{avg_pool2d(gg, k)};
                });
}

Tensor max_pool2d(const Tensor& x, std::int64_t k) {
  check_pool("max_pool2d", x, k);
  const auto planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto ho = h / k, wo = w / k;
  std::vector<double> out(planes * ho * wo,
                          -std::numeric_limits<double>::infinity());
  std::vector<std::int64_t> arg(out.size(), 0);
  auto d = x.data();
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t xx = 0; xx < w; ++xx) {
        const auto o = (p * ho + y / k) * wo + xx / k;
        const auto i = (p * h + y) * w + xx;
        if (d[i] > out[o]) {
          out[o] = d[i];
          arg[o] = i;
        }
      }
  auto r = finish("max_pool2d", {x.dim(0), x.dim(1), ho, wo}, std::move(out));
  return record(
      "max_pool2d", {x}, r,
      [shape = x.shape(), arg](const Tensor& g, const std::vector<bool>&) {
        std::vector<double> gx(shape_numel(shape), 0.0);
        auto gd = g.data();
        for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o]] += gd[o];
        return std::vector<Tensor>{Tensor::from_data(shape, std::move(gx))};
      },
      /*double_backward=*/false);
}

Tensor softmax(const Tensor& logits) {
  require_rank("softmax", logits, 2);
  const auto m = logits.dim(0), n = logits.dim(1);
  auto d = logits.data();
  std::vector<double> out(m * n);
  for (std::int64_t i = 0; i < m; ++i) {
    const double* row = d.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(row[j] - mx);
      s += out[i * n + j];
    }
    for (std::int64_t j = 0; j < n; ++j) out[i * n + j] /= s;
  }
  auto r = finish("softmax", {m, n}, std::move(out));
  return record("softmax", {logits}, r,
                [logits, n](const Tensor& g, const std::vector<bool>&) {
                  auto s = softmax(logits);
                  auto inner = broadcast_cols(sum_cols(mul(g, s)), n);
                  return std::vector<Tensor>{mul(s, sub(g, inner))};
                });
}

Tensor logsumexp(const Tensor& logits) {
  require_rank("logsumexp", logits, 2);
  const auto m = logits.dim(0), n = logits.dim(1);
  auto d = logits.data();
  std::vector<double> out(m);
  for (std::int64_t i = 0; i < m; ++i) {
    const double* row = d.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::int64_t j = 0; j < n; ++j) s += std::exp(row[j] - mx);
    out[i] = mx + std::log(s);
  }
  auto r = finish("logsumexp", {m}, std::move(out));
  return record("logsumexp", {logits}, r,
                [logits, n](const Tensor& g, const std::vector<bool>&) {
                  return std::vector<Tensor>{
                      mul(broadcast_cols(g, n), softmax(logits))};
                });
}

Tensor log_softmax(const Tensor& logits) {
  require_rank("log_softmax", logits, 2);
  return sub(logits, broadcast_cols(logsumexp(logits), logits.dim(1)));
}

Tensor one_hot(std::span<const int> labels, std::int64_t num_classes) {
  const auto m = static_cast<std::int64_t>(labels.size());
  std::vector<double> out(m * num_classes, 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw ShapeError("one_hot: label " + std::to_string(labels[i]) +
                       " outside [0, " + std::to_string(num_classes) + ")");
    }
    out[i * num_classes + labels[i]] = 1.0;
  }
  return Tensor::from_data({m, num_classes}, std::move(out));
}

Tensor cross_entropy(const Tensor& logits, const Tensor& target) {
  require_same("cross_entropy", logits, target);
  const double inv_m = 1.0 / static_cast<double>(logits.dim(0));
  return scale(sum(mul(target, log_softmax(logits))), -inv_m);
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank("cross_entropy", logits, 2);
  if (static_cast<std::int64_t>(labels.size()) != logits.dim(0)) {
    shape_fail("cross_entropy", logits.shape(),
               {static_cast<std::int64_t>(labels.size())});
  }
  return cross_entropy(logits, one_hot(labels, logits.dim(1)));
}

BatchStats channel_moments(const Tensor& x) {
  require_rank("channel_moments", x, 4);
  const double count = static_cast<double>(x.dim(0) * x.dim(2) * x.dim(3));
  auto m = scale(channel_sum(x), 1.0 / count);
  auto centered = sub(x, channel_broadcast(m, x.shape()));
  auto v = scale(channel_sum(square(centered)), 1.0 / count);
  return {m, v};
}

BatchNormResult batchnorm(const Tensor& x, const Tensor& gamma,
                          const Tensor& beta, const Tensor& running_mean,
                          const Tensor& running_var, BatchNormMode mode,
                          double eps) {
  require_rank("batchnorm", x, 4);
  const Shape cs{x.dim(1)};
  for (const Tensor* t : {&gamma, &beta, &running_mean, &running_var}) {
    if (t->shape() != cs) shape_fail("batchnorm", x.shape(), t->shape());
  }
  BatchNormResult r;
  r.batch = channel_moments(x);
  Tensor mu = mode == BatchNormMode::kTrain ? r.batch.mean : running_mean;
  Tensor var = mode == BatchNormMode::kTrain ? r.batch.variance : running_var;
  auto inv_std = reciprocal(sqrt(add_const(var, eps)));
  auto scale_c = mul(gamma, inv_std);
  auto shift_c = sub(beta, mul(mu, scale_c));
  r.output = add(mul(x, channel_broadcast(scale_c, x.shape())),
                 channel_broadcast(shift_c, x.shape()));
  return r;
}

Tensor gaussian_sample(const Tensor& mu, const Tensor& sigma,
                       const Tensor& eps) {
  return add(mu, mul(sigma, eps));
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return map_unary("clamp", x.detach(),
                   [lo, hi](double v) { return std::clamp(v, lo, hi); });
}

}  // namespace gradinv::ops
