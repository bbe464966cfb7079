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
#include <span>
#include <vector>

#include "gradinv/tensor.hpp"

// Differentiable operators. Every op records itself on the active graph when
// grad mode is on and an input requires grad. Unless noted otherwise, each
// backward rule is written in terms of these same ops, so gradients can be
// differentiated a second time.
namespace gradinv::ops {

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// a * s where s has one element.
Tensor scale_by(const Tensor& a, const Tensor& s);
Tensor scale(const Tensor& a, double factor);
Tensor add_const(const Tensor& a, double value);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
// |x|; derivative sign(x) with sign(0) = 0.
Tensor abs(const Tensor& x);
Tensor reciprocal(const Tensor& x);

// Reductions to a one-element tensor.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);
// Euclidean norm; the gradient at 0 is taken as 0.
Tensor norm_l2(const Tensor& x);
// Broadcast a one-element tensor to `shape`.
Tensor expand(const Tensor& s, const Shape& shape);

// 2-D helpers: [m, n] <-> [n] (rows) and [m, n] <-> [m] (cols).
Tensor sum_rows(const Tensor& x);
Tensor broadcast_rows(const Tensor& v, std::int64_t m);
Tensor sum_cols(const Tensor& x);
Tensor broadcast_cols(const Tensor& v, std::int64_t n);

// NCHW helpers: [N, C, H, W] <-> [C].
Tensor channel_sum(const Tensor& x);
Tensor channel_broadcast(const Tensor& v, const Shape& shape);

// Columns [begin, begin + count) of a [m, n] tensor, and its adjoint which
// embeds [m, count] into zeros of width n.
Tensor slice_cols(const Tensor& x, std::int64_t begin, std::int64_t count);
Tensor pad_cols(const Tensor& x, std::int64_t begin, std::int64_t width);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);

// Forward difference along `axis`: y[.., i, ..] = x[.., i+1, ..] - x[.., i, ..].
Tensor finite_diff(const Tensor& x, std::size_t axis);
// Adjoint of finite_diff; output has the extent of `axis` grown by one.
Tensor finite_diff_adjoint(const Tensor& g, std::size_t axis);

Tensor matmul(const Tensor& a, const Tensor& b);
// a [m,k] times b[n,k] transposed.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// a[k,m] transposed times b [k,n].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// x[N, in] * w[out, in]^T + b[out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

struct Conv2dParams {
  std::int64_t stride = 1;
  std::int64_t padding = 0;
};

// x[N, Ci, H, W] * w[Co, Ci, K, K] -> [N, Co, Ho, Wo], no bias.
Tensor conv2d(const Tensor& x, const Tensor& w, Conv2dParams p = {});
// Gradient of conv2d w.r.t. its input (a transposed convolution).
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& w,
                         const Shape& input_shape, Conv2dParams p);
// Gradient of conv2d w.r.t. its kernel.
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& grad_out,
                          const Shape& weight_shape, Conv2dParams p);

// Non-overlapping k x k average pooling (H, W divisible by k).
Tensor avg_pool2d(const Tensor& x, std::int64_t k);
// Adjoint of avg_pool2d: each value spread over its k x k block divided by k^2.
Tensor avg_unpool2d(const Tensor& g, std::int64_t k);
// Non-overlapping k x k max pooling. First-order only.
Tensor max_pool2d(const Tensor& x, std::int64_t k);

// Row-wise softmax / logsumexp over [m, n].
Tensor softmax(const Tensor& logits);
Tensor logsumexp(const Tensor& logits);
Tensor log_softmax(const Tensor& logits);
// Mean cross-entropy over the batch against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);
// Mean cross-entropy against a (possibly soft) target distribution [m, n].
Tensor cross_entropy(const Tensor& logits, const Tensor& target);
Tensor one_hot(std::span<const int> labels, std::int64_t num_classes);

struct BatchStats {
  Tensor mean;      // [C]
  Tensor variance;  // [C], biased
};

// Per-channel batch mean and biased variance over N, H, W.
BatchStats channel_moments(const Tensor& x);

enum class BatchNormMode { kTrain, kEval };

struct BatchNormResult {
  Tensor output;
  BatchStats batch;  // moments of the input batch (always computed)
};

// Normalises with batch moments (kTrain) or the supplied running moments
// (kEval), then applies the per-channel affine gamma/beta.
BatchNormResult batchnorm(const Tensor& x, const Tensor& gamma,
                          const Tensor& beta, const Tensor& running_mean,
                          const Tensor& running_var, BatchNormMode mode,
                          double eps);

// mu + sigma * eps (reparameterised sample).
Tensor gaussian_sample(const Tensor& mu, const Tensor& sigma, const Tensor& eps);

// Non-differentiable helpers.
Tensor clamp(const Tensor& x, double lo, double hi);

}  // namespace gradinv::ops
