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

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "gradinv/attacks.hpp"
#include "gradinv/datasets.hpp"
#include "gradinv/fedsim.hpp"
#include "gradinv/metrics.hpp"
#include "gradinv/ops.hpp"
#include "gradinv/rng.hpp"

using namespace gradinv;

namespace {

models::ModelSpec desk_lenet() {
  models::ModelSpec s;
  s.height = s.width = 16;
  s.num_classes = 4;
  return s;
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto b = state.range(0);
  Rng rng(1);
  auto x = uniform_tensor({b, 3, 32, 32}, rng, 0, 1);
  auto w = Tensor::from_data({12, 3, 5, 5}, normal_tensor({12, 3, 5, 5}, rng).to_vector(), true);
  for (auto _ : state) {
    auto y = ops::sum(ops::square(ops::conv2d(x, w, {2, 2})));
    benchmark::DoNotOptimize(grad(y, {w}).grads[0]);
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Matmul(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(2);
  auto a = normal_tensor({n, n}, rng);
  auto c = normal_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, c));
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

// One objective + gradient evaluation, the unit of work of every attack.
void BM_AttackObjectiveStep(benchmark::State& state) {
  const auto b = state.range(0);
  const auto spec = desk_lenet();
  auto data = datasets::synthetic_dataset(4, 64, 3, {3, 16, 16});
  datasets::Batcher batcher(data, b, false, 3);
  auto batch = batcher.next();
  auto p = models::init_parameters(spec, 4);
  Rng rng(5);
  auto u = fedsim::client_step(p, batch, {}, rng);
  std::vector<Observation> pairs{Observation{0, p, u.wire, batch.batch_id(), 0}};
  auto cfg = attacks::preset("inverting_gradients");
  const auto k = attacks::scaled_coefficients(cfg, 16, 16, b);
  auto x0 = uniform_tensor(batch.pixels.shape(), rng, 0, 1);
  for (auto _ : state) {
    auto x = Tensor::from_data(x0.shape(), x0.to_vector(), true);
    auto parts =
        attacks::attack_objective(pairs, x, batch.labels, cfg, k, Tensor(), std::nullopt);
    benchmark::DoNotOptimize(grad(parts.total, {x}).grads[0]);
  }
}
BENCHMARK(BM_AttackObjectiveStep)->Arg(1)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Hungarian(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> c(n * n);
  for (auto& v : c) v = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::hungarian(c, n));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Hungarian)->RangeMultiplier(2)->Range(8, 128)->Complexity(benchmark::oNCubed);

void BM_Ssim(benchmark::State& state) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> a(3 * 32 * 32), b(a.size());
  for (auto& v : a) v = u(rng);
  for (auto& v : b) v = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::ssim(a, b, 3, 32, 32));
}
BENCHMARK(BM_Ssim);

}  // namespace

BENCHMARK_MAIN();
