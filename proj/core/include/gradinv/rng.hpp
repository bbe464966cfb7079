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
#include <random>
#include <vector>

#include "gradinv/tensor.hpp"

namespace gradinv {

using Rng = std::mt19937_64;

// Derives an independent, reproducible stream seed from a base seed and a
// list of stream tags (repetition, timestamp, seed index, ...).
std::uint64_t derive_seed(std::uint64_t base,
                          std::initializer_list<std::uint64_t> tags);

Tensor normal_tensor(const Shape& shape, Rng& rng, double mean = 0.0,
                     double stddev = 1.0);
Tensor uniform_tensor(const Shape& shape, Rng& rng, double lo, double hi);

}  // namespace gradinv
