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

#include "gradinv/models.hpp"

namespace gradinv {

// What the server holds for one captured round: the broadcast weights
// (with BN running statistics) and the gradient set one client sent back.
struct Observation {
  std::int64_t t = 0;
  models::ParameterSet weights;
  models::GradientSet gradients;
  std::uint64_t batch_id = 0;
  int client = 0;
};

}  // namespace gradinv
