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

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradinv/models.hpp"
#include "gradinv/tensor.hpp"

// Flat binary array files.
//
// Layout (all integers little-endian):
//   8 bytes   magic "GINVARR1"
//   8 bytes   uint64 header length L
//   L bytes   UTF-8 JSON header:
//             {"dtype": "float64", "arrays": [{"name", "shape", "offset"}...],
//              "meta": {...}}
//             offset counts float64 elements from the start of the payload
//   payload   float64 values (IEEE-754, little-endian), arrays back to back
namespace gradinv::checkpoint {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct ArrayFile {
  std::vector<NamedArray> arrays;
  nlohmann::json meta = nlohmann::json::object();

  const NamedArray& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void write_arrays(const std::filesystem::path& path, const ArrayFile& file);
ArrayFile read_arrays(const std::filesystem::path& path);

// Model weights, BN running statistics and the model spec (in meta).
void save_checkpoint(const std::filesystem::path& path,
                     const models::ParameterSet& params,
                     nlohmann::json extra_meta = nlohmann::json::object());
models::ParameterSet load_checkpoint(const std::filesystem::path& path);

// A gradient set stored under the parameter names of `layout`.
void save_gradients(const std::filesystem::path& path,
                    const models::ParameterSet& layout,
                    const models::GradientSet& grads);
models::GradientSet load_gradients(const std::filesystem::path& path,
                                   const models::ParameterSet& layout);

}  // namespace gradinv::checkpoint
