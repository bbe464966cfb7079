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

#include <chrono>
#include <cstdint>
#include <optional>

namespace gradinv {

// Resident-set high-water mark of this process in bytes, if the platform
// exposes one (Linux /proc).
std::optional<std::int64_t> resident_peak_bytes();
std::optional<std::int64_t> resident_current_bytes();
// Resets the kernel's high-water mark to the current RSS. Returns false when
// unsupported.
bool reset_resident_peak();

struct CostSample {
  double wall_seconds = 0.0;
  // Resident high-water delta over the scope; absent when unsupported.
  std::optional<std::int64_t> peak_memory_bytes;
  // Peak of live tensor storage over the scope, relative to its start.
  std::int64_t tensor_peak_bytes = 0;
};

// Measures wall time and memory between construction and finish().
class CostProbe {
 public:
  CostProbe();
  CostSample finish() const;

 private:
  std::chrono::steady_clock::time_point start_;
  std::optional<std::int64_t> rss_start_;
  std::int64_t tensor_start_ = 0;
};

template <class F>
CostSample compute_cost_probe(F&& body) {
  CostProbe probe;
  body();
  return probe.finish();
}

}  // namespace gradinv
