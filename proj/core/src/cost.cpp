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

#include "gradinv/cost.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>

#include "gradinv/tensor.hpp"

namespace gradinv {
namespace {

std::optional<std::int64_t> status_field(const char* key) {
  std::ifstream in("/proc/self/status");
  if (!in) return std::nullopt;
  std::string line;
  const std::string prefix = std::string(key) + ":";
  while (std::getline(in, line)) {
    if (line.rfind(prefix, 0) == 0) {
      std::istringstream fields(line.substr(prefix.size()));
      std::int64_t kb = 0;
      if (fields >> kb) return kb * 1024;
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::int64_t> resident_peak_bytes() { return status_field("VmHWM"); }
std::optional<std::int64_t> resident_current_bytes() { return status_field("VmRSS"); }

bool reset_resident_peak() {
  std::ofstream out("/proc/self/clear_refs");
  if (!out) return false;
  out << "5";
  out.flush();
  return static_cast<bool>(out);
}

CostProbe::CostProbe() {
  reset_tensor_bytes_peak();
  tensor_start_ = tensor_bytes_live();
  if (reset_resident_peak()) rss_start_ = resident_current_bytes();
  start_ = std::chrono::steady_clock::now();
}

CostSample CostProbe::finish() const {
  CostSample s;
  s.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
          .count();
  if (rss_start_) {
    if (auto peak = resident_peak_bytes()) {
      s.peak_memory_bytes = std::max<std::int64_t>(0, *peak - *rss_start_);
    }
  }
  s.tensor_peak_bytes = std::max<std::int64_t>(0, tensor_bytes_peak() - tensor_start_);
  return s;
}

}  // namespace gradinv
