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
#include <filesystem>
#include <vector>

#include "gradinv/tensor.hpp"

namespace gradinv::image_io {

struct Image8 {
  std::int64_t height = 0, width = 0, channels = 0;  // channels 1 or 3
  std::vector<std::uint8_t> pixels;                  // interleaved rows
};

void write_png(const std::filesystem::path& path, const Image8& image);
Image8 read_png(const std::filesystem::path& path);

// Tiles batches [B, C, H, W] into one image: row r holds batch r, column i
// holds image perm[r][i] (identity when perm is empty). Values are clamped to
// [0, 1] and rounded to 8 bits. Tiles are separated by `pad` white pixels.
Image8 make_grid(const std::vector<Tensor>& rows,
                 const std::vector<std::vector<int>>& perms = {}, int pad = 1);

// Top-left corner of tile (row, col) in a grid built by make_grid.
std::pair<std::int64_t, std::int64_t> tile_origin(std::int64_t row,
                                                  std::int64_t col,
                                                  std::int64_t height,
                                                  std::int64_t width, int pad);

}  // namespace gradinv::image_io
