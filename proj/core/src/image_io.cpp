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

#include "gradinv/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "gradinv/errors.hpp"

namespace gradinv::image_io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw FormatError("PNG writer supports 1 or 3 channels");
  }
  File f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  // Fixed header, no timestamps: identical pixels give identical files.
  png_write_info(png, info);
  const auto stride = img.width * img.channels;
  for (std::int64_t y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image8 read_png(const std::filesystem::path& path) {
  File f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + " is not a readable PNG");
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  Image8 img;
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.channels = png_get_channels(png, info);
  img.pixels.resize(img.width * img.height * img.channels);
  for (std::int64_t y = 0; y < img.height; ++y) {
    png_read_row(png, img.pixels.data() + y * img.width * img.channels, nullptr);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

std::pair<std::int64_t, std::int64_t> tile_origin(std::int64_t row,
                                                  std::int64_t col,
                                                  std::int64_t height,
                                                  std::int64_t width, int pad) {
  return {pad + row * (height + pad), pad + col * (width + pad)};
}

Image8 make_grid(const std::vector<Tensor>& rows,
                 const std::vector<std::vector<int>>& perms, int pad) {
  if (rows.empty()) throw ShapeError("make_grid needs at least one row");
  const auto& s = rows.front().shape();
  if (s.size() != 4) throw ShapeError("make_grid rows must be [B, C, H, W]");
  const auto b = s[0], c = s[1], h = s[2], w = s[3];
  if (c != 1 && c != 3) throw ShapeError("make_grid supports 1 or 3 channels");
  for (const auto& r : rows)
    if (r.shape() != s) throw ShapeError("make_grid rows differ in shape");
  Image8 img;
  img.channels = c;
  img.height = pad + static_cast<std::int64_t>(rows.size()) * (h + pad);
  img.width = pad + b * (w + pad);
  img.pixels.assign(img.height * img.width * c, 255);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto d = rows[r].data();
    for (std::int64_t i = 0; i < b; ++i) {
      const auto src = (r < perms.size() && !perms[r].empty()) ? perms[r][i] : i;
      const auto [oy, ox] = tile_origin(static_cast<std::int64_t>(r), i, h, w, pad);
      for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t y = 0; y < h; ++y)
          for (std::int64_t x = 0; x < w; ++x) {
            const double v = std::clamp(d[((src * c + ch) * h + y) * w + x], 0.0, 1.0);
            img.pixels[((oy + y) * img.width + (ox + x)) * c + ch] =
                static_cast<std::uint8_t>(std::lround(v * 255.0));
          }
    }
  }
  return img;
}

}  // namespace gradinv::image_io
