// Copyright 2026 The disent3d Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <vector>

namespace disent {

/// Grayscale raster, row 0 at the top, values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  double foreground_fraction() const;  ///< share of pixels with value > 0
};

/// 8-bit grayscale PNG.
void write_png(const Image& image, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

/// Lossless sidecar: "F32I", u32 width, u32 height, row-major f32 pixels.
void write_f32(const Image& image, const std::filesystem::path& path);
Image read_f32(const std::filesystem::path& path);

}  // namespace disent
