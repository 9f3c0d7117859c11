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
#include <functional>
#include <vector>

#include "disent/mesh.hpp"

namespace disent {

enum class FieldKind : std::uint32_t { kOccupancy = 0, kSdf = 1 };

/// N^3 samples of a scalar field over an axis-aligned cube. Node (ix, iy, iz)
/// sits at lo + (hi - lo) * (i / (N - 1)) and is stored at
/// values[(iz * N + iy) * N + ix].
struct ScalarFieldGrid {
  int resolution = 0;
  Vec3 lo = Vec3::Constant(-1.0);
  Vec3 hi = Vec3::Constant(1.0);
  FieldKind kind = FieldKind::kSdf;
  std::vector<float> values;

  std::size_t index(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(iz) * resolution + iy) * resolution + ix;
  }
  Vec3 node(int ix, int iy, int iz) const;
  double spacing() const { return (hi.x() - lo.x()) / (resolution - 1); }

  /// Throws InvalidArgument on resolution < 8, size mismatch or values out of
  /// range for the field kind.
  void validate() const;
};

/// Samples `field` at every grid node, x fastest.
ScalarFieldGrid sample_grid(const std::function<double(const Vec3&)>& field,
                            int resolution, FieldKind kind, double half_extent = 1.0);

/// Default iso level for a field kind: 0.5 for occupancy, 0 for SDF.
double default_iso(FieldKind kind);

/// Binary container: "SFG1", u32 resolution, 6 f64 bounds, u32 kind, then
/// N^3 little-endian f32 values in storage order.
void write_grid(const ScalarFieldGrid& grid, const std::filesystem::path& path);
ScalarFieldGrid read_grid(const std::filesystem::path& path);

}  // namespace disent
