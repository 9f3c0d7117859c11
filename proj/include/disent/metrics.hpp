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

#include <cstdint>
#include <vector>

#include "disent/mesh.hpp"

namespace disent {

/// Surface comparison in normalized scene units.
struct SurfaceMetrics {
  double chamfer = 0.0;     ///< mean of the two directed mean surface distances
  double p2s = 0.0;         ///< mean distance of predicted vertices to gt
  double normal_rms = 0.0;  ///< RMS of |n_a - n_b| over nearest-point pairs
};

struct SurfaceSamples {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  ///< face normal of the sampled triangle
  std::vector<int> faces;
};

/// Area-uniform samples. Zero-area faces are never drawn.
SurfaceSamples sample_surface(const TriangleMesh& mesh, int count, std::uint64_t seed);

/// Each mesh is sampled with a stream derived from (seed, its fingerprint), so
/// the chamfer term is exactly symmetric in its arguments.
SurfaceMetrics evaluate_surface(const TriangleMesh& pred, const TriangleMesh& gt,
                                int n_samples, std::uint64_t seed = 0);

/// |A and B| / |A or B| over two occupancy masks of equal size.
double volumetric_iou(const std::vector<std::uint8_t>& a,
                      const std::vector<std::uint8_t>& b);

}  // namespace disent
