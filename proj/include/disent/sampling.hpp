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
#include <filesystem>
#include <string>
#include <vector>

#include "disent/dataset.hpp"
#include "disent/scalar_grid.hpp"

namespace disent {

enum class SampleRole : std::uint8_t {
  kOnSurface = 0,
  kOffNear = 1,
  kOffUniform = 2,
  kOccInside = 3,
  kOccOutside = 4,
};

const char* role_name(SampleRole r);

struct SampleBatch {
  std::string example_id;
  FieldKind kind = FieldKind::kOccupancy;
  std::vector<Vec3> points;
  std::vector<SampleRole> roles;
  std::vector<float> occupancy;  ///< 1 inside, 0 outside
  std::vector<float> sdf;        ///< analytic field value at the point
  std::vector<Vec3> normals;     ///< unit for on-surface points, zero otherwise

  int size() const { return static_cast<int>(points.size()); }
  int count(SampleRole r) const;
};

inline constexpr double kDefaultSigma = 0.05;

/// Gaussian-perturbed surface samples, rejection-balanced to n/2 inside and
/// n/2 outside. Throws ConfigError if the balance is not met in 100 n draws.
SampleBatch sample_occupancy(const RenderedExample& ex, int n, double sigma,
                             std::uint64_t seed);

/// n/2 surface points projected onto the zero level set, 3n/8 near-surface
/// and n/8 uniform points in [-1, 1]^3.
SampleBatch sample_sdf(const RenderedExample& ex, int n, double sigma, std::uint64_t seed);

/// Moves p onto the zero level set of the figure by Newton steps along the
/// field gradient. Throws if |sdf| < tol is not reached.
Vec3 project_to_surface(const Figure& figure, Vec3 p, double tol = 1e-5);

/// Binary cache record: "SMB1", kind, n, then per point 3 f64 position,
/// u8 role, f32 occupancy, f32 sdf, 3 f64 normal. Id is stored length-prefixed.
void write_batch(const SampleBatch& batch, const std::filesystem::path& path);
SampleBatch read_batch(const std::filesystem::path& path);

}  // namespace disent
