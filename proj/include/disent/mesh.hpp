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

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace disent {

using Vec3 = Eigen::Vector3d;
using Face = std::array<int, 3>;

/// Triangle surface in normalized scene units. Faces are wound
/// counter-clockwise when seen from outside.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  /// Optional per-vertex unit normals; empty or vertices.size().
  std::vector<Vec3> normals;

  bool empty() const { return faces.empty(); }
};

Vec3 face_normal(const TriangleMesh& mesh, std::size_t face);  // unit, or zero if degenerate
double face_area(const TriangleMesh& mesh, std::size_t face);
double surface_area(const TriangleMesh& mesh);

/// Volume enclosed by the surface; positive for outward winding.
double signed_volume(const TriangleMesh& mesh);

/// Every undirected edge is used by exactly two faces, once in each direction.
bool is_watertight(const TriangleMesh& mesh);

/// Throws StructuralError describing the first offending edge.
void require_watertight(const TriangleMesh& mesh);

/// Area-weighted vertex normals.
std::vector<Vec3> vertex_normals(const TriangleMesh& mesh);

TriangleMesh make_icosphere(double radius, int subdivisions);
TriangleMesh make_box(const Vec3& lo, const Vec3& hi);

/// Order-sensitive 64-bit fingerprint of the geometry.
std::uint64_t mesh_fingerprint(const TriangleMesh& mesh);

}  // namespace disent
