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

#include <Eigen/Geometry>

#include <vector>

#include "disent/mesh.hpp"

namespace disent {

struct NearestHit {
  double distance = 0.0;
  int face = -1;
  Vec3 point = Vec3::Zero();
};

/// Axis-aligned bounding volume hierarchy over the faces of a mesh.
class TriangleBvh {
 public:
  explicit TriangleBvh(const TriangleMesh& mesh);

  NearestHit nearest(const Vec3& p) const;

  /// Faces whose distance to p is at most `radius`.
  std::vector<int> faces_within(const Vec3& p, double radius) const;

  /// Number of faces hit by the ray origin + t * dir, t > 0.
  int count_crossings(const Vec3& origin, const Vec3& dir) const;

  std::size_t face_count() const { return tris_.size(); }

 private:
  struct Tri {
    Vec3 a, b, c;
  };
  struct Node {
    Eigen::AlignedBox3d box;
    int left = -1;   // child index or -1 for a leaf
    int right = -1;
    int begin = 0;   // leaf range into order_
    int end = 0;
  };

  int build(int begin, int end, std::vector<Vec3>& centroids);

  std::vector<Tri> tris_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

/// Closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c);

/// Inside/outside and distance queries against a watertight mesh. Immutable
/// once built; concurrent queries are safe.
class MeshOracle {
 public:
  /// Throws StructuralError if the mesh is not watertight.
  explicit MeshOracle(TriangleMesh mesh);

  const TriangleMesh& mesh() const { return mesh_; }
  const TriangleBvh& bvh() const { return bvh_; }

  /// Ray parity along three fixed skewed directions, majority vote.
  bool inside(const Vec3& p) const;
  NearestHit nearest(const Vec3& p) const { return bvh_.nearest(p); }
  double signed_distance(const Vec3& p) const;
  /// Outward unit normal at (or nearest to) p; area-weighted when p is
  /// equidistant to several faces.
  Vec3 surface_normal(const Vec3& p) const;

 private:
  TriangleMesh mesh_;
  TriangleBvh bvh_;
};

int occupancy_at(const MeshOracle& oracle, const Vec3& p);
double signed_distance_at(const MeshOracle& oracle, const Vec3& p);
Vec3 surface_normal_at(const MeshOracle& oracle, const Vec3& p);

}  // namespace disent
