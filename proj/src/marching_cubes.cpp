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

#include "disent/marching_cubes.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <limits>
#include <unordered_map>

#include "disent/error.hpp"

namespace disent {

namespace {

// Corner c of a cell is offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
// Kuhn triangulation: one tetrahedron per axis permutation, each a monotone
// path from corner 0 to corner 7.
constexpr std::array<std::array<int, 4>, 6> kTets = {{
    {0, 1, 3, 7},
    {0, 1, 5, 7},
    {0, 2, 3, 7},
    {0, 2, 6, 7},
    {0, 4, 5, 7},
    {0, 4, 6, 7},
}};

class Extractor {
 public:
  Extractor(const ScalarFieldGrid& grid, double iso)
      : grid_(grid), n_(grid.resolution), padded_(n_ + 2) {
    // Signed so that negative is inside and the gradient points outward.
    const bool occ = grid.kind == FieldKind::kOccupancy;
    pad_value_ = occ ? iso : grid.spacing();
    f_.resize(static_cast<std::size_t>(padded_) * padded_ * padded_, pad_value_);
    for (int iz = 0; iz < n_; ++iz) {
      for (int iy = 0; iy < n_; ++iy) {
        for (int ix = 0; ix < n_; ++ix) {
          const double v = grid.values[grid.index(ix, iy, iz)];
          f_[padded_index(ix + 1, iy + 1, iz + 1)] = occ ? iso - v : v - iso;
        }
      }
    }
  }

  TriangleMesh run() {
    for (int z = 0; z + 1 < padded_; ++z) {
      for (int y = 0; y + 1 < padded_; ++y) {
        for (int x = 0; x + 1 < padded_; ++x) process_cell(x, y, z);
      }
    }
    mesh_.normals = vertex_normals(mesh_);
    return std::move(mesh_);
  }

 private:
  std::size_t padded_index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * padded_ + y) * padded_ + x;
  }

  Vec3 position(int x, int y, int z) const {
    // Padded index p maps to grid index p - 1.
    const double h = grid_.spacing();
    return grid_.lo + Vec3(x - 1, y - 1, z - 1) * h;
  }

  static Vec3 corner_offset(int c) { return Vec3(c & 1, (c >> 1) & 1, (c >> 2) & 1); }

  int edge_vertex(int x, int y, int z, int ca, int cb) {
    // Kuhn edges always join corners ca < cb with cb's offset covering ca's.
    if (ca > cb) std::swap(ca, cb);
    const int bx = x + (ca & 1), by = y + ((ca >> 1) & 1), bz = z + ((ca >> 2) & 1);
    const int dir = cb ^ ca;
    const std::uint64_t key = padded_index(bx, by, bz) * 8u + static_cast<unsigned>(dir);
    auto it = vertex_of_edge_.find(key);
    if (it != vertex_of_edge_.end()) return it->second;

    const double fa = corner_value(x, y, z, ca);
    const double fb = corner_value(x, y, z, cb);
    const Vec3 pa = position(bx, by, bz);
    const Vec3 pb = pa + corner_offset(dir) * grid_.spacing();
    const double t = fa / (fa - fb);
    const int idx = static_cast<int>(mesh_.vertices.size());
    mesh_.vertices.push_back(pa + t * (pb - pa));
    vertex_of_edge_.emplace(key, idx);
    return idx;
  }

  double corner_value(int x, int y, int z, int c) const {
    return f_[padded_index(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1))];
  }

  void emit(std::array<int, 3> tri, const Vec3& mid_normal, const Vec3& outward) {
    if (mid_normal.dot(outward) < 0.0) std::swap(tri[1], tri[2]);
    mesh_.faces.push_back({tri[0], tri[1], tri[2]});
  }

  void process_cell(int x, int y, int z) {
    std::array<double, 8> v;
    int inside_count = 0;
    for (int c = 0; c < 8; ++c) {
      v[c] = corner_value(x, y, z, c);
      inside_count += v[c] < 0.0;
    }
    if (inside_count == 0 || inside_count == 8) return;

    for (const auto& tet : kTets) {
      std::array<int, 4> in{}, out{};
      int ni = 0, no = 0;
      for (int c : tet) {
        if (v[c] < 0.0) {
          in[ni++] = c;
        } else {
          out[no++] = c;
        }
      }
      if (ni == 0 || no == 0) continue;

      // Orientation is decided on the edge-midpoint polygon, which is never
      // degenerate, so zero-area output triangles still get consistent winding.
      auto mid = [](int a, int b) -> Vec3 { return 0.5 * (corner_offset(a) + corner_offset(b)); };
      Vec3 cin = Vec3::Zero(), cout = Vec3::Zero();
      for (int i = 0; i < ni; ++i) cin += corner_offset(in[i]) / static_cast<double>(ni);
      for (int i = 0; i < no; ++i) cout += corner_offset(out[i]) / static_cast<double>(no);
      const Vec3 outward = cout - cin;

      if (ni == 1 || no == 1) {
        const int apex = ni == 1 ? in[0] : out[0];
        const auto& others = ni == 1 ? out : in;
        const Vec3 m0 = mid(apex, others[0]), m1 = mid(apex, others[1]),
                   m2 = mid(apex, others[2]);
        const Vec3 n = (m1 - m0).cross(m2 - m0);
        emit({edge_vertex(x, y, z, apex, others[0]), edge_vertex(x, y, z, apex, others[1]),
              edge_vertex(x, y, z, apex, others[2])},
             n, outward);
      } else {
        // Quad cycle: (i0,o0) (i0,o1) (i1,o1) (i1,o0).
        const Vec3 m0 = mid(in[0], out[0]), m1 = mid(in[0], out[1]),
                   m2 = mid(in[1], out[1]);
        const Vec3 n = (m1 - m0).cross(m2 - m0);
        const int q0 = edge_vertex(x, y, z, in[0], out[0]);
        const int q1 = edge_vertex(x, y, z, in[0], out[1]);
        const int q2 = edge_vertex(x, y, z, in[1], out[1]);
        const int q3 = edge_vertex(x, y, z, in[1], out[0]);
        if (n.dot(outward) >= 0.0) {
          mesh_.faces.push_back({q0, q1, q2});
          mesh_.faces.push_back({q0, q2, q3});
        } else {
          mesh_.faces.push_back({q0, q2, q1});
          mesh_.faces.push_back({q0, q3, q2});
        }
      }
    }
  }

  const ScalarFieldGrid& grid_;
  int n_;
  int padded_;
  double pad_value_ = 0.0;
  std::vector<double> f_;
  std::unordered_map<std::uint64_t, int> vertex_of_edge_;
  TriangleMesh mesh_;
};

}  // namespace

TriangleMesh marching_cubes(const ScalarFieldGrid& grid, double iso) {
  grid.validate();
  float lo = std::numeric_limits<float>::infinity();
  float hi = -lo;
  for (float v : grid.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const bool occ = grid.kind == FieldKind::kOccupancy;
  const bool any_inside = occ ? hi > iso : lo < iso;
  const bool any_outside = occ ? lo <= iso : hi >= iso;
  if (!any_inside || !any_outside) {
    throw EmptySurfaceError(
        fmt::format("field has no {} crossing of iso {} (min {}, max {})",
                    occ ? "occupancy" : "sdf", iso, lo, hi),
        lo, hi);
  }
  return Extractor(grid, iso).run();
}

}  // namespace disent
