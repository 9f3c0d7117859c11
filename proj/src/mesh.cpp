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

#include "disent/mesh.hpp"

#include <fmt/format.h>

#include <map>
#include <unordered_map>
#include <utility>

#include "disent/error.hpp"
#include "disent/hash.hpp"

namespace disent {

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

Vec3 face_normal(const TriangleMesh& mesh, std::size_t face) {
  const auto& f = mesh.faces[face];
  const Vec3& a = mesh.vertices[f[0]];
  const Vec3 n = (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

double face_area(const TriangleMesh& mesh, std::size_t face) {
  const auto& f = mesh.faces[face];
  const Vec3& a = mesh.vertices[f[0]];
  return 0.5 * (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a).norm();
}

double surface_area(const TriangleMesh& mesh) {
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) total += face_area(mesh, i);
  return total;
}

double signed_volume(const TriangleMesh& mesh) {
  double vol = 0.0;
  for (const auto& f : mesh.faces) {
    vol += mesh.vertices[f[0]].dot(
        mesh.vertices[f[1]].cross(mesh.vertices[f[2]]));
  }
  return vol / 6.0;
}

namespace {

std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

// Empty string when the mesh is closed and consistently oriented.
std::string find_structural_defect(const TriangleMesh& mesh) {
  if (mesh.faces.empty()) return "mesh has no faces";
  const int nv = static_cast<int>(mesh.vertices.size());
  std::unordered_map<std::uint64_t, int> directed;
  directed.reserve(mesh.faces.size() * 3);
  for (std::size_t fi = 0; fi < mesh.faces.size(); ++fi) {
    const auto& f = mesh.faces[fi];
    for (int k = 0; k < 3; ++k) {
      const int a = f[k];
      const int b = f[(k + 1) % 3];
      if (a < 0 || a >= nv || b < 0 || b >= nv) {
        return fmt::format("face {} references vertex out of range", fi);
      }
      if (a == b) return fmt::format("face {} repeats vertex {}", fi, a);
      if (++directed[edge_key(a, b)] > 1) {
        return fmt::format("directed edge ({}, {}) used by more than one face",
                           a, b);
      }
    }
  }
  for (const auto& [key, count] : directed) {
    const int a = static_cast<int>(key >> 32);
    const int b = static_cast<int>(key & 0xffffffffu);
    if (directed.find(edge_key(b, a)) == directed.end()) {
      return fmt::format("edge ({}, {}) is a boundary edge", a, b);
    }
  }
  return {};
}

}  // namespace

bool is_watertight(const TriangleMesh& mesh) {
  return find_structural_defect(mesh).empty();
}

void require_watertight(const TriangleMesh& mesh) {
  const std::string defect = find_structural_defect(mesh);
  if (!defect.empty()) throw StructuralError("mesh is not watertight: " + defect);
}

std::vector<Vec3> vertex_normals(const TriangleMesh& mesh) {
  std::vector<Vec3> normals(mesh.vertices.size(), Vec3::Zero());
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices[f[0]];
    // Cross product length is twice the area, which gives the weighting.
    const Vec3 n = (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a);
    for (int v : f) normals[v] += n;
  }
  for (auto& n : normals) {
    const double len = n.norm();
    if (len > 0.0) n /= len;
  }
  return normals;
}

TriangleMesh make_icosphere(double radius, int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh mesh;
  mesh.vertices = {{-1, t, 0},  {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                   {0, -1, t},  {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                   {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  mesh.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (auto& v : mesh.vertices) v.normalize();
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const int idx = static_cast<int>(mesh.vertices.size());
      mesh.vertices.push_back((mesh.vertices[a] + mesh.vertices[b]).normalized());
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(mesh.faces.size() * 4);
    for (const auto& f : mesh.faces) {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    mesh.faces = std::move(next);
  }
  mesh.normals = mesh.vertices;
  for (auto& v : mesh.vertices) v *= radius;
  return mesh;
}

TriangleMesh make_box(const Vec3& lo, const Vec3& hi) {
  TriangleMesh mesh;
  for (int i = 0; i < 8; ++i) {
    mesh.vertices.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(),
                               (i & 4) ? hi.z() : lo.z());
  }
  mesh.faces = {{0, 2, 3}, {0, 3, 1},   // z = lo
                {4, 5, 7}, {4, 7, 6},   // z = hi
                {0, 1, 5}, {0, 5, 4},   // y = lo
                {2, 6, 7}, {2, 7, 3},   // y = hi
                {0, 4, 6}, {0, 6, 2},   // x = lo
                {1, 3, 7}, {1, 7, 5}};  // x = hi
  mesh.normals = vertex_normals(mesh);
  return mesh;
}

std::uint64_t mesh_fingerprint(const TriangleMesh& mesh) {
  Fnv1a h;
  for (const auto& v : mesh.vertices) h.update(v.data(), sizeof(double) * 3);
  for (const auto& f : mesh.faces) h.update(f.data(), sizeof(int) * 3);
  return h.digest();
}

}  // namespace disent
