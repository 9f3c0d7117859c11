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

#include "disent/mesh_oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "disent/error.hpp"

namespace disent {

namespace {

constexpr int kLeafSize = 4;

double box_distance_sq(const Eigen::AlignedBox3d& box, const Vec3& p) {
  double d2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double lo = box.min()[k] - p[k];
    const double hi = p[k] - box.max()[k];
    const double d = std::max({lo, hi, 0.0});
    d2 += d * d;
  }
  return d2;
}

bool ray_hits_box(const Eigen::AlignedBox3d& box, const Vec3& o,
                  const Vec3& inv_dir) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    double ta = (box.min()[k] - o[k]) * inv_dir[k];
    double tb = (box.max()[k] - o[k]) * inv_dir[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

// Moller-Trumbore; true when the ray crosses the triangle at t > 0.
bool ray_crosses(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b,
                 const Vec3& c) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 pv = d.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < 1e-300) return false;
  const double inv = 1.0 / det;
  const Vec3 tv = o - a;
  const double u = tv.dot(pv) * inv;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 qv = tv.cross(e1);
  const double v = d.dot(qv) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  return e2.dot(qv) * inv > 0.0;
}

const std::array<Vec3, 3>& parity_directions() {
  static const std::array<Vec3, 3> dirs = {
      Vec3(0.5377, 0.8322, 0.1372).normalized(),
      Vec3(-0.6912, 0.2271, 0.6859).normalized(),
      Vec3(0.1839, -0.6291, -0.7553).normalized()};
  return dirs;
}

}  // namespace

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    return a + ab * (d1 / (d1 - d3));
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    return a + ac * (d2 / (d2 - d6));
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  }

  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

TriangleBvh::TriangleBvh(const TriangleMesh& mesh) {
  tris_.reserve(mesh.faces.size());
  std::vector<Vec3> centroids;
  centroids.reserve(mesh.faces.size());
  for (const auto& f : mesh.faces) {
    Tri t{mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]};
    centroids.push_back((t.a + t.b + t.c) / 3.0);
    tris_.push_back(t);
  }
  order_.resize(tris_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!tris_.empty()) {
    nodes_.reserve(2 * tris_.size() / kLeafSize + 2);
    build(0, static_cast<int>(tris_.size()), centroids);
  }
}

int TriangleBvh::build(int begin, int end, std::vector<Vec3>& centroids) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box;
  Eigen::AlignedBox3d cbox;
  for (int i = begin; i < end; ++i) {
    const Tri& t = tris_[order_[i]];
    box.extend(t.a).extend(t.b).extend(t.c);
    cbox.extend(centroids[order_[i]]);
  }
  nodes_[index].box = box;
  if (end - begin <= kLeafSize) {
    nodes_[index].begin = begin;
    nodes_[index].end = end;
    return index;
  }
  int axis = 0;
  cbox.sizes().maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](int x, int y) {
                     return centroids[x][axis] < centroids[y][axis];
                   });
  const int left = build(begin, mid, centroids);
  const int right = build(mid, end, centroids);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

NearestHit TriangleBvh::nearest(const Vec3& p) const {
  NearestHit best;
  double best_d2 = std::numeric_limits<double>::infinity();
  if (nodes_.empty()) return best;
  std::array<std::pair<int, double>, 128> stack;
  int top = 0;
  stack[top++] = {0, box_distance_sq(nodes_[0].box, p)};
  while (top > 0) {
    const auto [ni, nd2] = stack[--top];
    if (nd2 >= best_d2) continue;
    const Node& node = nodes_[ni];
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const Tri& t = tris_[order_[i]];
        const Vec3 q = closest_point_on_triangle(p, t.a, t.b, t.c);
        const double d2 = (q - p).squaredNorm();
        if (d2 < best_d2) {
          best_d2 = d2;
          best.face = order_[i];
          best.point = q;
        }
      }
      continue;
    }
    const double dl = box_distance_sq(nodes_[node.left].box, p);
    const double dr = box_distance_sq(nodes_[node.right].box, p);
    // Push the farther child first so the nearer one is visited next.
    if (dl < dr) {
      stack[top++] = {node.right, dr};
      stack[top++] = {node.left, dl};
    } else {
      stack[top++] = {node.left, dl};
      stack[top++] = {node.right, dr};
    }
  }
  best.distance = std::sqrt(best_d2);
  return best;
}

std::vector<int> TriangleBvh::faces_within(const Vec3& p, double radius) const {
  std::vector<int> out;
  if (nodes_.empty()) return out;
  const double r2 = radius * radius;
  std::array<int, 128> stack;
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (box_distance_sq(node.box, p) > r2) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const Tri& t = tris_[order_[i]];
        const Vec3 q = closest_point_on_triangle(p, t.a, t.b, t.c);
        if ((q - p).squaredNorm() <= r2) out.push_back(order_[i]);
      }
      continue;
    }
    stack[top++] = node.left;
    stack[top++] = node.right;
  }
  std::sort(out.begin(), out.end());
  return out;
}

int TriangleBvh::count_crossings(const Vec3& origin, const Vec3& dir) const {
  if (nodes_.empty()) return 0;
  const Vec3 inv_dir = dir.cwiseInverse();
  int count = 0;
  std::array<int, 128> stack;
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (!ray_hits_box(node.box, origin, inv_dir)) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const Tri& t = tris_[order_[i]];
        if (ray_crosses(origin, dir, t.a, t.b, t.c)) ++count;
      }
      continue;
    }
    stack[top++] = node.left;
    stack[top++] = node.right;
  }
  return count;
}

MeshOracle::MeshOracle(TriangleMesh mesh)
    : mesh_((require_watertight(mesh), std::move(mesh))), bvh_(mesh_) {}

bool MeshOracle::inside(const Vec3& p) const {
  int votes = 0;
  for (const Vec3& d : parity_directions()) {
    votes += bvh_.count_crossings(p, d) & 1;
  }
  return votes >= 2;
}

double MeshOracle::signed_distance(const Vec3& p) const {
  const double d = bvh_.nearest(p).distance;
  return inside(p) ? -d : d;
}

Vec3 MeshOracle::surface_normal(const Vec3& p) const {
  const NearestHit hit = bvh_.nearest(p);
  const double tol = 1e-9 * (1.0 + hit.distance);
  Vec3 acc = Vec3::Zero();
  for (int f : bvh_.faces_within(p, hit.distance + tol)) {
    const double area = face_area(mesh_, f);
    if (area <= 0.0) continue;
    acc += area * face_normal(mesh_, f);
  }
  const double len = acc.norm();
  if (!(len > 0.0)) {
    throw StructuralError("surface normal undefined: all nearby faces are degenerate");
  }
  return acc / len;
}

int occupancy_at(const MeshOracle& oracle, const Vec3& p) {
  return oracle.inside(p) ? 1 : 0;
}

double signed_distance_at(const MeshOracle& oracle, const Vec3& p) {
  return oracle.signed_distance(p);
}

Vec3 surface_normal_at(const MeshOracle& oracle, const Vec3& p) {
  return oracle.surface_normal(p);
}

}  // namespace disent
