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

#include "disent/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "disent/error.hpp"
#include "disent/hash.hpp"
#include "disent/mesh_oracle.hpp"

namespace disent {

SurfaceSamples sample_surface(const TriangleMesh& mesh, int count, std::uint64_t seed) {
  if (mesh.empty()) throw InvalidArgument("cannot sample an empty mesh");
  std::vector<double> cdf(mesh.faces.size());
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    total += face_area(mesh, i);
    cdf[i] = total;
  }
  if (!(total > 0.0)) throw InvalidArgument("mesh has zero surface area");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  SurfaceSamples out;
  out.points.reserve(count);
  out.normals.reserve(count);
  out.faces.reserve(count);
  for (int s = 0; s < count; ++s) {
    const double r = uni(rng) * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), r);
    if (it == cdf.end()) --it;
    // upper_bound skips zero-area faces because their cdf equals the previous.
    const auto fi = static_cast<std::size_t>(it - cdf.begin());
    const auto& f = mesh.faces[fi];
    const double su = std::sqrt(uni(rng));
    const double v = uni(rng);
    const Vec3 p = (1.0 - su) * mesh.vertices[f[0]] + su * (1.0 - v) * mesh.vertices[f[1]] +
                   su * v * mesh.vertices[f[2]];
    out.points.push_back(p);
    out.normals.push_back(face_normal(mesh, fi));
    out.faces.push_back(static_cast<int>(fi));
  }
  return out;
}

namespace {

struct DirectedStats {
  double mean_distance = 0.0;
  double normal_sq_sum = 0.0;
};

DirectedStats directed(const SurfaceSamples& samples, const TriangleMesh& target,
                       const TriangleBvh& bvh) {
  DirectedStats s;
  for (std::size_t i = 0; i < samples.points.size(); ++i) {
    const NearestHit hit = bvh.nearest(samples.points[i]);
    s.mean_distance += hit.distance;
    s.normal_sq_sum += (samples.normals[i] - face_normal(target, hit.face)).squaredNorm();
  }
  s.mean_distance /= static_cast<double>(samples.points.size());
  return s;
}

}  // namespace

SurfaceMetrics evaluate_surface(const TriangleMesh& pred, const TriangleMesh& gt,
                                int n_samples, std::uint64_t seed) {
  if (pred.empty() || gt.empty()) throw InvalidArgument("evaluate_surface: empty mesh");
  if (n_samples < 1000) {
    throw InvalidArgument(fmt::format("evaluate_surface: n_samples {} < 1000", n_samples));
  }
  const TriangleBvh pred_bvh(pred);
  const TriangleBvh gt_bvh(gt);
  const SurfaceSamples ps = sample_surface(pred, n_samples, mix_seed(seed, mesh_fingerprint(pred)));
  const SurfaceSamples gs = sample_surface(gt, n_samples, mix_seed(seed, mesh_fingerprint(gt)));

  const DirectedStats pg = directed(ps, gt, gt_bvh);
  const DirectedStats gp = directed(gs, pred, pred_bvh);

  SurfaceMetrics m;
  m.chamfer = 0.5 * (pg.mean_distance + gp.mean_distance);
  m.normal_rms = std::sqrt((pg.normal_sq_sum + gp.normal_sq_sum) / (2.0 * n_samples));
  double p2s = 0.0;
  for (const Vec3& v : pred.vertices) p2s += gt_bvh.nearest(v).distance;
  m.p2s = p2s / static_cast<double>(pred.vertices.size());
  return m;
}

double volumetric_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size()) throw InvalidArgument("volumetric_iou: mask sizes differ");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]);
    uni += (a[i] || b[i]);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace disent
