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


#include "disent/sampling.hpp"

#include <fmt/format.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "disent/error.hpp"
#include "disent/hash.hpp"
#include "disent/metrics.hpp"

namespace disent {

const char* role_name(SampleRole r) {
  switch (r) {
    case SampleRole::kOnSurface:
      return "on_surface";
    case SampleRole::kOffNear:
      return "off_near";
    case SampleRole::kOffUniform:
      return "off_uniform";
    case SampleRole::kOccInside:
      return "occ_inside";
    case SampleRole::kOccOutside:
      return "occ_outside";
  }
  return "?";
}

int SampleBatch::count(SampleRole r) const {
  int c = 0;
  for (SampleRole x : roles) c += x == r;
  return c;
}

namespace {

// Surface samples drawn lazily in blocks so the stream does not depend on how
// many rejections happen.
class SurfaceStream {
 public:
  SurfaceStream(const TriangleMesh& mesh, int block, std::uint64_t seed)
      : mesh_(mesh), block_(block), seed_(seed) {}

  Vec3 next() {
    if (pos_ == samples_.points.size()) {
      samples_ = sample_surface(mesh_, block_, mix_seed(seed_, blocks_++));
      pos_ = 0;
    }
    return samples_.points[pos_++];
  }

 private:
  const TriangleMesh& mesh_;
  int block_;
  std::uint64_t seed_;
  std::uint64_t blocks_ = 0;
  SurfaceSamples samples_;
  std::size_t pos_ = 0;
};

void push(SampleBatch& b, const Vec3& p, SampleRole role, double sdf, const Vec3& normal) {
  b.points.push_back(p);
  b.roles.push_back(role);
  b.occupancy.push_back(sdf < 0.0 ? 1.0f : 0.0f);
  b.sdf.push_back(static_cast<float>(sdf));
  b.normals.push_back(normal);
}

void check_example(const RenderedExample& ex) {
  if (!ex.field) throw InvalidArgument("example '" + ex.id + "' has no analytic field");
  if (ex.mesh.empty()) throw InvalidArgument("example '" + ex.id + "' has no mesh");
}

}  // namespace

Vec3 project_to_surface(const Figure& figure, Vec3 p, double tol) {
  for (int it = 0; it < 32; ++it) {
    const SdfSample s = figure.eval(p);
    if (std::abs(s.value) < tol) return p;
    p -= s.value * s.gradient;
  }
  throw ConfigError(fmt::format("surface projection did not converge at ({}, {}, {})", p.x(),
                                p.y(), p.z()));
}

SampleBatch sample_occupancy(const RenderedExample& ex, int n, double sigma,
                             std::uint64_t seed) {
  check_example(ex);
  if (n <= 0 || n % 2 != 0) throw InvalidArgument(fmt::format("occupancy n {} must be even", n));
  if (!(sigma > 0.0)) throw InvalidArgument("sigma must be positive");
  SampleBatch b;
  b.example_id = ex.id;
  b.kind = FieldKind::kOccupancy;
  SurfaceStream surface(ex.mesh, n, mix_seed(seed, 1));
  std::mt19937_64 rng(mix_seed(seed, 2));
  std::normal_distribution<double> noise(0.0, sigma);
  const int half = n / 2;
  int inside = 0, outside = 0;
  const long max_draws = 100L * n;
  for (long draw = 0; inside < half || outside < half; ++draw) {
    if (draw >= max_draws) {
      throw ConfigError(fmt::format(
          "occupancy balance not reached for '{}' after {} draws ({} inside, {} outside)", ex.id,
          max_draws, inside, outside));
    }
    const Vec3 p = surface.next() + Vec3(noise(rng), noise(rng), noise(rng));
    const double s = ex.field->sdf(p);
    if (s < 0.0) {
      if (inside == half) continue;
      ++inside;
      push(b, p, SampleRole::kOccInside, s, Vec3::Zero());
    } else {
      if (outside == half) continue;
      ++outside;
      push(b, p, SampleRole::kOccOutside, s, Vec3::Zero());
    }
  }
  return b;
}

SampleBatch sample_sdf(const RenderedExample& ex, int n, double sigma, std::uint64_t seed) {
  check_example(ex);
  if (n <= 0 || n % 8 != 0) {
    throw InvalidArgument(fmt::format("sdf sample count {} must be divisible by 8", n));
  }
  if (!(sigma > 0.0)) throw InvalidArgument("sigma must be positive");
  SampleBatch b;
  b.example_id = ex.id;
  b.kind = FieldKind::kSdf;
  const int n_on = n / 2;
  const int n_near = 3 * n / 8;
  const int n_uniform = n / 8;

  const SurfaceSamples on = sample_surface(ex.mesh, n_on, mix_seed(seed, 1));
  for (const Vec3& p0 : on.points) {
    const Vec3 p = project_to_surface(*ex.field, p0);
    const SdfSample s = ex.field->eval(p);
    push(b, p, SampleRole::kOnSurface, s.value, s.gradient.normalized());
  }
  const SurfaceSamples near = sample_surface(ex.mesh, n_near, mix_seed(seed, 2));
  std::mt19937_64 rng(mix_seed(seed, 3));
  std::normal_distribution<double> noise(0.0, sigma);
  for (const Vec3& p0 : near.points) {
    const Vec3 p = p0 + Vec3(noise(rng), noise(rng), noise(rng));
    push(b, p, SampleRole::kOffNear, ex.field->sdf(p), Vec3::Zero());
  }
  std::uniform_real_distribution<double> cube(-1.0, 1.0);
  for (int i = 0; i < n_uniform; ++i) {
    const Vec3 p(cube(rng), cube(rng), cube(rng));
    push(b, p, SampleRole::kOffUniform, ex.field->sdf(p), Vec3::Zero());
  }
  return b;
}

namespace {
constexpr char kBatchMagic[4] = {'S', 'M', 'B', '1'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace

void write_batch(const SampleBatch& batch, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kBatchMagic, 4);
  put(out, static_cast<std::uint32_t>(batch.kind));
  put(out, static_cast<std::uint32_t>(batch.size()));
  put(out, static_cast<std::uint32_t>(batch.example_id.size()));
  out.write(batch.example_id.data(), static_cast<std::streamsize>(batch.example_id.size()));
  for (int i = 0; i < batch.size(); ++i) {
    for (int k = 0; k < 3; ++k) put(out, batch.points[i][k]);
    put(out, static_cast<std::uint8_t>(batch.roles[i]));
    put(out, batch.occupancy[i]);
    put(out, batch.sdf[i]);
    for (int k = 0; k < 3; ++k) put(out, batch.normals[i][k]);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

SampleBatch read_batch(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kBatchMagic, 4) != 0) {
    throw IoError(path.string() + ": not a sample batch");
  }
  SampleBatch b;
  const auto kind = get<std::uint32_t>(in);
  if (kind > 1) throw IoError(path.string() + ": bad field kind");
  b.kind = static_cast<FieldKind>(kind);
  const auto n = get<std::uint32_t>(in);
  const auto id_len = get<std::uint32_t>(in);
  if (!in || id_len > 4096) throw IoError(path.string() + ": corrupt header");
  b.example_id.resize(id_len);
  in.read(b.example_id.data(), id_len);
  for (std::uint32_t i = 0; i < n; ++i) {
    Vec3 p, nrm;
    for (int k = 0; k < 3; ++k) p[k] = get<double>(in);
    const auto role = get<std::uint8_t>(in);
    const auto occ = get<float>(in);
    const auto sdf = get<float>(in);
    for (int k = 0; k < 3; ++k) nrm[k] = get<double>(in);
    if (role > 4) throw IoError(path.string() + ": bad sample role");
    b.points.push_back(p);
    b.roles.push_back(static_cast<SampleRole>(role));
    b.occupancy.push_back(occ);
    b.sdf.push_back(sdf);
    b.normals.push_back(nrm);
  }
  if (!in) throw IoError(path.string() + ": truncated");
  return b;
}

}  // namespace disent
