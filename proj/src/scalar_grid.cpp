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

#include "disent/scalar_grid.hpp"

#include <fmt/format.h>

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include "disent/error.hpp"

namespace disent {

namespace {
constexpr char kGridMagic[4] = {'S', 'F', 'G', '1'};
}

Vec3 ScalarFieldGrid::node(int ix, int iy, int iz) const {
  const double n = resolution - 1;
  return lo + (hi - lo).cwiseProduct(Vec3(ix / n, iy / n, iz / n));
}

void ScalarFieldGrid::validate() const {
  if (resolution < 8) {
    throw InvalidArgument(fmt::format("grid resolution {} < 8", resolution));
  }
  const std::size_t n = static_cast<std::size_t>(resolution);
  if (values.size() != n * n * n) {
    throw InvalidArgument(fmt::format("grid holds {} values, expected {}",
                                      values.size(), n * n * n));
  }
  if (!((hi - lo).minCoeff() > 0.0)) throw InvalidArgument("grid bounds are empty");
  for (float v : values) {
    if (!std::isfinite(v)) throw InvalidArgument("grid holds a non-finite value");
    if (kind == FieldKind::kOccupancy && (v < 0.0f || v > 1.0f)) {
      throw InvalidArgument("occupancy grid value outside [0, 1]");
    }
  }
}

ScalarFieldGrid sample_grid(const std::function<double(const Vec3&)>& field,
                            int resolution, FieldKind kind, double half_extent) {
  ScalarFieldGrid grid;
  grid.resolution = resolution;
  grid.lo = Vec3::Constant(-half_extent);
  grid.hi = Vec3::Constant(half_extent);
  grid.kind = kind;
  grid.values.resize(static_cast<std::size_t>(resolution) * resolution * resolution);
  for (int iz = 0; iz < resolution; ++iz) {
    for (int iy = 0; iy < resolution; ++iy) {
      for (int ix = 0; ix < resolution; ++ix) {
        grid.values[grid.index(ix, iy, iz)] =
            static_cast<float>(field(grid.node(ix, iy, iz)));
      }
    }
  }
  return grid;
}

double default_iso(FieldKind kind) {
  return kind == FieldKind::kOccupancy ? 0.5 : 0.0;
}

void write_grid(const ScalarFieldGrid& grid, const std::filesystem::path& path) {
  grid.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const auto res = static_cast<std::uint32_t>(grid.resolution);
  const auto kind = static_cast<std::uint32_t>(grid.kind);
  const std::array<double, 6> bounds = {grid.lo.x(), grid.lo.y(), grid.lo.z(),
                                        grid.hi.x(), grid.hi.y(), grid.hi.z()};
  out.write(kGridMagic, 4);
  out.write(reinterpret_cast<const char*>(&res), sizeof(res));
  out.write(reinterpret_cast<const char*>(bounds.data()), sizeof(bounds));
  out.write(reinterpret_cast<const char*>(&kind), sizeof(kind));
  out.write(reinterpret_cast<const char*>(grid.values.data()),
            static_cast<std::streamsize>(grid.values.size() * sizeof(float)));
  if (!out) throw IoError("failed writing " + path.string());
}

ScalarFieldGrid read_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  std::uint32_t res = 0;
  std::uint32_t kind = 0;
  std::array<double, 6> bounds{};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kGridMagic, 4) != 0) {
    throw IoError(path.string() + " is not an SFG1 grid");
  }
  in.read(reinterpret_cast<char*>(&res), sizeof(res));
  in.read(reinterpret_cast<char*>(bounds.data()), sizeof(bounds));
  in.read(reinterpret_cast<char*>(&kind), sizeof(kind));
  if (!in || kind > 1 || res < 8 || res > 4096) {
    throw IoError(path.string() + ": malformed SFG1 header");
  }
  ScalarFieldGrid grid;
  grid.resolution = static_cast<int>(res);
  grid.lo = Vec3(bounds[0], bounds[1], bounds[2]);
  grid.hi = Vec3(bounds[3], bounds[4], bounds[5]);
  grid.kind = static_cast<FieldKind>(kind);
  grid.values.resize(static_cast<std::size_t>(res) * res * res);
  in.read(reinterpret_cast<char*>(grid.values.data()),
          static_cast<std::streamsize>(grid.values.size() * sizeof(float)));
  if (!in) throw IoError(path.string() + ": truncated SFG1 payload");
  grid.validate();
  return grid;
}

}  // namespace disent
