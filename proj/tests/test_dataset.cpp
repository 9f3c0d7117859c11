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


#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "disent/dataset.hpp"
#include "disent/error.hpp"
#include "disent/figure.hpp"
#include "disent/mesh_oracle.hpp"

using namespace disent;

namespace {

FigureParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ang(-1.04, 1.04), sc(0.8, 1.2), len(0.3, 0.7),
      loose(0.02, 0.1), coin(0.0, 1.0);
  FigureParams p;
  p.pose = {ang(rng), ang(rng), ang(rng), ang(rng)};
  p.shape = {sc(rng), sc(rng), sc(rng)};
  p.garment = {len(rng), loose(rng), coin(rng) < 0.5};
  return p;
}

}  // namespace

TEST_CASE("figure_sdf far field and interior") {
  const FigureParams p;
  const double far = figure_sdf(p, Vec3(0, 0, 2));
  CHECK(far > 1.0);
  CHECK(far < 2.0);
  CHECK(figure_sdf(p, Vec3(0, 0.1, 0)) < 0.0);
}

TEST_CASE("figure_sdf is Eikonal away from the medial axis") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int checked = 0;
  const double h = 1e-6;
  while (checked < 1000) {
    const FigureParams params = random_params(rng);
    const Figure fig(params);
    for (int k = 0; k < 50 && checked < 1000; ++k) {
      const Vec3 x(u(rng), u(rng), u(rng));
      const double s = fig.sdf(x);
      if (std::abs(s) <= 0.05 || std::abs(s) >= 0.3) continue;
      Vec3 g;
      for (int i = 0; i < 3; ++i) {
        Vec3 e = Vec3::Zero();
        e[i] = h;
        g[i] = (fig.sdf(x + e) - fig.sdf(x - e)) / (2 * h);
      }
      // Inside, min-of-capsules is a bound; only the outside is an exact SDF
      // everywhere, and inside points near two parts sit on a crease.
      if (s < 0.0) {
        const SdfSample ev = fig.eval(x);
        CHECK(ev.gradient.norm() == doctest::Approx(1.0).epsilon(1e-9));
        continue;
      }
      CHECK(g.norm() == doctest::Approx(1.0).epsilon(1e-3));
      ++checked;
    }
  }
}

TEST_CASE("build_example basics") {
  const FigureParams p;
  const RenderedExample a = build_example(p, 64, 48, 3);
  const RenderedExample b = build_example(p, 64, 48, 3);
  CHECK(a.image.pixels == b.image.pixels);
  CHECK(a.id == b.id);
  const double fg = a.image.foreground_fraction();
  CHECK(fg > 0.05);
  CHECK(fg < 0.60);
  for (float v : a.image.pixels) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  CHECK(is_watertight(a.mesh));
  CHECK(signed_volume(a.mesh) > 0.0);
  CHECK_THROWS_AS(build_example(p, 16, 48, 3), InvalidArgument);
  CHECK_THROWS_AS(build_example(p, 64, 32, 3), InvalidArgument);
}

TEST_CASE("figure_sdf sign agrees with the extracted mesh off the voxel band") {
  std::mt19937_64 rng(11);
  const FigureParams params = random_params(rng);
  const RenderedExample ex = build_example(params, 32, 64, 1);
  const MeshOracle oracle(ex.mesh);
  const double voxel = 2.0 / 63.0;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int tested = 0, agree = 0;
  for (int i = 0; i < 20000; ++i) {
    const Vec3 x(u(rng), u(rng), u(rng));
    const double s = ex.field->sdf(x);
    if (std::abs(s) <= 2 * voxel) continue;
    ++tested;
    agree += occupancy_at(oracle, x) == (s < 0.0 ? 1 : 0);
  }
  CHECK(tested > 10000);
  CHECK(agree == tested);
}

TEST_CASE("build_pairs counts, invariants and splits") {
  PairConfig cfg;
  cfg.n_per_subset = 100;
  cfg.seed = 5;
  const DatasetManifest m = build_pairs(cfg);
  REQUIRE(m.pairs.size() == 300);

  std::set<std::string> ids;
  std::map<std::string, Split> split_of_source;
  for (const auto& p : m.pairs) {
    CHECK(ids.insert(p.id).second);
    CHECK_NOTHROW(check_pair(p.a, p.b, p.varying));
    CHECK((p.varying == Attribute::kPose || p.a.pose == p.b.pose));
    CHECK((p.varying == Attribute::kShape || p.a.shape == p.b.shape));
    CHECK((p.varying == Attribute::kGarment || p.a.garment == p.b.garment));
    auto [it, fresh] = split_of_source.emplace(p.source_id, p.split);
    if (!fresh) CHECK(it->second == p.split);
  }
  for (Attribute d : {Attribute::kPose, Attribute::kShape, Attribute::kGarment}) {
    const auto tr = m.select(Split::kTrain, d).size();
    const auto va = m.select(Split::kVal, d).size();
    const auto te = m.select(Split::kTest, d).size();
    CHECK(tr + va + te == 100);
    CHECK(std::abs(static_cast<double>(tr) - 60.0) <= 1.0);
    CHECK(std::abs(static_cast<double>(va) - 20.0) <= 1.0);
    CHECK(std::abs(static_cast<double>(te) - 20.0) <= 1.0);
  }

  const DatasetManifest again = build_pairs(cfg);
  CHECK(manifest_to_json(again) == manifest_to_json(m));
  CHECK(again.hash() == m.hash());
  cfg.seed = 6;
  CHECK(build_pairs(cfg).hash() != m.hash());
  cfg.n_per_subset = 9;
  CHECK_THROWS_AS(build_pairs(cfg), InvalidArgument);
}

TEST_CASE("build_pairs pads small pools by resampling") {
  // 1369 / 51 / 761 distinct pairs scaled down by ten.
  PairConfig cfg;
  cfg.n_per_subset = 137;
  cfg.pool_sizes = {{Attribute::kPose, 137}, {Attribute::kShape, 5}, {Attribute::kGarment, 76}};
  const DatasetManifest m = build_pairs(cfg);
  std::map<Attribute, std::set<std::string>> sources;
  std::map<Attribute, int> counts;
  for (const auto& p : m.pairs) {
    sources[p.varying].insert(p.source_id);
    ++counts[p.varying];
  }
  for (Attribute d : {Attribute::kPose, Attribute::kShape, Attribute::kGarment}) {
    CHECK(counts[d] == 137);
  }
  CHECK(sources[Attribute::kPose].size() == 137);
  CHECK(sources[Attribute::kShape].size() == 5);
  CHECK(sources[Attribute::kGarment].size() == 76);
}

TEST_CASE("manifest json round trip") {
  PairConfig cfg;
  cfg.n_per_subset = 10;
  const DatasetManifest m = build_pairs(cfg);
  const auto path = std::filesystem::temp_directory_path() / "disent_manifest_test.json";
  write_manifest(m, path);
  const DatasetManifest r = read_manifest(path);
  CHECK(r.hash() == m.hash());
  REQUIRE(r.pairs.size() == m.pairs.size());
  for (std::size_t i = 0; i < m.pairs.size(); ++i) {
    CHECK(r.pairs[i].a == m.pairs[i].a);
    CHECK(r.pairs[i].b == m.pairs[i].b);
  }
  std::filesystem::remove(path);
}
