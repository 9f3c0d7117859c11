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
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "disent/figure.hpp"
#include "disent/image.hpp"
#include "disent/mesh.hpp"

namespace disent {

/// Light direction used for Lambertian shading (normalized at use).
inline const Vec3 kLightDirection(0.3, 0.5, 0.8);

/// Orthographic front view (camera on +z looking down -z) by sphere tracing.
/// Pixel (r, c) samples x = -1 + (c + 0.5) * 2 / W, y = 1 - (r + 0.5) * 2 / H.
Image render_front(const Figure& figure, int resolution);

struct RenderedExample {
  std::string id;
  FigureParams params;
  Image image;
  TriangleMesh mesh;                    ///< marching-cubes ground truth
  std::shared_ptr<const Figure> field;  ///< analytic ground truth
  std::uint64_t seed = 0;
};

/// Stable identifier derived from the parameter values and resolutions.
std::string example_id(const FigureParams& params, int image_res, int mesh_res);

/// Throws InvalidArgument for image_res < 32, mesh_res < 48 or a silhouette
/// covering less than 1% of the image.
RenderedExample build_example(const FigureParams& params, int image_res, int mesh_res,
                              std::uint64_t seed);

enum class Split { kTrain = 0, kVal = 1, kTest = 2 };
const char* split_name(Split s);

/// Two figures that differ in exactly one attribute block.
struct PairSpec {
  std::string id;         ///< unique within a manifest
  std::string source_id;  ///< shared by padded replicates of one pair
  Attribute varying = Attribute::kPose;
  Split split = Split::kTrain;
  FigureParams a;
  FigureParams b;
};

/// Minimum change of the varying block; throws InvalidArgument when violated
/// or when a non-varying block differs.
void check_pair(const FigureParams& a, const FigureParams& b, Attribute varying);

struct PairConfig {
  int n_per_subset = 300;
  std::uint64_t seed = 1;
  int image_res = 64;
  int mesh_res = 48;
  /// Distinct pairs drawn per subset before padding; 0 means n_per_subset.
  std::map<Attribute, int> pool_sizes;
};

struct DatasetManifest {
  PairConfig config;
  std::vector<PairSpec> pairs;

  std::vector<const PairSpec*> select(Split split) const;
  std::vector<const PairSpec*> select(Split split, Attribute varying) const;
  const PairSpec& pair(const std::string& id) const;  ///< throws InvalidArgument
  std::uint64_t hash() const;
};

void to_json(nlohmann::json& j, const FigureParams& p);
void from_json(const nlohmann::json& j, FigureParams& p);
nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Three subsets (pose, shape, garment), each of exactly n_per_subset pairs,
/// split 6:2:2 by hashed pair id. Each split is padded independently by
/// resampling with replacement when the distinct pool is smaller.
DatasetManifest build_pairs(const PairConfig& config);

/// A manifest with every referenced figure rendered and meshed.
class Dataset {
 public:
  explicit Dataset(DatasetManifest manifest);

  const DatasetManifest& manifest() const { return manifest_; }
  const RenderedExample& example(const std::string& id) const;
  const RenderedExample& a(const PairSpec& p) const;
  const RenderedExample& b(const PairSpec& p) const;
  const std::vector<std::string>& example_ids() const { return order_; }
  /// Distinct examples referenced by pairs in `split`, in first-use order.
  std::vector<const RenderedExample*> examples(Split split) const;

  /// images/<id>.png, images/<id>.f32, meshes/<id>.obj and manifest.json.
  void write(const std::filesystem::path& dir, bool with_meshes) const;

 private:
  DatasetManifest manifest_;
  std::map<std::string, std::unique_ptr<RenderedExample>> examples_;
  std::vector<std::string> order_;
};

}  // namespace disent
