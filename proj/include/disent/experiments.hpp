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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "disent/dataset.hpp"
#include "disent/metrics.hpp"
#include "disent/model.hpp"
#include "disent/training.hpp"

namespace disent {

inline constexpr int kReportSchemaVersion = 1;

enum class Condition { kSelf = 0, kCrossPose = 1, kCrossShape = 2, kCrossGarment = 3 };
const char* condition_name(Condition c);  ///< "self", "cross-pose", ...

/// Medians over the instances of one table cell.
struct MetricCell {
  int count = 0;     ///< instances attempted
  int failures = 0;  ///< empty level sets, counted as +inf distance
  SurfaceMetrics median;
  std::vector<std::string> meshes;  ///< stored OBJ paths, when written
};

/// Mean RMS-per-dimension code distance over test pairs of one subset (or all).
struct LatentSeparation {
  int pairs = 0;
  double varying = 0.0;    ///< distance of the varying attribute's code
  double invariant = 0.0;  ///< mean distance of the two non-varying codes
  double ratio() const { return varying > 0.0 ? invariant / varying : 0.0; }
};

struct ModeReport {
  FieldKind mode = FieldKind::kOccupancy;
  bool present = false;
  std::array<MetricCell, 4> conditions;  ///< indexed by Condition
  MetricCell direct;                     ///< extract -> g, no encoder-decoder
  double self_iou_median = 0.0;
  double self_iou_mean = 0.0;
  std::array<LatentSeparation, 3> separation;  ///< per varying attribute
  LatentSeparation separation_all;
  double seconds = 0.0;
};

struct EvalOptions {
  int grid_res = 64;
  int pairs_per_subset = 0;  ///< test pairs per attribute subset, 0 = all
  int surface_samples = 4000;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir;  ///< empty: nothing written
  bool write_meshes = true;
};

struct AblationRow {
  std::array<int, 3> latent{};
  bool failed = false;
  std::string error;
  MetricCell cross_pose;
  double self_iou_median = 0.0;  ///< over members of the cross-pose test pairs
  double self_iou_mean = 0.0;
  std::string trajectory_hash;
  std::string checkpoint;
  double train_seconds = 0.0;
};

struct ExperimentReport {
  std::string dataset_hash;
  std::uint64_t seed = 0;
  EvalOptions options;
  std::vector<ModeReport> modes;  ///< occupancy then sdf
  std::vector<AblationRow> ablation;
  nlohmann::json extra;  ///< config hashes, runtimes

  const ModeReport* mode(FieldKind k) const;
  nlohmann::json to_json() const;
  /// Aligned text tables. Runtimes are left out so equal runs print equal text.
  std::string to_text() const;
  void write(const std::filesystem::path& dir) const;  ///< report.json + report.txt
};

/// Published full-scale medians (mm), kept as reference metadata only.
nlohmann::json reference_metadata();

/// Median of the values; +inf entries are kept, NaN is rejected.
double median(std::vector<double> values);

/// Self/cross/direct tables plus IoU and latent separation over the test
/// split. Either model may be null (its columns are then marked absent).
/// Throws InvalidArgument when the test split is empty.
ExperimentReport run_eval_suite(const Model<float>* occ, const Model<float>* sdf,
                                const Dataset& data, const EvalOptions& opts);

/// Fraction of lattice nodes classified alike, as |A and B| / |A or B|.
double field_iou(const ScalarFieldGrid& predicted, const Figure& truth);

/// Trains stage 2 once per latent triplet from the same pretrained model and
/// evaluates cross-pose reconstruction (and self IoU). Rows are sorted by
/// cross-pose chamfer; a diverging row is marked failed and the rest continue.
ExperimentReport run_ablation(const Dataset& data, const Model<float>& pretrained,
                              const TrainConfig& base, const std::vector<std::array<int, 3>>& latents,
                              const EvalOptions& opts);

std::vector<std::array<int, 3>> default_ablation_latents();

}  // namespace disent
