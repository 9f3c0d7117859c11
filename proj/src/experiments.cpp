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


#include "disent/experiments.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "disent/error.hpp"
#include "disent/hash.hpp"
#include "disent/manipulation.hpp"
#include "disent/marching_cubes.hpp"
#include "disent/mesh_io.hpp"

namespace disent {

using nlohmann::json;

const char* condition_name(Condition c) {
  switch (c) {
    case Condition::kSelf:
      return "self";
    case Condition::kCrossPose:
      return "cross-pose";
    case Condition::kCrossShape:
      return "cross-shape";
    case Condition::kCrossGarment:
      return "cross-garment";
  }
  return "?";
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  for (double v : values) {
    if (std::isnan(v)) throw InvalidArgument("median of NaN");
  }
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  if (values.size() % 2) return values[m];
  if (std::isinf(values[m - 1]) || std::isinf(values[m])) return values[m];
  return 0.5 * (values[m - 1] + values[m]);
}

double field_iou(const ScalarFieldGrid& predicted, const Figure& truth) {
  const int n = predicted.resolution;
  const double iso = default_iso(predicted.kind);
  const bool occ = predicted.kind == FieldKind::kOccupancy;
  std::vector<std::uint8_t> a(predicted.values.size()), b(predicted.values.size());
  for (int iz = 0; iz < n; ++iz) {
    for (int iy = 0; iy < n; ++iy) {
      for (int ix = 0; ix < n; ++ix) {
        const std::size_t i = predicted.index(ix, iy, iz);
        const float v = predicted.values[i];
        a[i] = occ ? v > iso : v < iso;
        b[i] = truth.sdf(predicted.node(ix, iy, iz)) < 0.0;
      }
    }
  }
  return volumetric_iou(a, b);
}

namespace {

using Clock = std::chrono::steady_clock;

const char* mode_name(FieldKind k) { return k == FieldKind::kSdf ? "sdf" : "occupancy"; }

/// Accumulates per-instance metrics of one cell.
struct CellBuilder {
  std::vector<double> chamfer, p2s, normal;
  MetricCell cell;

  void add_failure() {
    const double inf = std::numeric_limits<double>::infinity();
    chamfer.push_back(inf), p2s.push_back(inf), normal.push_back(inf);
    ++cell.count, ++cell.failures;
  }
  void add(const SurfaceMetrics& m) {
    chamfer.push_back(m.chamfer), p2s.push_back(m.p2s), normal.push_back(m.normal_rms);
    ++cell.count;
  }
  MetricCell finish() {
    if (cell.count > 0) {
      cell.median.chamfer = median(chamfer);
      cell.median.p2s = median(p2s);
      cell.median.normal_rms = median(normal);
    }
    return cell;
  }
};

class Evaluator {
 public:
  Evaluator(const Model<float>& model, const Dataset& data, const EvalOptions& opts,
            bool with_direct = true)
      : model_(model), data_(data), opts_(opts), with_direct_(with_direct) {
    if (!opts.out_dir.empty()) dir_ = opts.out_dir / mode_name(model.config().mode);
  }

  const Codes& codes(const RenderedExample& ex) {
    auto it = codes_.find(ex.id);
    if (it == codes_.end()) it = codes_.emplace(ex.id, encode_image(model_, ex.image)).first;
    return it->second;
  }

  /// Field + mesh; the mesh is scored against `gt`. Returns the field for IoU.
  ScalarFieldGrid score(const Tensor<float>& F, const RenderedExample& gt, CellBuilder& cell,
                        const std::string& group, const std::string& name) {
    ScalarFieldGrid field = evaluate_lattice(model_, F, opts_.grid_res);
    try {
      const TriangleMesh mesh = marching_cubes(field, default_iso(field.kind));
      cell.add(evaluate_surface(mesh, gt.mesh, opts_.surface_samples, opts_.seed));
      if (!dir_.empty() && opts_.write_meshes) {
        const auto path = dir_ / group / (name + ".obj");
        std::filesystem::create_directories(path.parent_path());
        write_obj(mesh, path);
        cell.cell.meshes.push_back(path.string());
      }
    } catch (const EmptySurfaceError&) {
      cell.add_failure();
    }
    return field;
  }

  ModeReport run(const std::array<std::vector<const PairSpec*>, 3>& pairs) {
    const auto start = Clock::now();
    ModeReport r;
    r.mode = model_.config().mode;
    r.present = true;

    // Self and direct reconstruction of every distinct member.
    std::vector<const RenderedExample*> members;
    std::map<std::string, bool> seen;
    for (const auto& subset : pairs) {
      for (const PairSpec* p : subset) {
        for (const RenderedExample* ex : {&data_.a(*p), &data_.b(*p)}) {
          if (seen.emplace(ex->id, true).second) members.push_back(ex);
        }
      }
    }
    CellBuilder self, direct;
    std::vector<double> ious;
    for (const RenderedExample* ex : members) {
      const ScalarFieldGrid field =
          score(model_.decode(codes(*ex)), *ex, self, "self", ex->id);
      ious.push_back(field_iou(field, *ex->field));
      if (!dir_.empty() && opts_.write_meshes) {
        write_grid(field, dir_ / "self" / (ex->id + ".sfg"));
      }
      if (with_direct_) score(image_features(model_, ex->image), *ex, direct, "direct", ex->id);
    }
    r.conditions[0] = self.finish();
    r.direct = direct.finish();
    r.self_iou_median = median(ious);
    double sum = 0.0;
    for (double v : ious) sum += v;
    r.self_iou_mean = ious.empty() ? 0.0 : sum / static_cast<double>(ious.size());

    // Cross reconstruction: a with b's code equals b's figure, and vice versa.
    for (int d = 0; d < 3; ++d) {
      CellBuilder cross;
      LatentSeparation& sep = r.separation[d];
      const std::string group = condition_name(static_cast<Condition>(d + 1));
      for (const PairSpec* p : pairs[d]) {
        const RenderedExample& a = data_.a(*p);
        const RenderedExample& b = data_.b(*p);
        const Codes& ca = codes(a);
        const Codes& cb = codes(b);
        auto [ab, ba] = swap_codes(ca, cb, p->varying);
        score(model_.decode(ab), b, cross, group, p->id + "_a_from_b");
        score(model_.decode(ba), a, cross, group, p->id + "_b_from_a");

        double inv = 0.0;
        for (int k = 0; k < 3; ++k) {
          const double dist = (ca.code[k] - cb.code[k]).norm() /
                              std::sqrt(static_cast<double>(ca.code[k].rows()));
          if (k == d) {
            sep.varying += dist;
          } else {
            inv += 0.5 * dist;
          }
        }
        sep.invariant += inv;
        ++sep.pairs;
      }
      r.conditions[d + 1] = cross.finish();
      r.separation_all.pairs += sep.pairs;
      r.separation_all.varying += sep.varying;
      r.separation_all.invariant += sep.invariant;
      if (sep.pairs) {
        sep.varying /= sep.pairs;
        sep.invariant /= sep.pairs;
      }
    }
    if (r.separation_all.pairs) {
      r.separation_all.varying /= r.separation_all.pairs;
      r.separation_all.invariant /= r.separation_all.pairs;
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    return r;
  }

 private:
  const Model<float>& model_;
  const Dataset& data_;
  const EvalOptions& opts_;
  bool with_direct_ = true;
  std::filesystem::path dir_;
  std::map<std::string, Codes> codes_;
};

std::array<std::vector<const PairSpec*>, 3> test_pairs(const Dataset& data, int per_subset) {
  std::array<std::vector<const PairSpec*>, 3> out;
  std::size_t total = 0;
  for (int d = 0; d < 3; ++d) {
    out[d] = data.manifest().select(Split::kTest, static_cast<Attribute>(d));
    if (per_subset > 0 && static_cast<int>(out[d].size()) > per_subset) out[d].resize(per_subset);
    total += out[d].size();
  }
  if (total == 0) throw InvalidArgument("test split is empty");
  return out;
}

json metrics_json(const SurfaceMetrics& m) {
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  return {{"chamfer", num(m.chamfer)}, {"p2s", num(m.p2s)}, {"normal_rms", num(m.normal_rms)}};
}

json cell_json(const MetricCell& c) {
  return {{"count", c.count},
          {"failures", c.failures},
          {"median", metrics_json(c.median)},
          {"meshes", c.meshes}};
}

json separation_json(const LatentSeparation& s) {
  return {{"pairs", s.pairs}, {"varying", s.varying}, {"invariant", s.invariant}, {"ratio", s.ratio()}};
}

std::string num(double v) { return std::isfinite(v) ? fmt::format("{:.5f}", v) : "inf"; }

}  // namespace

json reference_metadata() {
  // Published full-scale medians in millimetres; [sdf, occupancy].
  return {{"note", "full-scale published values in mm, not comparable to toy units; not targets"},
          {"swap",
           {{"self", {{"chamfer", {1.43, 3.65}}, {"p2s", {11.21, 22.24}}, {"normal", {11.16, 8.93}}}},
            {"cross-pose", {{"chamfer", {1.26, 4.73}}, {"p2s", {12.12, 21.63}}, {"normal", {10.63, 8.72}}}},
            {"cross-shape", {{"chamfer", {2.46, 3.09}}, {"p2s", {12.25, 19.88}}, {"normal", {11.46, 9.28}}}},
            {"cross-garment", {{"chamfer", {1.26, 3.36}}, {"p2s", {9.35, 22.61}}, {"normal", {11.53, 8.86}}}}}},
          {"latent_ablation_cross_pose_sdf",
           json::array({{{"latent", {512, 512, 512}}, {"chamfer", 4.31}, {"p2s", 15.75}, {"normal", 10.65}},
                        {{"latent", {256, 256, 256}}, {"chamfer", 2.93}, {"p2s", 15.19}, {"normal", 10.30}},
                        {{"latent", {128, 128, 128}}, {"chamfer", 1.26}, {"p2s", 12.12}, {"normal", 10.63}},
                        {{"latent", {64, 64, 64}}, {"chamfer", 5.33}, {"p2s", 17.17}, {"normal", 10.61}},
                        {{"latent", {128, 16, 128}}, {"chamfer", 24.05}, {"p2s", 38.28}, {"normal", 10.55}}})},
          {"direct",
           {{"occupancy", {{"chamfer", 1.03}, {"p2s", 9.75}, {"normal", 6.95}}},
            {"sdf", {{"chamfer", 0.22}, {"p2s", 6.34}, {"normal", 6.69}}}}}};
}

const ModeReport* ExperimentReport::mode(FieldKind k) const {
  for (const ModeReport& m : modes) {
    if (m.mode == k && m.present) return &m;
  }
  return nullptr;
}

json ExperimentReport::to_json() const {
  json j = {{"schema_version", kReportSchemaVersion},
            {"dataset_hash", dataset_hash},
            {"seed", seed},
            {"units", "normalized scene units (figure height about 1.8)"},
            {"options",
             {{"grid_res", options.grid_res},
              {"pairs_per_subset", options.pairs_per_subset},
              {"surface_samples", options.surface_samples}}},
            {"reference", reference_metadata()},
            {"extra", extra}};
  json modes_j = json::object();
  for (const ModeReport& m : modes) {
    if (!m.present) {
      modes_j[mode_name(m.mode)] = {{"present", false}};
      continue;
    }
    json cond = json::object();
    for (int c = 0; c < 4; ++c) cond[condition_name(static_cast<Condition>(c))] = cell_json(m.conditions[c]);
    json sep = json::object();
    for (int d = 0; d < 3; ++d) sep[attribute_name(static_cast<Attribute>(d))] = separation_json(m.separation[d]);
    sep["all"] = separation_json(m.separation_all);
    modes_j[mode_name(m.mode)] = {{"present", true},
                                  {"conditions", cond},
                                  {"direct", cell_json(m.direct)},
                                  {"self_iou", {{"median", m.self_iou_median}, {"mean", m.self_iou_mean}}},
                                  {"latent_separation", sep},
                                  {"seconds", m.seconds}};
  }
  j["modes"] = modes_j;
  if (!ablation.empty()) {
    json rows = json::array();
    for (const AblationRow& r : ablation) {
      rows.push_back({{"latent", r.latent},
                      {"failed", r.failed},
                      {"error", r.error},
                      {"cross_pose", cell_json(r.cross_pose)},
                      {"self_iou", {{"median", r.self_iou_median}, {"mean", r.self_iou_mean}}},
                      {"trajectory_hash", r.trajectory_hash},
                      {"checkpoint", r.checkpoint},
                      {"train_seconds", r.train_seconds}});
    }
    j["ablation"] = rows;
  }
  return j;
}

std::string ExperimentReport::to_text() const {
  std::string out = fmt::format("dataset {}  seed {}  grid {}\n", dataset_hash, seed, options.grid_res);
  for (const ModeReport& m : modes) {
    out += fmt::format("\n[{}]\n", mode_name(m.mode));
    if (!m.present) {
      out += "  absent\n";
      continue;
    }
    out += fmt::format("  {:<14} {:>5} {:>5} {:>10} {:>10} {:>10}\n", "condition", "n", "fail",
                       "chamfer", "p2s", "normal");
    auto row = [&](const char* name, const MetricCell& c) {
      out += fmt::format("  {:<14} {:>5} {:>5} {:>10} {:>10} {:>10}\n", name, c.count, c.failures,
                         num(c.median.chamfer), num(c.median.p2s), num(c.median.normal_rms));
    };
    for (int c = 0; c < 4; ++c) row(condition_name(static_cast<Condition>(c)), m.conditions[c]);
    row("direct", m.direct);
    out += fmt::format("  self IoU median {:.4f} mean {:.4f}\n", m.self_iou_median, m.self_iou_mean);
    out += fmt::format("  {:<14} {:>5} {:>10} {:>10} {:>8}\n", "latent dist", "pairs", "varying",
                       "invariant", "ratio");
    auto sep_row = [&](const char* name, const LatentSeparation& s) {
      out += fmt::format("  {:<14} {:>5} {:>10.5f} {:>10.5f} {:>8.4f}\n", name, s.pairs, s.varying,
                         s.invariant, s.ratio());
    };
    for (int d = 0; d < 3; ++d) sep_row(attribute_name(static_cast<Attribute>(d)), m.separation[d]);
    sep_row("all", m.separation_all);
  }
  if (!ablation.empty()) {
    out += "\n[latent ablation, cross-pose]\n";
    out += fmt::format("  {:<16} {:>6} {:>5} {:>10} {:>10} {:>10} {:>8} {:>8}\n", "latent", "status",
                       "n", "chamfer", "p2s", "normal", "IoU med", "IoU mean");
    for (const AblationRow& r : ablation) {
      out += fmt::format("  {:<16} {:>6} {:>5} {:>10} {:>10} {:>10} {:>8.4f} {:>8.4f}\n",
                         fmt::format("{}/{}/{}", r.latent[0], r.latent[1], r.latent[2]),
                         r.failed ? "failed" : "ok", r.cross_pose.count,
                         num(r.cross_pose.median.chamfer), num(r.cross_pose.median.p2s),
                         num(r.cross_pose.median.normal_rms), r.self_iou_median, r.self_iou_mean);
    }
  }
  return out;
}

void ExperimentReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "report.json") << to_json().dump(2) << "\n";
  std::ofstream(dir / "report.txt") << to_text();
}

ExperimentReport run_eval_suite(const Model<float>* occ, const Model<float>* sdf,
                                const Dataset& data, const EvalOptions& opts) {
  if (opts.grid_res < 32) throw InvalidArgument("grid_res must be >= 32");
  const auto pairs = test_pairs(data, opts.pairs_per_subset);
  ExperimentReport rep;
  rep.dataset_hash = hex64(data.manifest().hash());
  rep.seed = opts.seed;
  rep.options = opts;
  const std::pair<FieldKind, const Model<float>*> entries[] = {{FieldKind::kOccupancy, occ},
                                                               {FieldKind::kSdf, sdf}};
  for (const auto& [kind, model] : entries) {
    if (!model) {
      ModeReport absent;
      absent.mode = kind;
      rep.modes.push_back(absent);
      continue;
    }
    if (model->config().mode != kind) {
      throw ConfigError(fmt::format("{} checkpoint was trained in another mode", mode_name(kind)));
    }
    Evaluator ev(*model, data, opts);
    rep.modes.push_back(ev.run(pairs));
  }
  if (!opts.out_dir.empty()) rep.write(opts.out_dir);
  return rep;
}

std::vector<std::array<int, 3>> default_ablation_latents() {
  return {{64, 64, 64}, {128, 128, 128}, {256, 256, 256}, {128, 16, 128}};
}

ExperimentReport run_ablation(const Dataset& data, const Model<float>& pretrained,
                              const TrainConfig& base, const std::vector<std::array<int, 3>>& latents,
                              const EvalOptions& opts) {
  if (latents.size() < 2) throw InvalidArgument("ablation needs at least two latent configs");
  auto pairs = test_pairs(data, opts.pairs_per_subset);
  if (pairs[0].empty()) throw InvalidArgument("no cross-pose test pairs");
  ExperimentReport rep;
  rep.dataset_hash = hex64(data.manifest().hash());
  rep.seed = base.seed;
  rep.options = opts;

  for (const auto& latent : latents) {
    AblationRow row;
    row.latent = latent;
    const auto start = Clock::now();
    try {
      TrainConfig cfg = base;
      cfg.stage = Stage::kDisentangle;
      cfg.model.latent = latent;
      TrainOptions topts;
      EvalOptions eopts = opts;
      if (!opts.out_dir.empty()) {
        const auto dir = opts.out_dir / fmt::format("latent_{}_{}_{}", latent[0], latent[1], latent[2]);
        topts.out_dir = dir / "train";
        eopts.out_dir = dir / "eval";
      }
      TrainResult tr = train_disentangle(data, pretrained, cfg, topts);
      row.trajectory_hash = hex64(tr.report.trajectory_hash());
      row.checkpoint = tr.report.best_checkpoint;
      row.train_seconds = std::chrono::duration<double>(Clock::now() - start).count();

      std::array<std::vector<const PairSpec*>, 3> pose_only;
      pose_only[0] = pairs[0];
      Evaluator ev(*tr.model, data, eopts, false);
      const ModeReport m = ev.run(pose_only);
      row.cross_pose = m.conditions[static_cast<int>(Condition::kCrossPose)];
      row.self_iou_median = m.self_iou_median;
      row.self_iou_mean = m.self_iou_mean;
    } catch (const Error& e) {
      row.failed = true;
      row.error = e.what();
    }
    rep.ablation.push_back(row);
  }
  std::stable_sort(rep.ablation.begin(), rep.ablation.end(), [](const AblationRow& a, const AblationRow& b) {
    if (a.failed != b.failed) return !a.failed;
    return a.cross_pose.median.chamfer < b.cross_pose.median.chamfer;
  });
  if (!opts.out_dir.empty()) rep.write(opts.out_dir);
  return rep;
}

}  // namespace disent
