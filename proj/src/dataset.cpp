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

#include "disent/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "disent/error.hpp"
#include "disent/hash.hpp"
#include "disent/marching_cubes.hpp"
#include "disent/mesh_io.hpp"
#include "disent/scalar_grid.hpp"

namespace disent {

using nlohmann::json;

namespace {

constexpr double kMinPoseDelta = 0.15;
constexpr double kMinShapeDelta = 0.05;
constexpr double kMinLengthDelta = 0.1;
constexpr double kMinLoosenessDelta = 0.02;

void hash_params(Fnv1a& h, const FigureParams& p) {
  for (double v : p.pose.as_array()) h.update_value(v);
  h.update_value(p.shape.height);
  h.update_value(p.shape.torso);
  h.update_value(p.shape.limb);
  h.update_value(p.garment.length);
  h.update_value(p.garment.looseness);
  h.update_value(static_cast<std::uint8_t>(p.garment.sleeves));
}

double max_abs_diff(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool perturbation_ok(const FigureParams& a, const FigureParams& b, Attribute varying) {
  switch (varying) {
    case Attribute::kPose:
      return max_abs_diff(a.pose.as_array(), b.pose.as_array()) >= kMinPoseDelta;
    case Attribute::kShape:
      return std::max({std::abs(a.shape.height - b.shape.height),
                       std::abs(a.shape.torso - b.shape.torso),
                       std::abs(a.shape.limb - b.shape.limb)}) >= kMinShapeDelta;
    case Attribute::kGarment:
      return std::abs(a.garment.length - b.garment.length) >= kMinLengthDelta ||
             std::abs(a.garment.looseness - b.garment.looseness) >= kMinLoosenessDelta ||
             a.garment.sleeves != b.garment.sleeves;
  }
  return false;
}

class ParamSampler {
 public:
  explicit ParamSampler(std::uint64_t seed) : rng_(seed) {}

  Pose pose() {
    const double lim = std::numbers::pi / 3.0;
    return {u(-lim, lim), u(-lim, lim), u(-lim, lim), u(-lim, lim)};
  }
  BodyShape shape() { return {u(0.8, 1.2), u(0.8, 1.2), u(0.8, 1.2)}; }
  Garment garment() { return {u(0.3, 0.7), u(0.02, 0.10), u(0.0, 1.0) < 0.5}; }
  FigureParams figure() { return {pose(), shape(), garment()}; }

  FigureParams vary(const FigureParams& a, Attribute d) {
    FigureParams b = a;
    do {
      switch (d) {
        case Attribute::kPose:
          b.pose = pose();
          break;
        case Attribute::kShape:
          b.shape = shape();
          break;
        case Attribute::kGarment:
          b.garment = garment();
          break;
      }
    } while (!perturbation_ok(a, b, d));
    return b;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  double u(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  std::mt19937_64 rng_;
};

}  // namespace

Image render_front(const Figure& figure, int resolution) {
  const Vec3 light = kLightDirection.normalized();
  Image img;
  img.width = img.height = resolution;
  img.pixels.assign(static_cast<std::size_t>(resolution) * resolution, 0.0f);
  constexpr double kZStart = 1.5;
  constexpr double kZEnd = -1.5;
  constexpr double kHitEps = 1e-5;
  for (int r = 0; r < resolution; ++r) {
    for (int c = 0; c < resolution; ++c) {
      const double x = -1.0 + (c + 0.5) * 2.0 / resolution;
      const double y = 1.0 - (r + 0.5) * 2.0 / resolution;
      double z = kZStart;
      for (int step = 0; step < 256 && z > kZEnd; ++step) {
        const SdfSample s = figure.eval(Vec3(x, y, z));
        if (s.value < kHitEps) {
          const double shade = std::max(0.0, s.gradient.dot(light));
          img.pixels[static_cast<std::size_t>(r) * resolution + c] = static_cast<float>(shade);
          break;
        }
        z -= s.value;
      }
    }
  }
  return img;
}

std::string example_id(const FigureParams& params, int image_res, int mesh_res) {
  Fnv1a h;
  hash_params(h, params);
  h.update_value(image_res);
  h.update_value(mesh_res);
  return "ex-" + hex64(h.digest());
}

RenderedExample build_example(const FigureParams& params, int image_res, int mesh_res,
                              std::uint64_t seed) {
  if (image_res < 32) throw InvalidArgument(fmt::format("image_res {} < 32", image_res));
  if (mesh_res < 48) throw InvalidArgument(fmt::format("mesh_res {} < 48", mesh_res));
  RenderedExample ex;
  ex.params = params;
  ex.seed = seed;
  ex.id = example_id(params, image_res, mesh_res);
  auto figure = std::make_shared<const Figure>(params);
  ex.image = render_front(*figure, image_res);
  // Silhouette pixels can shade to exactly zero, so count hits separately.
  int hits = 0;
  for (int r = 0; r < image_res; ++r) {
    for (int c = 0; c < image_res; ++c) {
      const double x = -1.0 + (c + 0.5) * 2.0 / image_res;
      const double y = 1.0 - (r + 0.5) * 2.0 / image_res;
      hits += figure->sdf(Vec3(x, y, 0.0)) < 0.0;
    }
  }
  if (hits < 0.01 * image_res * image_res) {
    throw InvalidArgument("figure silhouette covers less than 1% of the image");
  }
  const ScalarFieldGrid grid = sample_grid([&](const Vec3& p) { return figure->sdf(p); },
                                           mesh_res, FieldKind::kSdf);
  ex.mesh = marching_cubes(grid, 0.0);
  ex.field = std::move(figure);
  return ex;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

void check_pair(const FigureParams& a, const FigureParams& b, Attribute varying) {
  const bool pose_same = a.pose == b.pose;
  const bool shape_same = a.shape == b.shape;
  const bool garment_same = a.garment == b.garment;
  const bool ok_blocks = (varying == Attribute::kPose || pose_same) &&
                         (varying == Attribute::kShape || shape_same) &&
                         (varying == Attribute::kGarment || garment_same);
  if (!ok_blocks) {
    throw InvalidArgument(fmt::format("pair varying {} differs in another block",
                                      attribute_name(varying)));
  }
  if (!perturbation_ok(a, b, varying)) {
    throw InvalidArgument(fmt::format("pair varying {} is below the minimum perturbation",
                                      attribute_name(varying)));
  }
}

std::vector<const PairSpec*> DatasetManifest::select(Split split) const {
  std::vector<const PairSpec*> out;
  for (const auto& p : pairs) {
    if (p.split == split) out.push_back(&p);
  }
  return out;
}

std::vector<const PairSpec*> DatasetManifest::select(Split split, Attribute varying) const {
  std::vector<const PairSpec*> out;
  for (const auto& p : pairs) {
    if (p.split == split && p.varying == varying) out.push_back(&p);
  }
  return out;
}

const PairSpec& DatasetManifest::pair(const std::string& id) const {
  for (const auto& p : pairs) {
    if (p.id == id) return p;
  }
  throw InvalidArgument("no pair with id '" + id + "'");
}

std::uint64_t DatasetManifest::hash() const { return fnv1a(manifest_to_json(*this).dump()); }

void to_json(json& j, const FigureParams& p) {
  j = json{{"pose", {p.pose.left_arm, p.pose.right_arm, p.pose.left_leg, p.pose.right_leg}},
           {"shape", {p.shape.height, p.shape.torso, p.shape.limb}},
           {"garment",
            {{"length", p.garment.length},
             {"looseness", p.garment.looseness},
             {"sleeves", p.garment.sleeves}}}};
}

void from_json(const json& j, FigureParams& p) {
  const auto& pose = j.at("pose");
  const auto& shape = j.at("shape");
  if (pose.size() != 4 || shape.size() != 3) throw InvalidArgument("malformed figure params");
  p.pose = {pose[0].get<double>(), pose[1].get<double>(), pose[2].get<double>(),
            pose[3].get<double>()};
  p.shape = {shape[0].get<double>(), shape[1].get<double>(), shape[2].get<double>()};
  const auto& g = j.at("garment");
  p.garment = {g.at("length").get<double>(), g.at("looseness").get<double>(),
               g.at("sleeves").get<bool>()};
  p.validate();
}

json manifest_to_json(const DatasetManifest& m) {
  json pools = json::object();
  for (const auto& [attr, n] : m.config.pool_sizes) pools[attribute_name(attr)] = n;
  json pairs = json::array();
  for (const auto& p : m.pairs) {
    pairs.push_back({{"id", p.id},
                     {"source_id", p.source_id},
                     {"varying", attribute_name(p.varying)},
                     {"split", split_name(p.split)},
                     {"a_id", example_id(p.a, m.config.image_res, m.config.mesh_res)},
                     {"b_id", example_id(p.b, m.config.image_res, m.config.mesh_res)},
                     {"a", p.a},
                     {"b", p.b}});
  }
  return json{{"schema", "disent3d.manifest/1"},
              {"seed", m.config.seed},
              {"n_per_subset", m.config.n_per_subset},
              {"image_res", m.config.image_res},
              {"mesh_res", m.config.mesh_res},
              {"pool_sizes", pools},
              {"pairs", pairs}};
}

DatasetManifest manifest_from_json(const json& j) {
  if (j.value("schema", "") != "disent3d.manifest/1") {
    throw InvalidArgument("unsupported manifest schema");
  }
  DatasetManifest m;
  m.config.seed = j.at("seed").get<std::uint64_t>();
  m.config.n_per_subset = j.at("n_per_subset").get<int>();
  m.config.image_res = j.at("image_res").get<int>();
  m.config.mesh_res = j.at("mesh_res").get<int>();
  for (const auto& [k, v] : j.at("pool_sizes").items()) {
    m.config.pool_sizes[parse_attribute(k)] = v.get<int>();
  }
  for (const auto& pj : j.at("pairs")) {
    PairSpec p;
    p.id = pj.at("id").get<std::string>();
    p.source_id = pj.at("source_id").get<std::string>();
    p.varying = parse_attribute(pj.at("varying").get<std::string>());
    const std::string split = pj.at("split").get<std::string>();
    if (split == "train") {
      p.split = Split::kTrain;
    } else if (split == "val") {
      p.split = Split::kVal;
    } else if (split == "test") {
      p.split = Split::kTest;
    } else {
      throw InvalidArgument("unknown split '" + split + "'");
    }
    p.a = pj.at("a").get<FigureParams>();
    p.b = pj.at("b").get<FigureParams>();
    check_pair(p.a, p.b, p.varying);
    m.pairs.push_back(std::move(p));
  }
  return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << manifest_to_json(m).dump(1) << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return manifest_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

DatasetManifest build_pairs(const PairConfig& config) {
  if (config.n_per_subset < 10) {
    throw InvalidArgument(fmt::format("n_per_subset {} < 10", config.n_per_subset));
  }
  DatasetManifest m;
  m.config = config;
  const int n = config.n_per_subset;
  const int n_train = static_cast<int>(std::lround(0.6 * n));
  const int n_val = static_cast<int>(std::lround(0.2 * n));
  const std::array<int, 3> targets = {n_train, n_val, n - n_train - n_val};

  for (Attribute d : {Attribute::kPose, Attribute::kShape, Attribute::kGarment}) {
    auto it = config.pool_sizes.find(d);
    const int pool_size = (it == config.pool_sizes.end() || it->second <= 0) ? n : it->second;
    if (pool_size < 5) throw InvalidArgument("pool size must be at least 5");
    ParamSampler sampler(mix_seed(config.seed, static_cast<std::uint64_t>(d)));

    struct Candidate {
      std::uint64_t rank;
      PairSpec spec;
    };
    std::vector<Candidate> pool;
    std::set<std::string> seen;
    while (static_cast<int>(pool.size()) < pool_size) {
      PairSpec p;
      p.varying = d;
      p.a = sampler.figure();
      p.b = sampler.vary(p.a, d);
      Fnv1a h;
      h.update(attribute_name(d));
      hash_params(h, p.a);
      hash_params(h, p.b);
      p.source_id = fmt::format("{}-{}", attribute_name(d), hex64(h.digest()));
      if (!seen.insert(p.source_id).second) continue;
      pool.push_back({fnv1a(p.source_id), std::move(p)});
    }
    std::sort(pool.begin(), pool.end(), [](const Candidate& x, const Candidate& y) {
      return x.rank != y.rank ? x.rank < y.rank : x.spec.source_id < y.spec.source_id;
    });

    const int m_train = static_cast<int>(std::lround(0.6 * pool_size));
    const int m_val = static_cast<int>(std::lround(0.2 * pool_size));
    const std::array<int, 4> bounds = {0, m_train, m_train + m_val, pool_size};
    for (int s = 0; s < 3; ++s) {
      const int lo = bounds[s];
      const int hi = std::min(bounds[s + 1], lo + targets[s]);
      if (hi <= lo && targets[s] > 0) {
        throw InvalidArgument("pool too small to populate every split");
      }
      std::map<std::string, int> replicas;
      auto emit = [&](const PairSpec& src) {
        PairSpec p = src;
        p.split = static_cast<Split>(s);
        const int k = replicas[src.source_id]++;
        p.id = k == 0 ? src.source_id : fmt::format("{}#{}", src.source_id, k);
        m.pairs.push_back(std::move(p));
      };
      for (int i = lo; i < hi; ++i) emit(pool[i].spec);
      std::uniform_int_distribution<int> pick(lo, hi - 1);
      for (int i = hi - lo; i < targets[s]; ++i) emit(pool[pick(sampler.rng())].spec);
    }
  }
  return m;
}

Dataset::Dataset(DatasetManifest manifest) : manifest_(std::move(manifest)) {
  const auto& cfg = manifest_.config;
  auto add = [&](const FigureParams& params) {
    const std::string id = example_id(params, cfg.image_res, cfg.mesh_res);
    if (examples_.count(id)) return;
    auto ex = std::make_unique<RenderedExample>(
        build_example(params, cfg.image_res, cfg.mesh_res, mix_seed(cfg.seed, fnv1a(id))));
    order_.push_back(id);
    examples_.emplace(id, std::move(ex));
  };
  for (const auto& p : manifest_.pairs) {
    add(p.a);
    add(p.b);
  }
}

const RenderedExample& Dataset::example(const std::string& id) const {
  auto it = examples_.find(id);
  if (it == examples_.end()) throw InvalidArgument("no example with id '" + id + "'");
  return *it->second;
}

const RenderedExample& Dataset::a(const PairSpec& p) const {
  return example(example_id(p.a, manifest_.config.image_res, manifest_.config.mesh_res));
}

const RenderedExample& Dataset::b(const PairSpec& p) const {
  return example(example_id(p.b, manifest_.config.image_res, manifest_.config.mesh_res));
}

std::vector<const RenderedExample*> Dataset::examples(Split split) const {
  std::vector<const RenderedExample*> out;
  std::set<std::string> seen;
  for (const PairSpec* p : manifest_.select(split)) {
    for (const RenderedExample* ex : {&a(*p), &b(*p)}) {
      if (seen.insert(ex->id).second) out.push_back(ex);
    }
  }
  return out;
}

void Dataset::write(const std::filesystem::path& dir, bool with_meshes) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  if (with_meshes) fs::create_directories(dir / "meshes");
  for (const auto& id : order_) {
    const RenderedExample& ex = *examples_.at(id);
    write_png(ex.image, dir / "images" / (id + ".png"));
    write_f32(ex.image, dir / "images" / (id + ".f32"));
    if (with_meshes) write_obj(ex.mesh, dir / "meshes" / (id + ".obj"));
  }
  write_manifest(manifest_, dir / "manifest.json");
}

}  // namespace disent
