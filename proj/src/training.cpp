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


#include "disent/training.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "disent/error.hpp"
#include "disent/hash.hpp"
#include "disent/manipulation.hpp"
#include "disent/metrics.hpp"

namespace disent {

using Eigen::Index;
using nlohmann::json;

// Config ----------------------------------------------------------------------

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  if (loss.mode != model.mode) throw ConfigError("loss mode and model mode differ");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (stage == Stage::kDisentangle && batch_size < 2) {
    throw ConfigError("a disentangle batch needs room for one pair (batch_size >= 2)");
  }
  if (samples_per_image < 2) throw ConfigError("samples_per_image must be >= 2");
  if (model.mode == FieldKind::kOccupancy && samples_per_image % 2 != 0) {
    throw ConfigError("occupancy sampling needs an even samples_per_image");
  }
  if (model.mode == FieldKind::kSdf && samples_per_image % 8 != 0) {
    throw ConfigError("sdf sampling needs samples_per_image divisible by 8");
  }
  if (!(optimizer.lr > 0.0) || !(optimizer.lr_after > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (!(occupancy_uniform_fraction >= 0.0 && occupancy_uniform_fraction < 1.0)) {
    throw ConfigError("occupancy_uniform_fraction must be in [0, 1)");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (checkpoint_every < 1 || validation.every < 1) throw ConfigError("intervals must be >= 1");
  if (validation.grid_res < 32) throw ConfigError("validation grid_res must be >= 32");
  if (validation.surface_samples < 1000) {
    throw ConfigError("validation surface_samples must be >= 1000");
  }
  if (max_train_items < 0 || validation.examples < 0) throw ConfigError("negative subset size");
}

double TrainConfig::lr_at(int epoch) const {
  if (stage == Stage::kPretrain && epoch > optimizer.drop_epoch) return optimizer.lr_after;
  return optimizer.lr;
}

std::uint64_t TrainConfig::hash() const {
  json j = *this;
  return fnv1a(j.dump());
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"stage", stage_name(c.stage)},
           {"model", c.model},
           {"loss", c.loss},
           {"optimizer",
            {{"type", "rmsprop"},
             {"lr", c.optimizer.lr},
             {"lr_after", c.optimizer.lr_after},
             {"drop_epoch", c.optimizer.drop_epoch},
             {"alpha", c.optimizer.alpha},
             {"eps", c.optimizer.eps}}},
           {"validation",
            {{"every", c.validation.every},
             {"examples", c.validation.examples},
             {"grid_res", c.validation.grid_res},
             {"surface_samples", c.validation.surface_samples}}},
           {"batch_size", c.batch_size},
           {"samples_per_image", c.samples_per_image},
           {"sigma", c.sigma},
           {"occupancy_uniform_fraction", c.occupancy_uniform_fraction},
           {"epochs", c.epochs},
           {"seed", c.seed},
           {"checkpoint_every", c.checkpoint_every},
           {"max_train_items", c.max_train_items}};
}

void from_json(const json& j, TrainConfig& c) {
  const TrainConfig d;
  c.stage = parse_stage(j.value("stage", std::string("pretrain")));
  c.model = j.contains("model") ? j.at("model").get<ModelConfig>() : d.model;
  if (j.contains("loss")) {
    c.loss = j.at("loss").get<LossConfig>();
    if (!j.at("loss").contains("mode")) c.loss.mode = c.model.mode;
  } else {
    c.loss = d.loss;
    c.loss.mode = c.model.mode;
  }
  const json o = j.value("optimizer", json::object());
  c.optimizer.lr = o.value("lr", d.optimizer.lr);
  c.optimizer.lr_after = o.value("lr_after", d.optimizer.lr_after);
  c.optimizer.drop_epoch = o.value("drop_epoch", d.optimizer.drop_epoch);
  c.optimizer.alpha = o.value("alpha", d.optimizer.alpha);
  c.optimizer.eps = o.value("eps", d.optimizer.eps);
  const json v = j.value("validation", json::object());
  c.validation.every = v.value("every", d.validation.every);
  c.validation.examples = v.value("examples", d.validation.examples);
  c.validation.grid_res = v.value("grid_res", d.validation.grid_res);
  c.validation.surface_samples = v.value("surface_samples", d.validation.surface_samples);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.samples_per_image = j.value("samples_per_image", d.samples_per_image);
  c.sigma = j.value("sigma", d.sigma);
  c.occupancy_uniform_fraction =
      j.value("occupancy_uniform_fraction", d.occupancy_uniform_fraction);
  c.epochs = j.value("epochs", c.stage == Stage::kPretrain ? 60 : 80);
  c.seed = j.value("seed", d.seed);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.max_train_items = j.value("max_train_items", d.max_train_items);
  c.validate();
}

// Objectives ------------------------------------------------------------------

namespace {

void add_components(StepLoss& s, const ReconLoss& r, double w) {
  s.recon += w * r.total;
  s.ls += w * r.ls;
  s.igr += w * r.igr;
  s.off += w * r.off;
}

void check_finite(const StepLoss& s) {
  const std::pair<const char*, double> parts[] = {{"recon", s.recon}, {"ls", s.ls},
                                                  {"igr", s.igr},     {"off", s.off},
                                                  {"feat", s.feat},   {"latent", s.latent},
                                                  {"total", s.total}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) throw DivergenceError(fmt::format("{} loss is {}", name, v), -1, name);
  }
}

template <typename T>
void append_points(SurfaceQuery<T>& q, const SampleBatch& b, int image) {
  const Index start = q.x.cols();
  q.x.conservativeResize(3, start + b.size());
  for (int i = 0; i < b.size(); ++i) {
    q.x.col(start + i) = b.points[i].cast<T>();
    q.image.push_back(image);
  }
}

}  // namespace

template <typename T>
StepLoss pretrain_loss(Model<T>& model, const Tensor<T>& images,
                       const std::vector<const SampleBatch*>& batches, const LossConfig& cfg,
                       bool backward) {
  const int n = images.n;
  if (static_cast<int>(batches.size()) != n || n == 0) {
    throw ShapeError(fmt::format("{} images but {} sample batches", n, batches.size()));
  }
  typename FeatureExtractor<T>::Cache fc;
  const Tensor<T> F = model.f.forward(images, backward ? &fc : nullptr);

  SurfaceQuery<T> q;
  q.x.resize(3, 0);
  std::vector<Index> offsets;
  for (int b = 0; b < n; ++b) {
    offsets.push_back(q.x.cols());
    append_points(q, *batches[b], b);
  }
  const bool sdf = cfg.mode == FieldKind::kSdf;
  typename SurfaceNet<T>::Cache gc;
  const SurfaceOutput<T> out = model.g.forward(F, q, sdf, backward ? &gc : nullptr);

  Row<T> dv = Row<T>::Zero(q.size());
  Mat<T> dg = sdf ? Mat<T>::Zero(3, q.size()) : Mat<T>();
  StepLoss s;
  const T scale = T(1) / T(n);
  for (int b = 0; b < n; ++b) {
    const ReconLoss r = recon_loss(out, offsets[b], *batches[b], cfg, scale,
                                   backward ? &dv : nullptr, backward && sdf ? &dg : nullptr);
    add_components(s, r, 1.0 / n);
  }
  s.total = s.recon;
  check_finite(s);
  if (backward) model.f.backward(fc, model.g.backward(gc, dv, dg, true));
  return s;
}

template <typename T>
StepLoss disentangle_loss(Model<T>& model, const Tensor<T>& F1, const Tensor<T>& F2,
                          const std::vector<Attribute>& varying,
                          const std::vector<const SampleBatch*>& batches1,
                          const std::vector<const SampleBatch*>& batches2, const LossConfig& cfg,
                          bool backward) {
  const int P = F1.n;
  if (P == 0 || !F1.same_shape(F2) || static_cast<int>(varying.size()) != P ||
      static_cast<int>(batches1.size()) != P || static_cast<int>(batches2.size()) != P) {
    throw ShapeError("disentangle batch: inconsistent pair counts");
  }
  const auto& len = model.config().latent;
  const std::array<int, 3> off = {0, len[0], len[0] + len[1]};

  const Tensor<T> F = nn::concat<T>({&F1, &F2});
  std::array<typename EncoderHead<T>::Cache, 3> hc;
  LatentCodes<T> codes;
  for (int a = 0; a < 3; ++a) codes.code[a] = model.heads[a].forward(F, backward ? &hc[a] : nullptr);

  // Decoder inputs: [self 1 | self 2 | 2 with d from 1 | 1 with d from 2].
  Mat<T> Z(model.config().latent_total(), 4 * P);
  for (int i = 0; i < P; ++i) {
    const int d = static_cast<int>(varying[i]);
    for (int a = 0; a < 3; ++a) {
      const auto c1 = codes.code[a].col(i);
      const auto c2 = codes.code[a].col(P + i);
      Z.block(off[a], i, len[a], 1) = c1;
      Z.block(off[a], P + i, len[a], 1) = c2;
      Z.block(off[a], 2 * P + i, len[a], 1) = a == d ? c1 : c2;
      Z.block(off[a], 3 * P + i, len[a], 1) = a == d ? c2 : c1;
    }
  }
  typename Decoder<T>::Cache dc;
  const Tensor<T> Fp = model.decoder.forward(Z, backward ? &dc : nullptr);

  StepLoss s;
  std::array<Tensor<T>, 4> parts, dparts;
  for (int k = 0; k < 4; ++k) {
    parts[k] = Fp.slice(k * P, P);
    dparts[k] = Tensor<T>(P, Fp.c, Fp.h, Fp.w);
  }
  s.feat = feat_loss(F1, F2, PrimedMaps<T>{{&parts[0], &parts[1], &parts[2], &parts[3]}},
                     static_cast<T>(cfg.w_feat),
                     backward ? std::array<Tensor<T>*, 4>{&dparts[0], &dparts[1], &dparts[2], &dparts[3]}
                              : std::array<Tensor<T>*, 4>{});

  LatentCodes<T> dcodes;
  for (int a = 0; a < 3; ++a) dcodes.code[a] = Mat<T>::Zero(len[a], 2 * P);
  for (int i = 0; i < P; ++i) {
    LatentCodes<T> d1, d2;
    for (int a = 0; a < 3; ++a) {
      d1.code[a] = Mat<T>::Zero(len[a], 1);
      d2.code[a] = Mat<T>::Zero(len[a], 1);
    }
    s.latent += latent_loss(codes.column(i), codes.column(P + i), varying[i],
                            static_cast<T>(cfg.w_latent / P), backward ? &d1 : nullptr,
                            backward ? &d2 : nullptr) /
                P;
    if (backward) {
      for (int a = 0; a < 3; ++a) {
        dcodes.code[a].col(i) += d1.code[a];
        dcodes.code[a].col(P + i) += d2.code[a];
      }
    }
  }

  SurfaceQuery<T> q;
  q.x.resize(3, 0);
  std::vector<std::array<Index, 4>> offsets(P);
  for (int k = 0; k < 4; ++k) {
    for (int i = 0; i < P; ++i) {
      offsets[i][k] = q.x.cols();
      append_points(q, k % 2 == 0 ? *batches1[i] : *batches2[i], k * P + i);
    }
  }
  const bool sdf = cfg.mode == FieldKind::kSdf;
  typename SurfaceNet<T>::Cache gc;
  const SurfaceOutput<T> out = model.g.forward(Fp, q, sdf, backward ? &gc : nullptr);
  Row<T> dv = Row<T>::Zero(q.size());
  Mat<T> dg = sdf ? Mat<T>::Zero(3, q.size()) : Mat<T>();
  for (int i = 0; i < P; ++i) {
    const DisentRecon r = disent_recon_loss(out, offsets[i], *batches1[i], *batches2[i], cfg,
                                            static_cast<T>(cfg.w_recon / P),
                                            backward ? &dv : nullptr,
                                            backward && sdf ? &dg : nullptr);
    for (const ReconLoss& t : r.terms) add_components(s, t, 1.0 / P);
  }
  s.total = disent_total(cfg, s.feat, s.latent, s.recon);
  check_finite(s);
  if (!backward) return s;

  Tensor<T> dFp = model.g.backward(gc, dv, dg, true);
  const Index block = static_cast<Index>(P) * Fp.pixels();
  for (int k = 0; k < 4; ++k) dFp.data.middleCols(k * block, block) += dparts[k].data;
  const Mat<T> dZ = model.decoder.backward(dc, dFp);
  for (int i = 0; i < P; ++i) {
    const int d = static_cast<int>(varying[i]);
    for (int a = 0; a < 3; ++a) {
      auto g1 = dcodes.code[a].col(i);
      auto g2 = dcodes.code[a].col(P + i);
      g1 += dZ.block(off[a], i, len[a], 1);
      g2 += dZ.block(off[a], P + i, len[a], 1);
      (a == d ? g1 : g2) += dZ.block(off[a], 2 * P + i, len[a], 1);
      (a == d ? g2 : g1) += dZ.block(off[a], 3 * P + i, len[a], 1);
    }
  }
  for (int a = 0; a < 3; ++a) model.heads[a].backward(hc[a], dcodes.code[a], false);
  return s;
}

#define DISENT_TRAIN_INSTANTIATE(T)                                                         \
  template StepLoss pretrain_loss<T>(Model<T>&, const Tensor<T>&,                           \
                                     const std::vector<const SampleBatch*>&,                \
                                     const LossConfig&, bool);                              \
  template StepLoss disentangle_loss<T>(Model<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                        const std::vector<Attribute>&,                      \
                                        const std::vector<const SampleBatch*>&,             \
                                        const std::vector<const SampleBatch*>&,             \
                                        const LossConfig&, bool);

DISENT_TRAIN_INSTANTIATE(float)
DISENT_TRAIN_INSTANTIATE(double)

// Reports ---------------------------------------------------------------------

namespace {

json loss_json(const StepLoss& s) {
  return {{"total", s.total}, {"recon", s.recon}, {"ls", s.ls},         {"igr", s.igr},
          {"off", s.off},     {"feat", s.feat},   {"latent", s.latent}};
}

}  // namespace

json epoch_json(const EpochRecord& e) {
  return {{"epoch", e.epoch},
          {"lr", e.lr},
          {"loss", loss_json(e.loss)},
          {"steps", e.steps},
          {"seconds", e.seconds},
          {"val_chamfer", e.val_chamfer ? json(*e.val_chamfer) : json(nullptr)},
          {"val_failures", e.val_failures}};
}

json TrainReport::to_json() const {
  json ep = json::array();
  for (const EpochRecord& e : epochs) ep.push_back(epoch_json(e));
  return {{"stage", stage_name(stage)},
          {"config_hash", config_hash},
          {"epochs", ep},
          {"step_count", steps.size()},
          {"trajectory_hash", hex64(trajectory_hash())},
          {"checkpoints", checkpoints},
          {"best_checkpoint", best_checkpoint},
          {"best_epoch", best_epoch},
          {"best_val_chamfer", std::isfinite(best_val) ? json(best_val) : json(nullptr)},
          {"wall_seconds", wall_seconds},
          {"f_checksum_before", f_checksum_before},
          {"f_checksum_after", f_checksum_after}};
}

std::uint64_t TrainReport::trajectory_hash() const {
  Fnv1a h;
  for (const StepLoss& s : steps) {
    for (double v : {s.total, s.recon, s.ls, s.igr, s.off, s.feat, s.latent}) h.update_value(v);
  }
  return h.digest();
}

// Validation ------------------------------------------------------------------

Validation validate_model(const Model<float>& model, Stage stage,
                          const std::vector<const RenderedExample*>& examples,
                          const ValidationConfig& cfg, std::uint64_t seed) {
  Validation v;
  std::vector<double> values;
  for (const RenderedExample* ex : examples) {
    try {
      const Reconstruction r = stage == Stage::kPretrain
                                   ? reconstruct_direct(ex->image, model, cfg.grid_res)
                                   : reconstruct_self(ex->image, model, cfg.grid_res);
      values.push_back(evaluate_surface(r.mesh, ex->mesh, cfg.surface_samples, seed).chamfer);
    } catch (const EmptySurfaceError&) {
      ++v.failures;
      values.push_back(std::numeric_limits<double>::infinity());
    }
  }
  v.count = static_cast<int>(values.size());
  if (values.empty()) {
    v.median_chamfer = std::numeric_limits<double>::infinity();
    return v;
  }
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  v.median_chamfer = values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
  return v;
}

std::unique_ptr<Model<float>> stage2_model(const Model<float>& pretrained, const ModelConfig& cfg) {
  if (pretrained.config().mode != cfg.mode) {
    throw ConfigError("pretrained checkpoint mode does not match the stage-2 config");
  }
  auto model = std::make_unique<Model<float>>(cfg);
  auto& src = const_cast<Model<float>&>(pretrained);
  for (Part part : {Part::kExtractor, Part::kSurface}) {
    auto from = src.params(part);
    auto to = model->params(part);
    if (from.size() != to.size()) throw ConfigError("pretrained f/g layout differs from config");
    for (std::size_t i = 0; i < from.size(); ++i) {
      if (from[i].first != to[i].first || from[i].second->value.rows() != to[i].second->value.rows() ||
          from[i].second->value.cols() != to[i].second->value.cols()) {
        throw ConfigError("pretrained parameter " + from[i].first + " does not fit the config");
      }
      to[i].second->value = from[i].second->value;
    }
  }
  return model;
}

// Drivers ---------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

SampleBatch draw_samples(const TrainConfig& cfg, const RenderedExample& ex, int epoch) {
  const std::uint64_t seed = mix_seed(mix_seed(cfg.seed, 5000 + epoch), fnv1a(ex.id));
  if (cfg.model.mode == FieldKind::kSdf) {
    return sample_sdf(ex, cfg.samples_per_image, cfg.sigma, seed);
  }
  // Uniform share rounded to an even count so the surface part stays balanced.
  const int n = cfg.samples_per_image;
  const int n_uniform =
      std::min(n - 2, 2 * static_cast<int>(std::lround(0.5 * n * cfg.occupancy_uniform_fraction)));
  SampleBatch b = sample_occupancy(ex, n - n_uniform, cfg.sigma, seed);
  std::mt19937_64 rng(mix_seed(seed, 3));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < n_uniform; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng));
    const double s = ex.field->sdf(p);
    b.points.push_back(p);
    b.roles.push_back(s < 0.0 ? SampleRole::kOccInside : SampleRole::kOccOutside);
    b.occupancy.push_back(s < 0.0 ? 1.0f : 0.0f);
    b.sdf.push_back(static_cast<float>(s));
    b.normals.push_back(Vec3::Zero());
  }
  return b;
}

std::vector<int> epoch_order(const TrainConfig& cfg, int n, int epoch) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(cfg.seed, 7000 + epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

class LossLog {
 public:
  explicit LossLog(const std::filesystem::path& dir) {
    if (dir.empty()) return;
    const auto path = dir / "loss.csv";
    const bool fresh = !std::filesystem::exists(path);
    out_.open(path, std::ios::app);
    if (!out_) throw IoError("cannot open " + path.string());
    if (fresh) out_ << "step,epoch,stage,mode,recon,ls,igr,off,feat,latent,total\n";
  }
  void write(long step, int epoch, Stage stage, FieldKind mode, const StepLoss& s) {
    if (!out_.is_open()) return;
    out_ << fmt::format("{},{},{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", step,
                        epoch, stage_name(stage), mode == FieldKind::kSdf ? "sdf" : "occupancy",
                        s.recon, s.ls, s.igr, s.off, s.feat, s.latent, s.total);
  }
  void flush() {
    if (out_.is_open()) out_.flush();
  }

 private:
  std::ofstream out_;
};

void accumulate(StepLoss& acc, const StepLoss& s, double w) {
  acc.total += w * s.total;
  acc.recon += w * s.recon;
  acc.ls += w * s.ls;
  acc.igr += w * s.igr;
  acc.off += w * s.off;
  acc.feat += w * s.feat;
  acc.latent += w * s.latent;
}

/// Shared epoch bookkeeping for both stages.
class Session {
 public:
  Session(const TrainConfig& cfg, const TrainOptions& opts, std::unique_ptr<Model<float>> model,
          nn::ParamRefs<float> trainable, const std::vector<const RenderedExample*>& val)
      : cfg_(cfg),
        opts_(opts),
        model_(std::move(model)),
        opt_(std::move(trainable), cfg.optimizer.alpha, cfg.optimizer.eps),
        val_(val),
        log_(prepare_dir(opts.out_dir)),
        start_(Clock::now()) {
    report_.stage = cfg.stage;
    report_.config_hash = hex64(cfg.hash());
    report_.best_val = std::numeric_limits<double>::infinity();
    if (!opts.resume.empty()) resume(opts.resume);
  }

  int first_epoch() const { return first_epoch_; }
  Model<float>& model() { return *model_; }
  TrainReport& report() { return report_; }

  /// Runs one optimizer step on the loss computed by `fn`.
  template <typename Fn>
  void step(int epoch, Fn&& fn) {
    opt_.zero_grad();
    StepLoss s;
    try {
      s = fn();
    } catch (const DivergenceError& e) {
      throw DivergenceError(fmt::format("step {} (epoch {}): {}", step_, epoch, e.what()), step_,
                            e.component);
    }
    opt_.step(cfg_.lr_at(epoch));
    log_.write(step_, epoch, cfg_.stage, cfg_.model.mode, s);
    report_.steps.push_back(s);
    accumulate(epoch_sum_, s, 1.0);
    ++epoch_steps_;
    ++step_;
  }

  void begin_epoch() {
    epoch_sum_ = StepLoss{};
    epoch_steps_ = 0;
    epoch_start_ = Clock::now();
  }

  void end_epoch(int epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = cfg_.lr_at(epoch);
    rec.steps = epoch_steps_;
    accumulate(rec.loss, epoch_sum_, epoch_steps_ ? 1.0 / epoch_steps_ : 0.0);
    for (auto& [name, p] : opt_.params()) {
      if (!p->value.allFinite()) {
        throw DivergenceError(fmt::format("parameter {} became non-finite in epoch {}", name, epoch),
                              step_ - 1, name);
      }
    }
    const bool last = epoch == cfg_.epochs;
    if (!val_.empty() && (epoch % cfg_.validation.every == 0 || last)) {
      const Validation v = validate_model(*model_, cfg_.stage, val_, cfg_.validation,
                                          mix_seed(cfg_.seed, 9000));
      rec.val_chamfer = v.median_chamfer;
      rec.val_failures = v.failures;
      if (v.median_chamfer < report_.best_val) {
        report_.best_val = v.median_chamfer;
        report_.best_epoch = epoch;
        best_ = std::make_unique<Model<float>>(*model_);
      }
    }
    if (!opts_.out_dir.empty() && (epoch % cfg_.checkpoint_every == 0 || last)) {
      const auto path = opts_.out_dir / fmt::format("epoch_{:04d}.dsck", epoch);
      save_checkpoint(path, *model_, header(epoch), &opt_.state());
      report_.checkpoints.push_back(path.string());
    }
    rec.seconds = seconds_since(epoch_start_);
    report_.epochs.push_back(rec);
    log_.flush();
    if (opts_.on_epoch) opts_.on_epoch(rec);
  }

  TrainResult finish() {
    TrainResult r;
    r.last = std::move(model_);
    if (!best_) {
      best_ = std::make_unique<Model<float>>(*r.last);
      report_.best_epoch = cfg_.epochs;
    }
    report_.wall_seconds = seconds_since(start_);
    if (!opts_.out_dir.empty()) {
      const auto best_path = opts_.out_dir / "best.dsck";
      save_checkpoint(best_path, *best_, header(report_.best_epoch), nullptr);
      report_.best_checkpoint = best_path.string();
      report_.checkpoints.push_back(best_path.string());
      std::ofstream out(opts_.out_dir / "report.json");
      out << report_.to_json().dump(2) << "\n";
    }
    r.model = std::move(best_);
    r.report = std::move(report_);
    return r;
  }

 private:
  static std::filesystem::path prepare_dir(const std::filesystem::path& dir) {
    if (!dir.empty()) std::filesystem::create_directories(dir);
    return dir;
  }

  json header(int epoch) const {
    return {{"stage", stage_name(cfg_.stage)},
            {"epoch", epoch},
            {"step", step_},
            {"train", cfg_},
            {"config_hash", hex64(cfg_.hash())},
            {"optimizer", {{"type", "rmsprop"},
                           {"alpha", cfg_.optimizer.alpha},
                           {"eps", cfg_.optimizer.eps},
                           {"lr", cfg_.lr_at(std::max(epoch, 1))}}}};
  }

  void resume(const std::filesystem::path& path) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.stage() != cfg_.stage) throw ConfigError("resume checkpoint is from another stage");
    if (json(ck.model->config()) != json(model_->config())) {
      throw ConfigError("resume checkpoint model config differs from the run config");
    }
    model_->copy_from(*ck.model);
    for (auto& [name, p] : opt_.params()) {
      auto it = ck.optimizer_state.find(name);
      if (it == ck.optimizer_state.end()) throw ConfigError("resume checkpoint lacks optimizer state");
      opt_.state().at(name) = it->second;
    }
    first_epoch_ = ck.epoch() + 1;
    step_ = ck.header.value("step", 0L);
  }

  const TrainConfig& cfg_;
  const TrainOptions& opts_;
  std::unique_ptr<Model<float>> model_;
  std::unique_ptr<Model<float>> best_;
  RmsProp opt_;
  std::vector<const RenderedExample*> val_;
  LossLog log_;
  TrainReport report_;
  StepLoss epoch_sum_;
  int epoch_steps_ = 0;
  long step_ = 0;
  int first_epoch_ = 1;
  Clock::time_point start_, epoch_start_;
};

std::vector<const RenderedExample*> validation_subset(const Dataset& data, const TrainConfig& cfg) {
  auto val = data.examples(Split::kVal);
  if (cfg.validation.examples > 0 && static_cast<int>(val.size()) > cfg.validation.examples) {
    val.resize(cfg.validation.examples);
  }
  return val;
}

}  // namespace

TrainResult pretrain(const Dataset& data, const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  const nn::DenormalFlush flush;
  if (cfg.stage != Stage::kPretrain) throw ConfigError("pretrain called with a non-pretrain config");
  if (cfg.model.image_res != data.manifest().config.image_res) {
    throw ConfigError("model image_res differs from the dataset's");
  }
  auto items = data.examples(Split::kTrain);
  if (cfg.max_train_items > 0 && static_cast<int>(items.size()) > cfg.max_train_items) {
    items.resize(cfg.max_train_items);
  }
  if (items.empty()) throw ConfigError("training split is empty");

  auto model = std::make_unique<Model<float>>(cfg.model);
  nn::ParamRefs<float> trainable = model->params(Part::kExtractor);
  for (auto& p : model->params(Part::kSurface)) trainable.push_back(p);
  Session session(cfg, opts, std::move(model), trainable, validation_subset(data, cfg));

  const int n = static_cast<int>(items.size());
  for (int epoch = session.first_epoch(); epoch <= cfg.epochs; ++epoch) {
    session.begin_epoch();
    const std::vector<int> order = epoch_order(cfg, n, epoch);
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, n - start);
      std::vector<const Image*> images;
      std::vector<SampleBatch> samples;
      for (int k = 0; k < count; ++k) {
        const RenderedExample& ex = *items[order[start + k]];
        images.push_back(&ex.image);
        samples.push_back(draw_samples(cfg, ex, epoch));
      }
      std::vector<const SampleBatch*> ptrs;
      for (const auto& s : samples) ptrs.push_back(&s);
      const Tensor<float> x = images_to_tensor<float>(images);
      session.step(epoch, [&] { return pretrain_loss(session.model(), x, ptrs, cfg.loss, true); });
    }
    session.end_epoch(epoch);
  }
  return session.finish();
}

TrainResult train_disentangle(const Dataset& data, const Model<float>& pretrained,
                              const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  const nn::DenormalFlush flush;
  if (cfg.stage != Stage::kDisentangle) {
    throw ConfigError("train_disentangle called with a non-disentangle config");
  }
  if (cfg.model.image_res != data.manifest().config.image_res) {
    throw ConfigError("model image_res differs from the dataset's");
  }
  auto pairs = data.manifest().select(Split::kTrain);
  if (cfg.max_train_items > 0 && static_cast<int>(pairs.size()) > cfg.max_train_items) {
    pairs.resize(cfg.max_train_items);
  }
  if (pairs.empty()) throw ConfigError("no training pairs");

  auto model = stage2_model(pretrained, cfg.model);
  nn::ParamRefs<float> trainable;
  for (Part part : {Part::kHeads, Part::kDecoder, Part::kSurface}) {
    for (auto& p : model->params(part)) trainable.push_back(p);
  }
  const std::uint64_t f_before = param_checksum(model->params(Part::kExtractor));

  // f is frozen, so every member's feature map is computed once.
  std::map<std::string, Tensor<float>> features;
  {
    std::vector<const RenderedExample*> todo;
    for (const PairSpec* p : pairs) {
      for (const RenderedExample* ex : {&data.a(*p), &data.b(*p)}) {
        if (features.emplace(ex->id, Tensor<float>()).second) todo.push_back(ex);
      }
    }
    constexpr int kChunk = 32;
    for (std::size_t s = 0; s < todo.size(); s += kChunk) {
      std::vector<const Image*> imgs;
      for (std::size_t k = s; k < std::min(todo.size(), s + kChunk); ++k) imgs.push_back(&todo[k]->image);
      const Tensor<float> F = model->extract_features(images_to_tensor<float>(imgs));
      for (int k = 0; k < F.n; ++k) features[todo[s + k]->id] = F.slice(k, 1);
    }
  }

  Session session(cfg, opts, std::move(model), trainable, validation_subset(data, cfg));
  session.report().f_checksum_before = hex64(f_before);
  const int per_step = std::max(1, cfg.batch_size / 2);
  const int n = static_cast<int>(pairs.size());
  for (int epoch = session.first_epoch(); epoch <= cfg.epochs; ++epoch) {
    session.begin_epoch();
    const std::vector<int> order = epoch_order(cfg, n, epoch);
    std::map<std::string, SampleBatch> samples;
    auto samples_of = [&](const RenderedExample& ex) -> const SampleBatch* {
      auto it = samples.find(ex.id);
      if (it == samples.end()) it = samples.emplace(ex.id, draw_samples(cfg, ex, epoch)).first;
      return &it->second;
    };
    for (int start = 0; start < n; start += per_step) {
      const int count = std::min(per_step, n - start);
      std::vector<const Tensor<float>*> f1, f2;
      std::vector<Attribute> varying;
      std::vector<const SampleBatch*> b1, b2;
      for (int k = 0; k < count; ++k) {
        const PairSpec& p = *pairs[order[start + k]];
        const RenderedExample& a = data.a(p);
        const RenderedExample& b = data.b(p);
        f1.push_back(&features.at(a.id));
        f2.push_back(&features.at(b.id));
        varying.push_back(p.varying);
        b1.push_back(samples_of(a));
        b2.push_back(samples_of(b));
      }
      const Tensor<float> F1 = nn::concat<float>(f1), F2 = nn::concat<float>(f2);
      session.step(epoch, [&] {
        return disentangle_loss(session.model(), F1, F2, varying, b1, b2, cfg.loss, true);
      });
    }
    if (param_checksum(session.model().params(Part::kExtractor)) != f_before) {
      throw Error(ErrorCode::kInternal, "frozen feature extractor was modified during stage 2");
    }
    session.end_epoch(epoch);
  }
  session.report().f_checksum_after =
      hex64(param_checksum(session.model().params(Part::kExtractor)));
  return session.finish();
}

}  // namespace disent
