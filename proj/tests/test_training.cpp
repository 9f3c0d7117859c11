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
#include <limits>
#include <random>

#include "disent/error.hpp"
#include "disent/training.hpp"
#include "fd.hpp"

using namespace disent;
using disent::testing::rel_err;
using disent::testing::tiny_config;

namespace {

const RenderedExample& example(int k) {
  static const std::vector<RenderedExample> ex = [] {
    std::vector<RenderedExample> v;
    FigureParams a;
    FigureParams b = a;
    b.pose.left_arm += 0.4;
    b.garment.length = 0.7;
    for (const FigureParams& p : {a, b}) v.push_back(build_example(p, 32, 48, 1));
    return v;
  }();
  return ex[k];
}

SampleBatch draw(const RenderedExample& ex, FieldKind mode, int n, std::uint64_t seed) {
  return mode == FieldKind::kOccupancy ? sample_occupancy(ex, n, kDefaultSigma, seed)
                                       : sample_sdf(ex, n, kDefaultSigma, seed);
}

Tensor<double> random_features(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Tensor<double> t(n, 6, 8, 8);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = nd(rng);
  return t;
}

/// Central differences on `count` random entries of `params` against the
/// gradients already accumulated there. Returns the worst relative error.
template <typename Fn>
double check_param_grads(nn::ParamRefs<double> params, Fn loss, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
  const double h = 1e-6;
  double worst = 0.0;
  for (int t = 0; t < count; ++t) {
    auto& [name, p] = params[pick_param(rng)];
    std::uniform_int_distribution<Eigen::Index> pick(0, p->value.size() - 1);
    const Eigen::Index i = pick(rng);
    const double saved = p->value.data()[i];
    p->value.data()[i] = saved + h;
    const double up = loss();
    p->value.data()[i] = saved - h;
    const double down = loss();
    p->value.data()[i] = saved;
    const double e = rel_err(p->grad.data()[i], (up - down) / (2 * h), 1e-5);
    CAPTURE(name);
    CAPTURE(i);
    CHECK(e < 1e-3);
    worst = std::max(worst, e);
  }
  return worst;
}

}  // namespace

TEST_CASE("direct reconstruction objective gradients match finite differences") {
  for (FieldKind mode : {FieldKind::kOccupancy, FieldKind::kSdf}) {
    CAPTURE(static_cast<int>(mode));
    Model<double> m(tiny_config(mode));
    disent::testing::jitter(m, 21);
    LossConfig cfg;
    cfg.mode = mode;
    const SampleBatch b0 = draw(example(0), mode, 24, 1);
    const SampleBatch b1 = draw(example(1), mode, 24, 2);
    const std::vector<const SampleBatch*> batches = {&b0, &b1};
    const Tensor<double> images = images_to_tensor<double>({&example(0).image, &example(1).image});

    for (auto& [n, p] : m.params()) p->zero_grad();
    pretrain_loss(m, images, batches, cfg, true);
    auto loss = [&] { return pretrain_loss(m, images, batches, cfg, false).total; };
    nn::ParamRefs<double> params = m.params(Part::kExtractor);
    for (auto& p : m.params(Part::kSurface)) params.push_back(p);
    check_param_grads(params, loss, 60, 22);

    // Heads and decoder take no part in direct reconstruction.
    for (Part part : {Part::kHeads, Part::kDecoder}) {
      for (auto& [n, p] : m.params(part)) CHECK(p->grad.isZero(0.0));
    }
  }
}

TEST_CASE("disentanglement objective gradients match finite differences") {
  for (FieldKind mode : {FieldKind::kOccupancy, FieldKind::kSdf}) {
    CAPTURE(static_cast<int>(mode));
    Model<double> m(tiny_config(mode));
    disent::testing::jitter(m, 31);
    LossConfig cfg;
    cfg.mode = mode;
    cfg.w_feat = 0.7;
    cfg.w_latent = 1.3;
    const Tensor<double> F1 = random_features(2, 32), F2 = random_features(2, 33);
    const std::vector<Attribute> varying = {Attribute::kPose, Attribute::kGarment};
    const SampleBatch a0 = draw(example(0), mode, 16, 3), a1 = draw(example(1), mode, 16, 4);
    const SampleBatch c0 = draw(example(1), mode, 16, 5), c1 = draw(example(0), mode, 16, 6);
    const std::vector<const SampleBatch*> b1 = {&a0, &a1}, b2 = {&c0, &c1};

    for (auto& [n, p] : m.params()) p->zero_grad();
    const StepLoss s = disentangle_loss(m, F1, F2, varying, b1, b2, cfg, true);
    CHECK(s.total == doctest::Approx(disent_total(cfg, s.feat, s.latent, s.recon)));
    CHECK(s.latent > 0.0);
    auto loss = [&] { return disentangle_loss(m, F1, F2, varying, b1, b2, cfg, false).total; };
    nn::ParamRefs<double> params;
    for (Part part : {Part::kHeads, Part::kDecoder, Part::kSurface}) {
      for (auto& p : m.params(part)) params.push_back(p);
    }
    check_param_grads(params, loss, 60, 34);

    // The step never reaches the frozen extractor.
    for (auto& [n, p] : m.params(Part::kExtractor)) CHECK(p->grad.isZero(0.0));
  }
}

TEST_CASE("disentanglement objective of a single pair agrees with the loss functions") {
  Model<double> m(tiny_config(FieldKind::kOccupancy));
  disent::testing::jitter(m, 41);
  const LossConfig cfg;
  const Tensor<double> F1 = random_features(1, 42), F2 = random_features(1, 43);
  const SampleBatch x1 = draw(example(0), FieldKind::kOccupancy, 20, 7);
  const SampleBatch x2 = draw(example(1), FieldKind::kOccupancy, 20, 8);
  const StepLoss s = disentangle_loss(m, F1, F2, {Attribute::kShape}, {&x1}, {&x2}, cfg, false);

  // Independent assembly from the public model and loss functions.
  const LatentCodes<double> c1 = m.encode(F1), c2 = m.encode(F2);
  LatentCodes<double> c21 = c2, c12 = c1;
  c21.code[1] = c1.code[1];
  c12.code[1] = c2.code[1];
  const Tensor<double> p1 = m.decode(c1), p2 = m.decode(c2), p21 = m.decode(c21),
                       p12 = m.decode(c12);
  const double feat = feat_loss(F1, F2, PrimedMaps<double>{{&p1, &p2, &p21, &p12}});
  const double latent = latent_loss(c1, c2, Attribute::kShape);
  double recon = 0.0;
  const std::array<const Tensor<double>*, 4> maps = {&p1, &p2, &p21, &p12};
  const std::array<const SampleBatch*, 4> gt = {&x1, &x2, &x1, &x2};
  for (int k = 0; k < 4; ++k) {
    SurfaceQuery<double> q;
    q.x.resize(3, gt[k]->size());
    q.image.assign(gt[k]->size(), 0);
    for (int i = 0; i < gt[k]->size(); ++i) q.x.col(i) = gt[k]->points[i];
    recon += recon_loss(m.predict_surface(*maps[k], q, false), 0, *gt[k], cfg).total;
  }
  CHECK(s.feat == doctest::Approx(feat).epsilon(1e-12));
  CHECK(s.latent == doctest::Approx(latent).epsilon(1e-12));
  CHECK(s.recon == doctest::Approx(recon).epsilon(1e-12));
}

TEST_CASE("rmsprop update") {
  nn::Param<float> p;
  p.value = Mat<float>::Constant(1, 2, 1.0f);
  p.grad = Mat<float>::Zero(1, 2);
  p.grad(0, 0) = 0.5f;
  p.grad(0, 1) = -2.0f;
  RmsProp opt({{"p", &p}}, 0.99, 1e-8);
  opt.step(1e-2);
  // First step: v = 0.01 g^2, so the update is lr * g / (0.1 |g|) = 0.1 sign(g).
  CHECK(p.value(0, 0) == doctest::Approx(0.9).epsilon(1e-5));
  CHECK(p.value(0, 1) == doctest::Approx(1.1).epsilon(1e-5));
  CHECK(opt.state().at("p")(0, 1) == doctest::Approx(0.04).epsilon(1e-6));
  CHECK_THROWS_AS(RmsProp({{"p", &p}}, 1.0, 1e-8), ConfigError);
}

TEST_CASE("train config validation and schedule") {
  TrainConfig c;
  c.validate();
  CHECK(c.lr_at(1) == 1e-4);
  CHECK(c.lr_at(150) == 1e-4);
  CHECK(c.lr_at(151) == 1e-5);
  c.stage = Stage::kDisentangle;
  CHECK(c.lr_at(300) == 1e-4);

  const nlohmann::json j = c;
  const TrainConfig back = j.get<TrainConfig>();
  CHECK(back.hash() == c.hash());

  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.loss.mode = FieldKind::kSdf;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.optimizer.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.model.mode = bad.loss.mode = FieldKind::kSdf;
  bad.samples_per_image = 1004;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
