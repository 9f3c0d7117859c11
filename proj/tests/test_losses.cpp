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
#include <random>

#include "disent/error.hpp"
#include "disent/losses.hpp"
#include "fd.hpp"

using namespace disent;

namespace {

SampleBatch plane_batch(int n_on, int n_off, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  SampleBatch b;
  b.kind = FieldKind::kSdf;
  for (int i = 0; i < n_on + n_off; ++i) {
    const bool on = i < n_on;
    const Vec3 p(u(rng), u(rng), on ? 0.0 : u(rng));
    b.points.push_back(p);
    b.roles.push_back(on ? SampleRole::kOnSurface : SampleRole::kOffUniform);
    b.occupancy.push_back(p.z() < 0.0 ? 1.0f : 0.0f);
    b.sdf.push_back(static_cast<float>(p.z()));
    b.normals.push_back(on ? Vec3(0, 0, 1) : Vec3::Zero());
  }
  return b;
}

// The exact plane field g(x) = x3 with gradient (0, 0, 1).
SurfaceOutput<double> plane_prediction(const SampleBatch& b) {
  SurfaceOutput<double> out;
  out.value.resize(b.size());
  out.grad.resize(3, b.size());
  for (int i = 0; i < b.size(); ++i) {
    out.value(i) = b.points[i].z();
    out.grad.col(i) = Vec3(0, 0, 1);
  }
  return out;
}

SampleBatch occ_batch(int n) {
  SampleBatch b;
  b.kind = FieldKind::kOccupancy;
  for (int i = 0; i < n; ++i) {
    b.points.push_back(Vec3::Zero());
    b.roles.push_back(i % 2 ? SampleRole::kOccInside : SampleRole::kOccOutside);
    b.occupancy.push_back(i % 2 ? 1.0f : 0.0f);
    b.sdf.push_back(i % 2 ? -0.1f : 0.1f);
    b.normals.push_back(Vec3::Zero());
  }
  return b;
}

Tensor<double> random_map(std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Tensor<double> t(1, 4, 4, 4);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = nd(rng);
  return t;
}

LatentCodes<double> random_codes(std::mt19937_64& rng, std::array<int, 3> len) {
  std::normal_distribution<double> nd;
  LatentCodes<double> c;
  for (int a = 0; a < 3; ++a) {
    c.code[a].resize(len[a], 1);
    for (int i = 0; i < len[a]; ++i) c.code[a](i, 0) = nd(rng);
  }
  return c;
}

}  // namespace

TEST_CASE("occupancy loss witnesses") {
  const SampleBatch b = occ_batch(1000);
  SurfaceOutput<double> exact;
  exact.value.resize(1000);
  for (int i = 0; i < 1000; ++i) exact.value(i) = b.occupancy[i];
  CHECK(recon_loss_occ(exact, 0, b).total == 0.0);

  SurfaceOutput<double> half;
  half.value = Row<double>::Constant(1000, 0.5);
  CHECK(recon_loss_occ(half, 0, b).total == 0.25);
  SurfaceOutput<float> halff;
  halff.value = Row<float>::Constant(1000, 0.5f);
  CHECK(recon_loss_occ(halff, 0, b).total == 0.25);

  LossConfig sdf_cfg;
  sdf_cfg.mode = FieldKind::kSdf;
  CHECK_THROWS_AS(recon_loss(half, 0, b, sdf_cfg), ConfigError);
}

TEST_CASE("sdf loss plane witness") {
  const SampleBatch b = plane_batch(500, 500, 1);
  const LossConfig cfg{FieldKind::kSdf};
  const ReconLoss l = recon_loss_sdf(plane_prediction(b), 0, b, cfg);
  CHECK(std::abs(l.igr) <= 1e-6);
  CHECK(std::abs(l.ls) <= 1e-6);
  CHECK(l.off > 0.0);
  CHECK(l.total == doctest::Approx(cfg.lambda_o * l.off));

  // Occupancy config on an sdf batch is a configuration error.
  CHECK_THROWS_AS(recon_loss(plane_prediction(b), 0, b, LossConfig{}), ConfigError);
}

TEST_CASE("off-surface term arithmetic") {
  SampleBatch b = plane_batch(0, 1, 2);
  SurfaceOutput<double> p;
  p.value = Row<double>::Constant(1, 0.1);
  p.grad = Mat<double>::Zero(3, 1);
  p.grad(2, 0) = 1.0;
  const ReconLoss l = recon_loss_sdf(p, 0, b, LossConfig{FieldKind::kSdf});
  CHECK(l.off == doctest::Approx(std::exp(-10.0)).epsilon(1e-12));
  CHECK(l.off == doctest::Approx(4.54e-5).epsilon(1e-3));
  // |g| large drives the term to zero.
  p.value(0) = 5.0;
  CHECK(recon_loss_sdf(p, 0, b, LossConfig{FieldKind::kSdf}).off < 1e-200);
}

TEST_CASE("sdf loss components are non-negative at random initializations") {
  const RenderedExample ex = build_example(FigureParams{}, 32, 48, 1);
  const SampleBatch b = sample_sdf(ex, 64, kDefaultSigma, 2);
  const LossConfig cfg{FieldKind::kSdf};
  for (int s = 0; s < 100; ++s) {
    ModelConfig mc = disent::testing::tiny_config(FieldKind::kSdf);
    mc.seed = 100 + s;
    const Model<float> m(mc);
    const Tensor<float> F = m.extract_features(disent::testing::random_images<float>(1, 32, s));
    SurfaceQuery<float> q;
    q.x.resize(3, b.size());
    q.image.assign(b.size(), 0);
    for (int i = 0; i < b.size(); ++i) q.x.col(i) = b.points[i].cast<float>();
    const ReconLoss l = recon_loss_sdf(m.predict_surface(F, q, true), 0, b, cfg);
    CHECK(l.ls >= 0.0);
    CHECK(l.igr >= 0.0);
    CHECK(l.off >= 0.0);
  }
}

TEST_CASE("sdf loss names a non-finite point") {
  const SampleBatch b = plane_batch(2, 2, 3);
  SurfaceOutput<double> p = plane_prediction(b);
  p.grad(0, 3) = std::nan("");
  try {
    recon_loss_sdf(p, 0, b, LossConfig{FieldKind::kSdf});
    FAIL("expected a divergence error");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("point 3") != std::string::npos);
  }
}

TEST_CASE("feature loss") {
  std::mt19937_64 rng(4);
  const Tensor<double> F1 = random_map(rng), F2 = random_map(rng);
  PrimedMaps<double> same{{&F1, &F2, &F1, &F2}};
  CHECK(feat_loss(F1, F2, same) == 0.0);

  const Tensor<double> a = random_map(rng), b = random_map(rng), c = random_map(rng),
                       d = random_map(rng);
  // Primed maps in order [F'1, F'2, F'_{2<-d1}, F'_{1<-d2}].
  const double v = feat_loss(F1, F2, PrimedMaps<double>{{&a, &b, &c, &d}});
  CHECK(v > 0.0);
  // Exchanging the pair roles: F'1 <-> F'2 and the cross maps swap.
  const double w = feat_loss(F2, F1, PrimedMaps<double>{{&b, &a, &d, &c}});
  CHECK(v == doctest::Approx(w).epsilon(1e-15));

  PrimedMaps<double> one_off{{&F1, &F2, &F1, &a}};
  CHECK(feat_loss(F1, F2, one_off) > 0.0);
  Tensor<double> wrong(1, 3, 4, 4);
  PrimedMaps<double> bad{{&wrong, &F2, &F1, &F2}};
  CHECK_THROWS_AS(feat_loss(F1, F2, bad), ShapeError);
}

TEST_CASE("latent loss") {
  std::mt19937_64 rng(5);
  const LatentCodes<double> c1 = random_codes(rng, {8, 6, 4});
  CHECK(latent_loss(c1, c1, Attribute::kPose) == 0.0);

  LatentCodes<double> c2 = c1;
  c2.code[0] = random_codes(rng, {8, 6, 4}).code[0];
  CHECK(latent_loss(c1, c2, Attribute::kPose) == 0.0);
  CHECK(latent_loss(c1, c2, Attribute::kShape) > 0.0);

  // A difference of one in every entry of l_beta scores exactly 1; a
  // unit-norm difference scores 1/dim under the mean-square normalization.
  LatentCodes<double> c3 = c1;
  c3.code[1].array() += 1.0;
  CHECK(latent_loss(c1, c3, Attribute::kPose) == doctest::Approx(1.0).epsilon(1e-15));
  LatentCodes<double> c4 = c1;
  c4.code[1](2, 0) += 1.0;
  CHECK(latent_loss(c1, c4, Attribute::kPose) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));

  // Symmetric in the pair order.
  const LatentCodes<double> r = random_codes(rng, {8, 6, 4});
  for (Attribute d : {Attribute::kPose, Attribute::kShape, Attribute::kGarment}) {
    CHECK(latent_loss(c1, r, d) == latent_loss(r, c1, d));
  }
}

TEST_CASE("disentangled reconstruction scores cross maps against the partner") {
  const SampleBatch b1 = occ_batch(10);
  SampleBatch b2 = occ_batch(10);
  for (auto& o : b2.occupancy) o = 1.0f - o;
  // Layout: [F'1 @ X1 | F'2 @ X2 | F'_{2<-d1} @ X1 | F'_{1<-d2} @ X2].
  SurfaceOutput<double> p;
  p.value.resize(40);
  for (int i = 0; i < 10; ++i) {
    p.value(i) = b1.occupancy[i];
    p.value(10 + i) = b2.occupancy[i];
    p.value(20 + i) = b1.occupancy[i];
    p.value(30 + i) = b2.occupancy[i];
  }
  const LossConfig cfg;
  const DisentRecon r = disent_recon_loss(p, {0, 10, 20, 30}, b1, b2, cfg);
  CHECK(r.total == 0.0);

  // F'_{1<-d2} predicting example 1's labels is wrong: its target is X2/M2.
  SurfaceOutput<double> q = p;
  for (int i = 0; i < 10; ++i) q.value(30 + i) = b1.occupancy[i];
  const DisentRecon rq = disent_recon_loss(q, {0, 10, 20, 30}, b1, b2, cfg);
  CHECK(rq.terms[3].total == 1.0);
  CHECK(rq.terms[0].total == 0.0);

  // Additivity.
  SurfaceOutput<double> h;
  h.value = Row<double>::Constant(40, 0.3);
  const DisentRecon rh = disent_recon_loss(h, {0, 10, 20, 30}, b1, b2, cfg);
  double sum = 0.0;
  for (int k = 0; k < 4; ++k) sum += recon_loss_occ(h, 10 * k, k % 2 ? b2 : b1).total;
  CHECK(rh.total == sum);
}

TEST_CASE("weighted total") {
  LossConfig cfg;
  CHECK(disent_total(cfg, 1.5, 2.0, 0.25) == 3.75);
  cfg.w_feat = cfg.w_latent = cfg.w_recon = 0.0;
  CHECK(disent_total(cfg, 1.5, 2.0, 0.25) == 0.0);
  cfg.w_latent = 2.0;
  CHECK(disent_total(cfg, 1.5, 2.0, 0.25) == 4.0);
  CHECK(disent_total(cfg, 1.5, 4.0, 0.25) == 8.0);
  LossConfig bad;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
