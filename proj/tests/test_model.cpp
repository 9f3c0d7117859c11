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
#include "disent/model.hpp"
#include "fd.hpp"

using namespace disent;
using disent::testing::random_images;
using disent::testing::random_query;
using disent::testing::rel_err;
using disent::testing::tiny_config;

TEST_CASE("default configuration shapes") {
  ModelConfig cfg;
  cfg.g_width = 32;  // keep the test light; g does not affect these shapes
  cfg.g_blocks = 1;
  const Model<float> m(cfg);
  const Tensor<float> img = random_images<float>(2, 64, 1);
  const Tensor<float> F = m.extract_features(img);
  CHECK(F.n == 2);
  CHECK(F.h == 16);
  CHECK(F.w == 16);
  CHECK(F.c == 64);
  const LatentCodes<float> codes = m.encode(F);
  for (int a = 0; a < 3; ++a) {
    CHECK(codes.code[a].rows() == 128);
    CHECK(codes.code[a].cols() == 2);
  }
  const Tensor<float> R = m.decode(codes);
  CHECK(R.same_shape(F));

  // Repeated calls are pure.
  CHECK(m.extract_features(img).data == F.data);
  CHECK(m.encode(F).code[1] == codes.code[1]);

  // Swapped codes decode to the same shape.
  LatentCodes<float> swapped = codes;
  swapped.code[0].col(0) = codes.code[0].col(1);
  CHECK(m.decode(swapped).same_shape(F));

  CHECK_THROWS_AS(m.extract_features(random_images<float>(1, 32, 1)), ShapeError);
  LatentCodes<float> bad = codes;
  bad.code[1] = Mat<float>::Zero(7, 2);
  CHECK_THROWS_AS(m.decode(bad), ShapeError);
}

TEST_CASE("ablation latent lengths keep theta, beta, gamma order") {
  ModelConfig cfg;
  cfg.g_width = 16;
  cfg.g_blocks = 1;
  cfg.latent = {128, 16, 128};
  const Model<float> m(cfg);
  const auto codes = m.encode(m.extract_features(random_images<float>(1, 64, 2)));
  CHECK(codes.code[0].rows() == 128);
  CHECK(codes.code[1].rows() == 16);
  CHECK(codes.code[2].rows() == 128);
  CHECK(codes.concatenated().rows() == 272);
}

TEST_CASE("positional encoding") {
  const Col<double> z = positional_encode(Vec3::Zero(), 6);
  REQUIRE(z.size() == 39);
  for (int i = 0; i < 3; ++i) CHECK(z[i] == 0.0);
  for (int k = 0; k < 6; ++k) {
    for (int c = 0; c < 3; ++c) {
      CHECK(z[3 + 6 * k + c] == 0.0);
      CHECK(z[6 + 6 * k + c] == 1.0);
    }
  }
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  const double h = 1e-6;
  for (int t = 0; t < 50; ++t) {
    const Vec3 x(u(rng), u(rng), u(rng));
    Mat<double> J;
    positional_encode(x, 6, &J);
    for (int c = 0; c < 3; ++c) {
      Vec3 e = Vec3::Zero();
      e[c] = h;
      const Col<double> fd = (positional_encode(x + e, 6) - positional_encode(x - e, 6)) / (2 * h);
      // Absolute error; entries scale with 2^k pi.
      CHECK((fd - J.col(c)).cwiseAbs().maxCoeff() < 1e-6 * 32 * 4);
      CHECK((fd - J.col(c)).cwiseAbs().maxCoeff() / J.col(c).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("pixel-aligned lookup") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  Tensor<double> F(2, 3, 8, 8);
  for (Eigen::Index i = 0; i < F.data.size(); ++i) F.data.data()[i] = nd(rng);

  SUBCASE("grid nodes return the node vector") {
    for (int row = 0; row < 8; ++row) {
      for (int col = 0; col < 8; ++col) {
        // Texel centre (col + 0.5, row + 0.5) in feature pixels.
        const double x1 = (col + 0.5) / 8.0 * 2.0 - 1.0;
        const double x2 = 1.0 - (row + 0.5) / 8.0 * 2.0;
        bool clamped = true;
        const Col<double> v = pixel_aligned_feature(F, 1, Vec3(x1, x2, 0.3), &clamped);
        CHECK_FALSE(clamped);
        const Col<double> node = F.data.col((1 * 8 + row) * 8 + col);
        CHECK((v - node).cwiseAbs().maxCoeff() < 1e-12);
      }
    }
  }
  SUBCASE("constant map") {
    Tensor<double> C(1, 3, 8, 8);
    C.data.row(0).setConstant(0.25);
    C.data.row(1).setConstant(-2.0);
    C.data.row(2).setConstant(7.0);
    std::uniform_real_distribution<double> u(-1.2, 1.2);
    for (int t = 0; t < 100; ++t) {
      const Col<double> v = pixel_aligned_feature(C, 0, Vec3(u(rng), u(rng), u(rng)));
      CHECK(v[0] == doctest::Approx(0.25));
      CHECK(v[1] == doctest::Approx(-2.0));
      CHECK(v[2] == doctest::Approx(7.0));
    }
  }
  SUBCASE("in-plane derivative matches finite differences") {
    std::uniform_real_distribution<double> u(-0.85, 0.85);
    const double h = 1e-6;
    int checked = 0;
    while (checked < 100) {
      const Vec3 x(u(rng), u(rng), u(rng));
      // Stay away from texel-centre lines where the bilinear map has kinks.
      const double px = (x.x() + 1) * 4 - 0.5, py = (1 - (x.y() + 1) / 2) * 8 - 0.5;
      if (std::abs(px - std::round(px)) < 1e-3 || std::abs(py - std::round(py)) < 1e-3) continue;
      Col<double> d1, d2;
      pixel_aligned_feature(F, 0, x, nullptr, &d1, &d2);
      const Vec3 e1(h, 0, 0), e2(0, h, 0);
      const Col<double> f1 =
          (pixel_aligned_feature(F, 0, x + e1) - pixel_aligned_feature(F, 0, x - e1)) / (2 * h);
      const Col<double> f2 =
          (pixel_aligned_feature(F, 0, x + e2) - pixel_aligned_feature(F, 0, x - e2)) / (2 * h);
      for (int c = 0; c < 3; ++c) {
        CHECK(rel_err(d1[c], f1[c], 1e-6) < 1e-3);
        CHECK(rel_err(d2[c], f2[c], 1e-6) < 1e-3);
      }
      ++checked;
    }
  }
  SUBCASE("outside projections clamp and are flagged") {
    bool clamped = false;
    const Col<double> v = pixel_aligned_feature(F, 0, Vec3(1.4, 0.0, 0.0), &clamped);
    CHECK(clamped);
    const Col<double> edge = pixel_aligned_feature(F, 0, Vec3(1.0 - 1.0 / 8.0, 0.0, 0.0));
    CHECK((v - edge).cwiseAbs().maxCoeff() < 1e-12);
    Col<double> d1;
    pixel_aligned_feature(F, 0, Vec3(1.4, 0.0, 0.0), nullptr, &d1);
    CHECK(d1.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("surface predictor outputs") {
  for (FieldKind mode : {FieldKind::kOccupancy, FieldKind::kSdf}) {
    ModelConfig cfg;
    cfg.mode = mode;
    const Model<float> m(cfg);
    const Tensor<float> F = m.extract_features(random_images<float>(2, 64, 6));
    const auto q = random_query<float>(1000, 2, 7, 1.0);
    const SurfaceOutput<float> out = m.predict_surface(F, q, false);
    REQUIRE(out.value.size() == 1000);
    for (int i = 0; i < 1000; ++i) {
      CHECK(std::isfinite(out.value(i)));
      if (mode == FieldKind::kOccupancy) {
        CHECK(out.value(i) > 0.0f);
        CHECK(out.value(i) < 1.0f);
      }
    }
  }
}

TEST_CASE("x-gradient of the surface predictor matches finite differences") {
  for (FieldKind mode : {FieldKind::kSdf, FieldKind::kOccupancy}) {
    CAPTURE(static_cast<int>(mode));
    ModelConfig cfg = tiny_config(mode);
    Model<double> m(cfg);
    disent::testing::jitter(m, 8);
    const Tensor<double> F = m.extract_features(random_images<double>(2, 32, 9));
    const auto q = random_query<double>(300, 2, 10);
    const SurfaceOutput<double> out = m.predict_surface(F, q, true);
    const double h = 1e-4;
    int checked = 0;
    double worst = 0.0;
    for (int i = 0; i < q.size() && checked < 100; ++i) {
      Vec3 fd;
      bool smooth = true;
      for (int k = 0; k < 3; ++k) {
        SurfaceQuery<double> qp, qm;
        qp.x = q.x.col(i);
        qp.image = {q.image[i]};
        qm = qp;
        qp.x(k, 0) += h;
        qm.x(k, 0) -= h;
        smooth = smooth && disent::testing::same_piece(m, F, qp, qm);
        fd[k] = (m.predict_surface(F, qp, false).value(0) -
                 m.predict_surface(F, qm, false).value(0)) / (2 * h);
      }
      if (!smooth) continue;
      const Vec3 ad = out.grad.col(i);
      worst = std::max(worst, (ad - fd).norm() / std::max({ad.norm(), fd.norm(), 1e-9}));
      ++checked;
    }
    CHECK(checked == 100);
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("extractor parameter gradient matches finite differences") {
  ModelConfig cfg = tiny_config(FieldKind::kOccupancy);
  Model<double> m(cfg);
  disent::testing::jitter(m, 11);
  const Tensor<double> img = random_images<double>(2, 32, 12);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd;
  Tensor<double> probe(2, cfg.feature_channels, 8, 8);
  for (Eigen::Index i = 0; i < probe.data.size(); ++i) probe.data.data()[i] = nd(rng);
  auto readout = [&]() { return (m.extract_features(img).data.array() * probe.data.array()).sum(); };

  FeatureExtractor<double>::Cache cache;
  for (auto& [n, p] : m.params()) p->zero_grad();
  m.f.forward(img, &cache);
  m.f.backward(cache, probe);

  auto params = m.params(Part::kExtractor);
  std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
  const double h = 1e-6;
  for (int t = 0; t < 20; ++t) {
    auto& [name, p] = params[pick_param(rng)];
    std::uniform_int_distribution<Eigen::Index> pick(0, p->value.size() - 1);
    const Eigen::Index i = pick(rng);
    const double saved = p->value.data()[i];
    p->value.data()[i] = saved + h;
    const double up = readout();
    p->value.data()[i] = saved - h;
    const double down = readout();
    p->value.data()[i] = saved;
    CAPTURE(name);
    CHECK(rel_err(p->grad.data()[i], (up - down) / (2 * h)) < 1e-3);
  }
}

TEST_CASE("parameter checksum tracks values") {
  Model<float> m(tiny_config(FieldKind::kOccupancy));
  const auto before = param_checksum(m.params(Part::kExtractor));
  CHECK(param_checksum(m.params(Part::kExtractor)) == before);
  m.params(Part::kExtractor)[0].second->value(0, 0) += 1.0f;
  CHECK(param_checksum(m.params(Part::kExtractor)) != before);
}

TEST_CASE("lattice evaluation covers the cube") {
  ModelConfig cfg = tiny_config(FieldKind::kSdf);
  const Model<float> m(cfg);
  const Tensor<float> F = m.extract_features(random_images<float>(1, 32, 14));
  const ScalarFieldGrid grid = evaluate_lattice(m, F, 12);
  CHECK(grid.values.size() == 12 * 12 * 12);
  CHECK_NOTHROW(grid.validate());
  SurfaceQuery<float> q;
  q.x = grid.node(3, 5, 7).cast<float>();
  q.image = {0};
  CHECK(m.predict_surface(F, q, false).value(0) == grid.values[grid.index(3, 5, 7)]);
}
