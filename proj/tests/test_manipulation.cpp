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

#include <algorithm>

#include "disent/dataset.hpp"
#include "disent/error.hpp"
#include "disent/hash.hpp"
#include "disent/manipulation.hpp"
#include "fd.hpp"

using namespace disent;
using nlohmann::json;

namespace {

nn::Param<float>& param(Model<float>& m, const std::string& name) {
  for (auto& [n, p] : m.params()) {
    if (n == name) return *p;
  }
  FAIL("no parameter " << name);
  throw 0;
}

bool same_bits(const Mat<float>& a, const Mat<float>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::equal(a.data(), a.data() + a.size(), b.data());
}

bool same_codes(const Codes& a, const Codes& b) {
  for (int k = 0; k < 3; ++k) {
    if (!same_bits(a.code[k], b.code[k])) return false;
  }
  return true;
}

// An untrained SDF model whose output bias is shifted so the self field of
// image a crosses zero, giving nonempty meshes.
struct Fixture {
  Model<float> model{disent::testing::tiny_config(FieldKind::kSdf)};
  RenderedExample a, b;

  Fixture() {
    disent::testing::jitter(model, 11);
    FigureParams pb;
    pb.pose.left_arm += 0.5;
    pb.garment.length = 0.7;
    a = build_example(FigureParams{}, 32, 48, 1);
    b = build_example(pb, 32, 48, 2);
    ScalarFieldGrid g =
        evaluate_lattice(model, model.decode(encode_image(model, a.image)), 32);
    std::vector<float> v = g.values;
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    param(model, "g.out.bias").value(0, 0) -= v[v.size() / 2];
  }
  std::map<std::string, const Image*> images() const {
    return {{"a", &a.image}, {"b", &b.image}};
  }
};

}  // namespace

TEST_CASE("code swaps are exact") {
  Fixture fx;
  const Codes ca = encode_image(fx.model, fx.a.image);
  const Codes cb = encode_image(fx.model, fx.b.image);
  for (Attribute attr : {Attribute::kPose, Attribute::kShape, Attribute::kGarment}) {
    const int k = static_cast<int>(attr);
    auto [self1, self2] = swap_codes(ca, ca, attr);
    CHECK(same_codes(self1, ca));
    CHECK(same_codes(self2, ca));

    auto [ab, ba] = swap_codes(ca, cb, attr);
    CHECK(same_bits(ab.code[k], cb.code[k]));
    CHECK(same_bits(ba.code[k], ca.code[k]));
    for (int o = 0; o < 3; ++o) {
      if (o == k) continue;
      CHECK(same_bits(ab.code[o], ca.code[o]));
      CHECK(same_bits(ba.code[o], cb.code[o]));
    }
    auto [a2, b2] = swap_codes(ab, ba, attr);
    CHECK(same_codes(a2, ca));
    CHECK(same_codes(b2, cb));
    CHECK(code_hash(a2) == code_hash(ca));
  }
  CHECK_THROWS_AS(swap_codes(ca, Codes{}, Attribute::kPose), ShapeError);
}

TEST_CASE("interpolation endpoints are exact") {
  Fixture fx;
  const Codes ca = encode_image(fx.model, fx.a.image);
  const Codes cb = encode_image(fx.model, fx.b.image);
  for (Attribute attr : {Attribute::kPose, Attribute::kShape, Attribute::kGarment}) {
    CHECK(same_codes(interpolate_codes(ca, cb, attr, 0.0), ca));
    CHECK(same_codes(interpolate_codes(ca, cb, attr, 1.0), swap_codes(ca, cb, attr).first));
    const Codes mid = interpolate_codes(ca, cb, attr, 0.5);
    const int k = static_cast<int>(attr);
    const Mat<float> expect = 0.5f * ca.code[k] + 0.5f * cb.code[k];
    CHECK((mid.code[k] - expect).cwiseAbs().maxCoeff() <= 1e-7f);
  }
  CHECK_THROWS_AS(interpolate_codes(ca, cb, Attribute::kPose, -0.1), InvalidArgument);
  CHECK_THROWS_AS(interpolate_codes(ca, cb, Attribute::kPose, 1.5), InvalidArgument);

  const auto steps = interpolate(fx.a.image, fx.b.image, Attribute::kPose, 3, fx.model, 32);
  REQUIRE(steps.size() == 3);
  CHECK(same_codes(steps.front().codes, ca));
  CHECK(same_codes(steps.back().codes, swap_codes(ca, cb, Attribute::kPose).first));
  CHECK(steps[1].provenance.at("weight").get<double>() == 0.5);
  const Reconstruction self = reconstruct_self(fx.a.image, fx.model, 32);
  CHECK(steps.front().recon.field.values == self.field.values);
  CHECK_THROWS_AS(interpolate(fx.a.image, fx.b.image, Attribute::kPose, 1, fx.model, 32),
                  InvalidArgument);
}

TEST_CASE("recombining one image reproduces its self reconstruction") {
  Fixture fx;
  EditSpec spec = json{{"pose", "a"}, {"shape", "a"}, {"garment", "a"}}.get<EditSpec>();
  const EditResult r = recombine(spec, fx.images(), fx.model, 32);
  const Reconstruction self = reconstruct_self(fx.a.image, fx.model, 32);
  CHECK(r.recon.field.values == self.field.values);
  CHECK(r.recon.mesh.faces.size() == self.mesh.faces.size());
  CHECK(same_codes(r.codes, encode_image(fx.model, fx.a.image)));

  // pose from b, everything else from a, is the swap's a_from_b.
  spec = json{{"pose", "b"}, {"shape", "a"}, {"garment", "a"}}.get<EditSpec>();
  const EditResult mixed = recombine(spec, fx.images(), fx.model, 32);
  const SwapResult sw = swap_reconstruct(fx.a.image, fx.b.image, Attribute::kPose, fx.model, 32);
  CHECK(mixed.recon.field.values == sw.a_from_b.field.values);
  CHECK(same_codes(mixed.codes, sw.codes_a));
}

TEST_CASE("edit spec json and validation") {
  const json j = json::parse(
      R"({"pose":"b","shape":"a","garment":{"sources":["a","b"],"weight":0.25}})");
  const EditSpec s = j.get<EditSpec>();
  REQUIRE(s.sources.size() == 3);
  CHECK(s.sources.at(Attribute::kPose).ids == std::vector<std::string>{"b"});
  CHECK(s.sources.at(Attribute::kGarment).ids.size() == 2);
  CHECK(s.sources.at(Attribute::kGarment).weight == 0.25);
  CHECK_NOTHROW(s.validate());
  const EditSpec back = json(s).get<EditSpec>();
  CHECK(json(back) == json(s));

  EditSpec missing = s;
  missing.sources.erase(Attribute::kShape);
  CHECK_THROWS_AS(missing.validate(), InvalidArgument);
  EditSpec heavy = s;
  heavy.sources[Attribute::kGarment].weight = 1.5;
  CHECK_THROWS_AS(heavy.validate(), InvalidArgument);
  EditSpec three = s;
  three.sources[Attribute::kPose].ids = {"a", "b", "a"};
  CHECK_THROWS_AS(three.validate(), InvalidArgument);
  CHECK_THROWS(json::parse(R"({"colour":"a"})").get<EditSpec>());

  Fixture fx;
  EditSpec unknown = s;
  unknown.sources[Attribute::kPose].ids = {"zzz"};
  CHECK_THROWS_AS(recombine_codes(unknown, fx.images(), fx.model), InvalidArgument);
}

TEST_CASE("swap provenance names sources and code hashes") {
  Fixture fx;
  const SwapResult r =
      swap_reconstruct(fx.a.image, fx.b.image, Attribute::kShape, fx.model, 32, "left", "right");
  const json& p = r.provenance;
  CHECK(p.at("operation") == "swap");
  CHECK(p.at("attribute") == "shape");
  CHECK(p.at("sources").at("a") == "left");
  CHECK(p.at("sources").at("b") == "right");
  CHECK(p.at("grid_res") == 32);
  CHECK(p.at("codes").at("a").at("hash") == hex64(code_hash(encode_image(fx.model, fx.a.image))));
  CHECK(p.at("outputs").at("a_from_b").at("hash") == hex64(code_hash(r.codes_a)));
}

TEST_CASE("direct reconstruction is deterministic") {
  Fixture fx;
  const Reconstruction r1 = reconstruct_direct(fx.a.image, fx.model, 32);
  const Reconstruction r2 = reconstruct_direct(fx.a.image, fx.model, 32);
  CHECK(r1.field.values == r2.field.values);
  CHECK(r1.mesh.vertices == r2.mesh.vertices);
  CHECK(r1.mesh.faces == r2.mesh.faces);
}

TEST_CASE("reconstruction errors") {
  Fixture fx;
  CHECK_THROWS_AS(reconstruct_self(fx.a.image, fx.model, 16), InvalidArgument);
  param(fx.model, "g.out.bias").value(0, 0) += 100.0f;
  try {
    reconstruct_self(fx.a.image, fx.model, 32);
    FAIL("expected an empty surface");
  } catch (const EmptySurfaceError& e) {
    CHECK(e.min > 0.0);
  }
}
