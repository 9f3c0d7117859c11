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


#include "disent/manipulation.hpp"

#include <fmt/format.h>

#include "disent/error.hpp"
#include "disent/hash.hpp"
#include "disent/marching_cubes.hpp"

namespace disent {

using nlohmann::json;

namespace {

void check_single(const Codes& c, const char* what) {
  if (c.count() != 1) {
    throw ShapeError(fmt::format("{}: expected codes of one image, got {}", what, c.count()));
  }
}

void check_grid_res(int grid_res) {
  if (grid_res < 32) throw InvalidArgument(fmt::format("grid_res {} < 32", grid_res));
}

json codes_json(const Codes& c) {
  return {{"hash", hex64(code_hash(c))},
          {"lengths", {c.code[0].rows(), c.code[1].rows(), c.code[2].rows()}}};
}

}  // namespace

Tensor<float> image_features(const Model<float>& model, const Image& image) {
  return model.extract_features(images_to_tensor<float>({&image}));
}

Codes encode_image(const Model<float>& model, const Image& image) {
  return model.encode(image_features(model, image));
}

std::uint64_t code_hash(const Codes& codes) {
  Fnv1a h;
  for (const auto& block : codes.code) {
    h.update(block.data(), sizeof(float) * static_cast<std::size_t>(block.size()));
  }
  return h.digest();
}

std::pair<Codes, Codes> swap_codes(const Codes& a, const Codes& b, Attribute attr) {
  check_single(a, "swap_codes");
  check_single(b, "swap_codes");
  const int k = static_cast<int>(attr);
  if (a.code[k].rows() != b.code[k].rows()) throw ShapeError("swap_codes: block length mismatch");
  Codes ab = a, ba = b;
  ab.code[k] = b.code[k];
  ba.code[k] = a.code[k];
  return {ab, ba};
}

Codes interpolate_codes(const Codes& a, const Codes& b, Attribute attr, double w) {
  check_single(a, "interpolate_codes");
  check_single(b, "interpolate_codes");
  if (!(w >= 0.0 && w <= 1.0)) throw InvalidArgument(fmt::format("weight {} outside [0, 1]", w));
  const int k = static_cast<int>(attr);
  if (a.code[k].rows() != b.code[k].rows()) {
    throw ShapeError("interpolate_codes: block length mismatch");
  }
  Codes out = a;
  if (w == 1.0) {
    out.code[k] = b.code[k];
  } else if (w > 0.0) {
    const float wf = static_cast<float>(w);
    out.code[k] = (1.0f - wf) * a.code[k] + wf * b.code[k];
  }
  return out;
}

Reconstruction reconstruct_from_features(const Model<float>& model, const Tensor<float>& F,
                                         int grid_res) {
  check_grid_res(grid_res);
  Reconstruction r;
  r.iso = default_iso(model.config().mode);
  r.field = evaluate_lattice(model, F, grid_res);
  r.mesh = marching_cubes(r.field, r.iso);
  return r;
}

Reconstruction reconstruct_from_codes(const Model<float>& model, const Codes& codes,
                                      int grid_res) {
  check_single(codes, "reconstruct_from_codes");
  return reconstruct_from_features(model, model.decode(codes), grid_res);
}

Reconstruction reconstruct_direct(const Image& image, const Model<float>& model, int grid_res) {
  return reconstruct_from_features(model, image_features(model, image), grid_res);
}

Reconstruction reconstruct_self(const Image& image, const Model<float>& model, int grid_res) {
  return reconstruct_from_codes(model, encode_image(model, image), grid_res);
}

SwapResult swap_reconstruct(const Image& img_a, const Image& img_b, Attribute attr,
                            const Model<float>& model, int grid_res, const std::string& id_a,
                            const std::string& id_b) {
  check_grid_res(grid_res);
  const Codes ca = encode_image(model, img_a);
  const Codes cb = encode_image(model, img_b);
  auto [ab, ba] = swap_codes(ca, cb, attr);
  SwapResult r;
  r.a_from_b = reconstruct_from_codes(model, ab, grid_res);
  r.b_from_a = reconstruct_from_codes(model, ba, grid_res);
  r.provenance = {{"operation", "swap"},
                  {"attribute", attribute_name(attr)},
                  {"sources", {{"a", id_a}, {"b", id_b}}},
                  {"codes", {{"a", codes_json(ca)}, {"b", codes_json(cb)}}},
                  {"outputs", {{"a_from_b", codes_json(ab)}, {"b_from_a", codes_json(ba)}}},
                  {"grid_res", grid_res},
                  {"iso", r.a_from_b.iso}};
  r.codes_a = std::move(ab);
  r.codes_b = std::move(ba);
  return r;
}

void EditSpec::validate() const {
  for (Attribute a : {Attribute::kPose, Attribute::kShape, Attribute::kGarment}) {
    auto it = sources.find(a);
    if (it == sources.end()) {
      throw InvalidArgument(fmt::format("edit spec has no source for {}", attribute_name(a)));
    }
    const Source& s = it->second;
    if (s.ids.empty() || s.ids.size() > 2) {
      throw InvalidArgument(fmt::format("{} needs one or two sources", attribute_name(a)));
    }
    if (!(s.weight >= 0.0 && s.weight <= 1.0)) {
      throw InvalidArgument(fmt::format("{} weight {} outside [0, 1]", attribute_name(a), s.weight));
    }
  }
}

void to_json(json& j, const EditSpec& s) {
  j = json::object();
  for (const auto& [a, src] : s.sources) {
    json e = {{"sources", src.ids}};
    if (src.ids.size() == 2) e["weight"] = src.weight;
    j[attribute_name(a)] = e;
  }
}

void from_json(const json& j, EditSpec& s) {
  s.sources.clear();
  for (const auto& [key, value] : j.items()) {
    EditSpec::Source src;
    if (value.is_string()) {
      src.ids = {value.get<std::string>()};
    } else {
      src.ids = value.at("sources").get<std::vector<std::string>>();
      src.weight = value.value("weight", 0.0);
    }
    s.sources[parse_attribute(key)] = src;
  }
}

Codes recombine_codes(const EditSpec& spec, const std::map<std::string, const Image*>& images,
                      const Model<float>& model) {
  spec.validate();
  std::map<std::string, Codes> cache;
  auto codes_of = [&](const std::string& id) -> const Codes& {
    auto it = cache.find(id);
    if (it != cache.end()) return it->second;
    auto img = images.find(id);
    if (img == images.end() || img->second == nullptr) {
      throw InvalidArgument("edit spec names unknown image " + id);
    }
    return cache.emplace(id, encode_image(model, *img->second)).first->second;
  };
  Codes out;
  for (const auto& [attr, src] : spec.sources) {
    const int k = static_cast<int>(attr);
    const Codes& a = codes_of(src.ids[0]);
    if (src.ids.size() == 1) {
      out.code[k] = a.code[k];
    } else {
      out.code[k] = interpolate_codes(a, codes_of(src.ids[1]), attr, src.weight).code[k];
    }
  }
  return out;
}

EditResult recombine(const EditSpec& spec, const std::map<std::string, const Image*>& images,
                     const Model<float>& model, int grid_res) {
  check_grid_res(grid_res);
  EditResult r;
  r.codes = recombine_codes(spec, images, model);
  r.recon = reconstruct_from_codes(model, r.codes, grid_res);
  r.provenance = {{"operation", "recombine"},
                  {"spec", spec},
                  {"codes", codes_json(r.codes)},
                  {"grid_res", grid_res},
                  {"iso", r.recon.iso}};
  return r;
}

std::vector<EditResult> interpolate(const Image& img_a, const Image& img_b, Attribute attr,
                                    int steps, const Model<float>& model, int grid_res,
                                    const std::string& id_a, const std::string& id_b) {
  if (steps < 2) throw InvalidArgument(fmt::format("interpolation needs >= 2 steps, got {}", steps));
  check_grid_res(grid_res);
  const Codes ca = encode_image(model, img_a);
  const Codes cb = encode_image(model, img_b);
  std::vector<EditResult> out;
  for (int s = 0; s < steps; ++s) {
    const double w = s == steps - 1 ? 1.0 : static_cast<double>(s) / (steps - 1);
    EditResult r;
    r.codes = interpolate_codes(ca, cb, attr, w);
    r.recon = reconstruct_from_codes(model, r.codes, grid_res);
    r.provenance = {{"operation", "interpolate"},
                    {"attribute", attribute_name(attr)},
                    {"sources", {{"a", id_a}, {"b", id_b}}},
                    {"weight", w},
                    {"step", s},
                    {"codes", codes_json(r.codes)},
                    {"grid_res", grid_res},
                    {"iso", r.recon.iso}};
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace disent
