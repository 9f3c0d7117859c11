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
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "disent/image.hpp"
#include "disent/mesh.hpp"
#include "disent/model.hpp"
#include "disent/scalar_grid.hpp"

namespace disent {

/// Codes of a single image, one column per block.
using Codes = LatentCodes<float>;

Tensor<float> image_features(const Model<float>& model, const Image& image);
Codes encode_image(const Model<float>& model, const Image& image);

/// FNV-1a over the float bytes of each block in (theta, beta, gamma) order.
std::uint64_t code_hash(const Codes& codes);

/// a takes b's code for `attr` and vice versa. Both inputs must hold one column.
std::pair<Codes, Codes> swap_codes(const Codes& a, const Codes& b, Attribute attr);

/// a's codes with block `attr` replaced by (1 - w) * a + w * b. w = 0 and
/// w = 1 return the endpoint blocks exactly.
Codes interpolate_codes(const Codes& a, const Codes& b, Attribute attr, double w);

/// Lattice field plus its mesh at the mode's iso level.
struct Reconstruction {
  ScalarFieldGrid field;
  TriangleMesh mesh;
  double iso = 0.0;
};

/// Decode (when given codes) then lattice + marching cubes. Throws
/// EmptySurfaceError with the field range when there is no crossing.
Reconstruction reconstruct_from_features(const Model<float>& model, const Tensor<float>& F,
                                         int grid_res);
Reconstruction reconstruct_from_codes(const Model<float>& model, const Codes& codes,
                                      int grid_res);

/// extract -> lattice -> mesh, bypassing the encoder-decoder.
Reconstruction reconstruct_direct(const Image& image, const Model<float>& model, int grid_res);
/// extract -> encode -> decode -> lattice -> mesh.
Reconstruction reconstruct_self(const Image& image, const Model<float>& model, int grid_res);

struct SwapResult {
  Reconstruction a_from_b;  ///< a with b's code for the attribute
  Reconstruction b_from_a;
  Codes codes_a, codes_b;   ///< after the swap
  nlohmann::json provenance;
};

SwapResult swap_reconstruct(const Image& img_a, const Image& img_b, Attribute attr,
                            const Model<float>& model, int grid_res,
                            const std::string& id_a = "a", const std::string& id_b = "b");

/// Per attribute: one source id, or two ids plus a weight in [0, 1].
struct EditSpec {
  struct Source {
    std::vector<std::string> ids;
    double weight = 0.0;
  };
  std::map<Attribute, Source> sources;

  void validate() const;  ///< throws InvalidArgument
};

void to_json(nlohmann::json& j, const EditSpec& s);
void from_json(const nlohmann::json& j, EditSpec& s);

/// Gathers each attribute's code from its source(s). `images` maps ids to images.
Codes recombine_codes(const EditSpec& spec, const std::map<std::string, const Image*>& images,
                      const Model<float>& model);

struct EditResult {
  Reconstruction recon;
  Codes codes;
  nlohmann::json provenance;
};

EditResult recombine(const EditSpec& spec, const std::map<std::string, const Image*>& images,
                     const Model<float>& model, int grid_res);

/// `steps` >= 2 meshes from a (w = 0) to b (w = 1) along attribute `attr`.
std::vector<EditResult> interpolate(const Image& img_a, const Image& img_b, Attribute attr,
                                    int steps, const Model<float>& model, int grid_res,
                                    const std::string& id_a = "a", const std::string& id_b = "b");

}  // namespace disent
