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
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include <json.hpp>

#include "disent/model.hpp"

namespace disent {

enum class Stage { kPretrain = 0, kDisentangle = 1 };
const char* stage_name(Stage s);
Stage parse_stage(const std::string& name);  ///< "pretrain" | "disentangle"

/// RMSprop: v = alpha v + (1 - alpha) g^2, p -= lr g / (sqrt(v) + eps).
class RmsProp {
 public:
  RmsProp(nn::ParamRefs<float> params, double alpha, double eps);
  void step(double lr);
  void zero_grad();
  const nn::ParamRefs<float>& params() const { return params_; }
  std::map<std::string, Mat<float>>& state() { return square_avg_; }
  double alpha() const { return alpha_; }
  double eps() const { return eps_; }

 private:
  nn::ParamRefs<float> params_;
  std::map<std::string, Mat<float>> square_avg_;
  double alpha_, eps_;
};

/// Binary layout: "DSCK", u32 version, u64 header length, JSON header, then
/// the f32 tensors listed in header["tensors"] in order (column-major).
struct Checkpoint {
  nlohmann::json header;
  std::unique_ptr<Model<float>> model;
  std::map<std::string, Mat<float>> optimizer_state;  ///< keyed by parameter name

  Stage stage() const;
  int epoch() const;
};

/// `extra` is merged into the header (train config, epoch, optimizer constants).
void save_checkpoint(const std::filesystem::path& path, Model<float>& model,
                     const nlohmann::json& extra,
                     const std::map<std::string, Mat<float>>* optimizer_state = nullptr);

/// Throws IoError on a bad container and ShapeError when a stored tensor does
/// not match the shape implied by the stored model config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace disent
