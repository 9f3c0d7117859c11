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
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "disent/checkpoint.hpp"
#include "disent/dataset.hpp"
#include "disent/losses.hpp"
#include "disent/model.hpp"
#include "disent/sampling.hpp"

namespace disent {

struct OptimizerConfig {
  double lr = 1e-4;
  double lr_after = 1e-5;  ///< pretraining only
  int drop_epoch = 150;    ///< last epoch at `lr`
  double alpha = 0.99;
  double eps = 1e-8;
};

struct ValidationConfig {
  int every = 5;        ///< epochs; the final epoch is always validated
  int examples = 16;    ///< distinct validation-split examples, 0 = all
  int grid_res = 32;
  int surface_samples = 2000;
};

struct TrainConfig {
  Stage stage = Stage::kPretrain;
  ModelConfig model;
  LossConfig loss;
  OptimizerConfig optimizer;
  ValidationConfig validation;
  int batch_size = 8;  ///< images per step; a stage-2 step holds batch_size / 2 pairs
  int samples_per_image = 1000;
  double sigma = kDefaultSigma;
  /// Occupancy only: share of each image's points drawn uniformly in the
  /// [-1,1]^3 box instead of around the surface. Without them the field far
  /// from the surface is never supervised.
  double occupancy_uniform_fraction = 0.5;
  int epochs = 60;
  std::uint64_t seed = 1;
  int checkpoint_every = 10;
  int max_train_items = 0;  ///< cap on training images (pretrain) or pairs (stage 2); 0 = all

  void validate() const;  ///< throws ConfigError
  double lr_at(int epoch) const;  ///< 1-based epoch
  std::uint64_t hash() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Mean loss components of one step (or averaged over an epoch).
struct StepLoss {
  double total = 0.0;
  double recon = 0.0;
  double ls = 0.0, igr = 0.0, off = 0.0;
  double feat = 0.0, latent = 0.0;
};

/// Direct reconstruction objective over a batch: mean over images of the
/// reconstruction loss. Accumulates parameter gradients of f and g when asked.
template <typename T>
StepLoss pretrain_loss(Model<T>& model, const Tensor<T>& images,
                       const std::vector<const SampleBatch*>& batches, const LossConfig& cfg,
                       bool backward);

/// One stage-2 batch of P pairs. F1 and F2 hold the frozen features of the
/// first and second members (P images each). The total is the weighted sum of
/// the pair-averaged feature, latent and reconstruction terms. Gradients reach
/// the heads, decoder and g only.
template <typename T>
StepLoss disentangle_loss(Model<T>& model, const Tensor<T>& F1, const Tensor<T>& F2,
                          const std::vector<Attribute>& varying,
                          const std::vector<const SampleBatch*>& batches1,
                          const std::vector<const SampleBatch*>& batches2, const LossConfig& cfg,
                          bool backward);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  StepLoss loss;  ///< mean over the epoch's steps
  int steps = 0;
  double seconds = 0.0;
  std::optional<double> val_chamfer;  ///< median over the validation subset
  int val_failures = 0;               ///< empty level sets
};

nlohmann::json epoch_json(const EpochRecord& e);

struct TrainReport {
  Stage stage = Stage::kPretrain;
  std::string config_hash;
  std::vector<EpochRecord> epochs;
  std::vector<StepLoss> steps;  ///< full per-step trajectory
  std::vector<std::string> checkpoints;
  std::string best_checkpoint;
  int best_epoch = 0;
  double best_val = 0.0;
  double wall_seconds = 0.0;
  std::string f_checksum_before, f_checksum_after;

  nlohmann::json to_json() const;
  /// FNV-1a over the per-step totals and components.
  std::uint64_t trajectory_hash() const;
};

struct TrainOptions {
  std::filesystem::path out_dir;        ///< empty: no files written
  std::filesystem::path resume;         ///< checkpoint to continue from
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  std::unique_ptr<Model<float>> model;  ///< best validated parameters
  std::unique_ptr<Model<float>> last;   ///< parameters after the final epoch
  TrainReport report;
};

/// Stage 1: f and g on direct reconstruction of the training split.
TrainResult pretrain(const Dataset& data, const TrainConfig& cfg, const TrainOptions& opts = {});

/// Stage 2: heads, decoder and g on the training pairs with f frozen. The
/// pretrained model's config must agree with cfg.model except for the latent
/// lengths, which may differ (heads and decoder are then freshly initialized).
TrainResult train_disentangle(const Dataset& data, const Model<float>& pretrained,
                              const TrainConfig& cfg, const TrainOptions& opts = {});

/// Model for stage 2: f and g copied from `pretrained`, the rest initialized
/// from cfg.model. Throws ConfigError when the modes differ.
std::unique_ptr<Model<float>> stage2_model(const Model<float>& pretrained, const ModelConfig& cfg);

/// Median chamfer of direct (pretrain) or self (stage 2) reconstructions.
struct Validation {
  double median_chamfer = 0.0;
  int failures = 0;
  int count = 0;
};
Validation validate_model(const Model<float>& model, Stage stage,
                          const std::vector<const RenderedExample*>& examples,
                          const ValidationConfig& cfg, std::uint64_t seed);

}  // namespace disent
