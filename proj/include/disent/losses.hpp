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

#include <array>

#include <json.hpp>

#include "disent/figure.hpp"
#include "disent/model.hpp"
#include "disent/sampling.hpp"

namespace disent {

struct LossConfig {
  FieldKind mode = FieldKind::kOccupancy;
  double lambda_ls = 1.0;
  double lambda_igr = 1.0;
  double lambda_o = 0.1;
  double alpha = 100.0;
  double w_feat = 1.0;
  double w_latent = 1.0;
  double w_recon = 1.0;

  void validate() const;  ///< throws ConfigError
};

void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);

/// One reconstruction term. For occupancy only `total` is set.
struct ReconLoss {
  double total = 0.0;
  double ls = 0.0;
  double igr = 0.0;
  double off = 0.0;

  ReconLoss& operator+=(const ReconLoss& o) {
    total += o.total, ls += o.ls, igr += o.igr, off += o.off;
    return *this;
  }
};

/// The predictions for `batch` occupy columns [offset, offset + batch.size())
/// of `pred`. When `dvalue` (and `dgrad` for sdf) are given, scale * dL/dpred
/// is added into the same columns.
template <typename T>
ReconLoss recon_loss_occ(const SurfaceOutput<T>& pred, Eigen::Index offset,
                         const SampleBatch& batch, T scale = T(1), Row<T>* dvalue = nullptr);

/// Throws DivergenceError naming the point when a gradient is not finite.
template <typename T>
ReconLoss recon_loss_sdf(const SurfaceOutput<T>& pred, Eigen::Index offset,
                         const SampleBatch& batch, const LossConfig& cfg, T scale = T(1),
                         Row<T>* dvalue = nullptr, Mat<T>* dgrad = nullptr);

/// Dispatches on cfg.mode; throws ConfigError when the batch kind differs.
template <typename T>
ReconLoss recon_loss(const SurfaceOutput<T>& pred, Eigen::Index offset,
                     const SampleBatch& batch, const LossConfig& cfg, T scale = T(1),
                     Row<T>* dvalue = nullptr, Mat<T>* dgrad = nullptr);

/// Mean-squared distance of two equally shaped maps; adds scale * dL/da.
template <typename T>
double map_mse(const Tensor<T>& a, const Tensor<T>& target, T scale = T(1),
               Tensor<T>* da = nullptr);

/// The four primed maps of one pair, in the order used throughout:
/// [F'1, F'2, F'_{2<-d1}, F'_{1<-d2}].
template <typename T>
struct PrimedMaps {
  std::array<const Tensor<T>*, 4> maps{};
};

/// |F1-F'1|^2 + |F2-F'2|^2 + |F1-F'_{2<-d1}|^2 + |F2-F'_{1<-d2}|^2, each a
/// mean over entries. Gradients (optional) are for the primed maps.
template <typename T>
double feat_loss(const Tensor<T>& F1, const Tensor<T>& F2, const PrimedMaps<T>& primed,
                 T scale = T(1), std::array<Tensor<T>*, 4> grads = {});

/// Sum over the two non-varying attributes of the mean-squared code difference.
/// codes1/codes2 hold one column each (or matching columns per pair).
template <typename T>
double latent_loss(const LatentCodes<T>& codes1, const LatentCodes<T>& codes2,
                   Attribute varying, T scale = T(1), LatentCodes<T>* d1 = nullptr,
                   LatentCodes<T>* d2 = nullptr);

struct DisentRecon {
  std::array<ReconLoss, 4> terms;  ///< F'1/X1, F'2/X2, F'_{2<-d1}/X1, F'_{1<-d2}/X2
  double total = 0.0;
};

/// `offsets` locate each primed map's predictions inside `pred`. Terms 0 and 2
/// are scored against batch1, terms 1 and 3 against batch2.
template <typename T>
DisentRecon disent_recon_loss(const SurfaceOutput<T>& pred,
                              const std::array<Eigen::Index, 4>& offsets,
                              const SampleBatch& batch1, const SampleBatch& batch2,
                              const LossConfig& cfg, T scale = T(1), Row<T>* dvalue = nullptr,
                              Mat<T>* dgrad = nullptr);

double disent_total(const LossConfig& cfg, double feat, double latent, double recon);

}  // namespace disent
