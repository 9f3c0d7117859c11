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


#include "disent/losses.hpp"

#include <fmt/format.h>

#include <cmath>

#include "disent/error.hpp"

namespace disent {

using Eigen::Index;
using nlohmann::json;

void LossConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("loss alpha must be positive");
  for (double w : {lambda_ls, lambda_igr, lambda_o, w_feat, w_latent, w_recon}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
}

void to_json(json& j, const LossConfig& c) {
  j = json{{"mode", c.mode == FieldKind::kSdf ? "sdf" : "occupancy"},
           {"lambda_ls", c.lambda_ls},
           {"lambda_igr", c.lambda_igr},
           {"lambda_o", c.lambda_o},
           {"alpha", c.alpha},
           {"w_feat", c.w_feat},
           {"w_latent", c.w_latent},
           {"w_recon", c.w_recon}};
}

void from_json(const json& j, LossConfig& c) {
  const LossConfig d;
  const std::string mode = j.value("mode", std::string("occupancy"));
  c.mode = mode == "sdf" ? FieldKind::kSdf : FieldKind::kOccupancy;
  c.lambda_ls = j.value("lambda_ls", d.lambda_ls);
  c.lambda_igr = j.value("lambda_igr", d.lambda_igr);
  c.lambda_o = j.value("lambda_o", d.lambda_o);
  c.alpha = j.value("alpha", d.alpha);
  c.w_feat = j.value("w_feat", d.w_feat);
  c.w_latent = j.value("w_latent", d.w_latent);
  c.w_recon = j.value("w_recon", d.w_recon);
  c.validate();
}

namespace {

void check_span(Index pred_cols, Index offset, const SampleBatch& batch) {
  if (offset < 0 || offset + batch.size() > pred_cols) {
    throw ShapeError(fmt::format("prediction columns [{}, {}) exceed {}", offset,
                                 offset + batch.size(), pred_cols));
  }
}

template <typename T>
double sgn(T v) {
  return v > T(0) ? 1.0 : (v < T(0) ? -1.0 : 0.0);
}

}  // namespace

template <typename T>
ReconLoss recon_loss_occ(const SurfaceOutput<T>& pred, Index offset, const SampleBatch& batch,
                         T scale, Row<T>* dvalue) {
  if (batch.kind != FieldKind::kOccupancy) throw ConfigError("occupancy loss on an sdf batch");
  check_span(pred.value.cols(), offset, batch);
  const int n = batch.size();
  if (n == 0) throw InvalidArgument("empty sample batch");
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double r = static_cast<double>(pred.value(offset + i)) - batch.occupancy[i];
    sum += r * r;
    if (dvalue) (*dvalue)(offset + i) += static_cast<T>(2.0 * r / n) * scale;
  }
  ReconLoss out;
  out.total = sum / n;
  return out;
}

template <typename T>
ReconLoss recon_loss_sdf(const SurfaceOutput<T>& pred, Index offset, const SampleBatch& batch,
                         const LossConfig& cfg, T scale, Row<T>* dvalue, Mat<T>* dgrad) {
  if (batch.kind != FieldKind::kSdf) throw ConfigError("sdf loss on an occupancy batch");
  check_span(pred.value.cols(), offset, batch);
  if (pred.grad.cols() != pred.value.cols()) {
    throw ShapeError("sdf loss needs x-gradients of the prediction");
  }
  const int n = batch.size();
  const int n_on = batch.count(SampleRole::kOnSurface);
  const int n_off = n - n_on;
  if (n == 0) throw InvalidArgument("empty sample batch");

  ReconLoss out;
  for (int i = 0; i < n; ++i) {
    const Index c = offset + i;
    const double g = static_cast<double>(pred.value(c));
    const Vec3 grad = pred.grad.col(c).template cast<double>();
    const double norm = grad.norm();
    if (!std::isfinite(g) || !std::isfinite(norm)) {
      const Vec3& x = batch.points[i];
      throw DivergenceError(fmt::format("non-finite sdf prediction or gradient at point {} "
                                        "({:.4f}, {:.4f}, {:.4f}) of '{}'",
                                        i, x.x(), x.y(), x.z(), batch.example_id),
                            -1, "recon_sdf");
    }
    double dg = 0.0;
    Vec3 dgr = Vec3::Zero();

    // Eikonal term over all points.
    out.igr += std::abs(norm - 1.0) / n;
    if (norm > 0.0) dgr += cfg.lambda_igr * sgn(norm - 1.0) * grad / (norm * n);

    if (batch.roles[i] == SampleRole::kOnSurface) {
      const Vec3& nrm = batch.normals[i];
      const double safe = std::max(norm, 1e-12);
      const double cosv = grad.dot(nrm) / safe;
      out.ls += (std::abs(g) + 1.0 - cosv) / n_on;
      dg += cfg.lambda_ls * sgn(g) / n_on;
      dgr -= cfg.lambda_ls * (nrm - cosv * grad / safe) / (safe * n_on);
    } else {
      const double e = std::exp(-cfg.alpha * std::abs(g));
      out.off += e / n_off;
      dg -= cfg.lambda_o * cfg.alpha * sgn(g) * e / n_off;
    }
    if (dvalue) (*dvalue)(c) += static_cast<T>(dg) * scale;
    if (dgrad) dgrad->col(c) += (dgr.cast<T>() * scale);
  }
  out.total = cfg.lambda_ls * out.ls + cfg.lambda_igr * out.igr + cfg.lambda_o * out.off;
  return out;
}

template <typename T>
ReconLoss recon_loss(const SurfaceOutput<T>& pred, Index offset, const SampleBatch& batch,
                     const LossConfig& cfg, T scale, Row<T>* dvalue, Mat<T>* dgrad) {
  if (batch.kind != cfg.mode) {
    throw ConfigError(fmt::format("loss mode {} does not match batch kind {}",
                                  cfg.mode == FieldKind::kSdf ? "sdf" : "occupancy",
                                  batch.kind == FieldKind::kSdf ? "sdf" : "occupancy"));
  }
  if (cfg.mode == FieldKind::kOccupancy) return recon_loss_occ(pred, offset, batch, scale, dvalue);
  return recon_loss_sdf(pred, offset, batch, cfg, scale, dvalue, dgrad);
}

template <typename T>
double map_mse(const Tensor<T>& a, const Tensor<T>& target, T scale, Tensor<T>* da) {
  if (!a.same_shape(target)) throw ShapeError("feature maps differ in shape");
  const double n = static_cast<double>(a.data.size());
  const Mat<T> diff = a.data - target.data;
  if (da) {
    if (!da->same_shape(a)) throw ShapeError("gradient map shape");
    da->data += diff * static_cast<T>(2.0 / n) * scale;
  }
  return static_cast<double>(diff.squaredNorm()) / n;
}

template <typename T>
double feat_loss(const Tensor<T>& F1, const Tensor<T>& F2, const PrimedMaps<T>& primed, T scale,
                 std::array<Tensor<T>*, 4> grads) {
  const std::array<const Tensor<T>*, 4> targets = {&F1, &F2, &F1, &F2};
  double total = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (!primed.maps[k]) throw InvalidArgument("feat_loss: missing map");
    total += map_mse(*primed.maps[k], *targets[k], scale, grads[k]);
  }
  return total;
}

template <typename T>
double latent_loss(const LatentCodes<T>& codes1, const LatentCodes<T>& codes2, Attribute varying,
                   T scale, LatentCodes<T>* d1, LatentCodes<T>* d2) {
  const int v = static_cast<int>(varying);
  if (v < 0 || v > 2) throw InvalidArgument("latent_loss: unknown attribute");
  double total = 0.0;
  for (int a = 0; a < 3; ++a) {
    if (codes1.code[a].rows() != codes2.code[a].rows() ||
        codes1.code[a].cols() != codes2.code[a].cols()) {
      throw ShapeError("latent_loss: code shapes differ");
    }
    if (a == v) continue;
    const Mat<T> diff = codes1.code[a] - codes2.code[a];
    const double n = static_cast<double>(diff.rows());
    total += static_cast<double>(diff.squaredNorm()) / n;
    const T k = static_cast<T>(2.0 / n) * scale;
    if (d1) d1->code[a] += k * diff;
    if (d2) d2->code[a] -= k * diff;
  }
  return total;
}

template <typename T>
DisentRecon disent_recon_loss(const SurfaceOutput<T>& pred, const std::array<Index, 4>& offsets,
                              const SampleBatch& batch1, const SampleBatch& batch2,
                              const LossConfig& cfg, T scale, Row<T>* dvalue, Mat<T>* dgrad) {
  DisentRecon out;
  const std::array<const SampleBatch*, 4> gt = {&batch1, &batch2, &batch1, &batch2};
  for (int k = 0; k < 4; ++k) {
    out.terms[k] = recon_loss(pred, offsets[k], *gt[k], cfg, scale, dvalue, dgrad);
    out.total += out.terms[k].total;
  }
  return out;
}

double disent_total(const LossConfig& cfg, double feat, double latent, double recon) {
  return cfg.w_feat * feat + cfg.w_latent * latent + cfg.w_recon * recon;
}

#define DISENT_LOSS_INSTANTIATE(T)                                                            \
  template ReconLoss recon_loss_occ<T>(const SurfaceOutput<T>&, Index, const SampleBatch&, T, \
                                       Row<T>*);                                              \
  template ReconLoss recon_loss_sdf<T>(const SurfaceOutput<T>&, Index, const SampleBatch&,    \
                                       const LossConfig&, T, Row<T>*, Mat<T>*);               \
  template ReconLoss recon_loss<T>(const SurfaceOutput<T>&, Index, const SampleBatch&,        \
                                   const LossConfig&, T, Row<T>*, Mat<T>*);                   \
  template double map_mse<T>(const Tensor<T>&, const Tensor<T>&, T, Tensor<T>*);              \
  template double feat_loss<T>(const Tensor<T>&, const Tensor<T>&, const PrimedMaps<T>&, T,   \
                               std::array<Tensor<T>*, 4>);                                    \
  template double latent_loss<T>(const LatentCodes<T>&, const LatentCodes<T>&, Attribute, T,  \
                                 LatentCodes<T>*, LatentCodes<T>*);                           \
  template DisentRecon disent_recon_loss<T>(const SurfaceOutput<T>&,                          \
                                            const std::array<Index, 4>&, const SampleBatch&,  \
                                            const SampleBatch&, const LossConfig&, T, Row<T>*, \
                                            Mat<T>*);

DISENT_LOSS_INSTANTIATE(float)
DISENT_LOSS_INSTANTIATE(double)

}  // namespace disent
