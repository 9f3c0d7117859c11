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


// Shared helpers for finite-difference checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "disent/model.hpp"

namespace disent::testing {

/// |a - b| relative to the larger magnitude; tiny pairs compare absolutely.
inline double rel_err(double a, double b, double floor = 1e-7) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale < floor) return std::abs(a - b) / floor;
  return std::abs(a - b) / scale;
}

inline ModelConfig tiny_config(FieldKind mode) {
  ModelConfig c;
  c.mode = mode;
  c.image_res = 32;
  c.extractor_channels = {4, 8, 8};
  c.feature_channels = 6;
  c.head_channels = 8;
  c.latent = {5, 4, 3};
  c.decoder_seed_channels = 8;
  c.decoder_channels = 8;
  c.g_width = 16;
  c.g_blocks = 2;
  c.pe_frequencies = 3;
  c.seed = 3;
  return c;
}

/// Fills zero-initialized weights too, so every path carries gradient.
template <typename T>
void jitter(Model<T>& m, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  for (auto& [name, p] : m.params()) {
    const double s = scale / std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, p->value.cols())));
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      p->value.data()[i] += static_cast<T>(s * d(rng));
    }
  }
}

template <typename T>
Tensor<T> random_images(int n, int res, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor<T> t(n, 1, res, res);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data.data()[i] = static_cast<T>(u(rng));
  return t;
}

template <typename T>
SurfaceQuery<T> random_query(int points, int images, std::uint64_t seed, double extent = 0.9) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-extent, extent);
  SurfaceQuery<T> q;
  q.x.resize(3, points);
  q.image.resize(points);
  for (int i = 0; i < points; ++i) {
    for (int k = 0; k < 3; ++k) q.x(k, i) = static_cast<T>(u(rng));
    q.image[i] = i % images;
  }
  return q;
}

}  // namespace disent::testing

namespace disent::testing {

/// True when two single-point queries fall in the same smooth piece of g:
/// same bilinear cell and, for piecewise-linear activations, same pattern.
template <typename T>
bool same_piece(const Model<T>& m, const Tensor<T>& F, const SurfaceQuery<T>& a,
                const SurfaceQuery<T>& b) {
  typename SurfaceNet<T>::Cache ca, cb;
  m.g.forward(F, a, false, &ca);
  m.g.forward(F, b, false, &cb);
  if (ca.corners[0].col != cb.corners[0].col) return false;
  // Texel-centre lines: the bilinear weights' derivative jumps there.
  const auto& wa = ca.corners[0].w;
  const auto& wb = cb.corners[0].w;
  for (int k = 0; k < 4; ++k) {
    if ((wa[k] == T(0)) != (wb[k] == T(0))) return false;
  }
  if (m.config().mode == FieldKind::kOccupancy) {
    for (std::size_t l = 0; l < ca.pre.size(); ++l) {
      if (((ca.pre[l].col(0).array() > T(0)) != (cb.pre[l].col(0).array() > T(0))).any()) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace disent::testing
