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
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "disent/figure.hpp"
#include "disent/image.hpp"
#include "disent/nn.hpp"
#include "disent/scalar_grid.hpp"

namespace disent {

using nn::Col;
using nn::Mat;
using nn::Row;
using nn::Tensor;

struct ModelConfig {
  FieldKind mode = FieldKind::kOccupancy;
  int image_res = 64;
  int feature_channels = 64;
  std::array<int, 3> extractor_channels = {16, 32, 64};
  int head_channels = 64;
  std::array<int, 3> latent = {128, 128, 128};  ///< (theta, beta, gamma)
  int decoder_seed_channels = 128;
  int decoder_channels = 64;
  int g_width = 256;
  int g_blocks = 4;  ///< residual blocks of two linear layers each
  int pe_frequencies = 6;
  double softplus_beta = 100.0;
  double pe_bound = 1.0;  ///< coordinates are encoded raw; recorded, not applied
  std::uint64_t seed = 1;

  void validate() const;  ///< throws ConfigError
  int feature_res() const { return image_res / 4; }
  int latent_total() const { return latent[0] + latent[1] + latent[2]; }
  int pe_size() const { return 3 * (1 + 2 * pe_frequencies); }
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// sigma(x) = [x, sin(2^k pi x), cos(2^k pi x)] for k < L, per coordinate.
/// When `jacobian` is given it receives the (3 + 6L) x 3 derivative.
Col<double> positional_encode(const Vec3& x, int frequencies, Mat<double>* jacobian = nullptr);

/// Bilinear lookup of image `image` of F at the projection of x, with texel
/// centers at u = i + 0.5. Out-of-image projections clamp to the border and
/// set *clamped. `du` and `dv`, when given, receive dF_x/dx1 and dF_x/dx2.
template <typename T>
Col<T> pixel_aligned_feature(const Tensor<T>& F, int image, const Vec3& x, bool* clamped = nullptr,
                             Col<T>* dx1 = nullptr, Col<T>* dx2 = nullptr);

template <typename T>
Tensor<T> images_to_tensor(const std::vector<const Image*>& images);

/// Codes of a batch: code[a] is latent[a] x n, one column per image.
template <typename T>
struct LatentCodes {
  std::array<Mat<T>, 3> code;
  int count() const { return static_cast<int>(code[0].cols()); }
  LatentCodes column(int i) const;
  Mat<T> concatenated() const;  ///< rows in (theta, beta, gamma) order
};

template <typename T>
class FeatureExtractor {
 public:
  struct Cache {
    std::array<typename nn::ConvBlock<T>::Cache, 3> blocks;
    nn::ConvCache<T> refine;
  };
  FeatureExtractor() = default;
  explicit FeatureExtractor(const ModelConfig& cfg);
  void init(std::mt19937_64& rng);
  void collect(const std::string& prefix, nn::ParamRefs<T>& out);
  Tensor<T> forward(const Tensor<T>& images, Cache* cache) const;
  void backward(const Cache& cache, const Tensor<T>& dF);

 private:
  int res_ = 0;
  std::array<nn::ConvBlock<T>, 3> blocks_;
  nn::Conv2d<T> refine_;
};

template <typename T>
class EncoderHead {
 public:
  struct Cache {
    std::array<typename nn::ConvBlock<T>::Cache, 3> blocks;
    Mat<T> pooled;
    int pixels = 0;
    int h = 0, w = 0;
  };
  EncoderHead() = default;
  EncoderHead(const ModelConfig& cfg, int latent);
  void init(std::mt19937_64& rng);
  void collect(const std::string& prefix, nn::ParamRefs<T>& out);
  Mat<T> forward(const Tensor<T>& F, Cache* cache) const;
  Tensor<T> backward(const Cache& cache, const Mat<T>& dcode, bool need_dF = true);

 private:
  std::array<nn::ConvBlock<T>, 3> blocks_;
  nn::Linear<T> proj_;
};

template <typename T>
class Decoder {
 public:
  struct Cache {
    Mat<T> input;
    Mat<T> seed;  ///< after activation
    std::array<typename nn::UpBlock<T>::Cache, 2> ups;
    nn::ConvCache<T> out;
  };
  Decoder() = default;
  explicit Decoder(const ModelConfig& cfg);
  void init(std::mt19937_64& rng);
  void collect(const std::string& prefix, nn::ParamRefs<T>& out);
  Tensor<T> forward(const Mat<T>& code, Cache* cache) const;
  Mat<T> backward(const Cache& cache, const Tensor<T>& dF);

 private:
  int seed_res_ = 0, seed_channels_ = 0, latent_total_ = 0;
  nn::Linear<T> fc_;
  std::array<nn::UpBlock<T>, 2> ups_;
  nn::Conv2d<T> out_;
};

/// Points to evaluate, each owned by one image of the feature batch.
template <typename T>
struct SurfaceQuery {
  Mat<T> x;                ///< 3 x P
  std::vector<int> image;  ///< P entries
  int size() const { return static_cast<int>(x.cols()); }
};

template <typename T>
struct SurfaceOutput {
  Row<T> value;  ///< occupancy in (0, 1) or signed distance
  Mat<T> grad;   ///< 3 x P derivative of value in x; empty unless requested
  long clamped = 0;
};

/// g(F_x, sigma(x)): residual MLP with forward-mode x-derivatives. Tangents
/// are carried as extra column blocks so each layer is a single product.
template <typename T>
class SurfaceNet {
 public:
  struct Corner {
    std::array<Eigen::Index, 4> col;
    std::array<T, 4> w;
    std::array<T, 4> d1;  ///< dw/dx1
    std::array<T, 4> d2;  ///< dw/dx2
  };
  struct Cache {
    int points = 0;
    int blocks = 1;  ///< 1 primal block, or 4 with the x-tangents
    std::vector<Corner> corners;
    Mat<T> z;
    std::vector<Mat<T>> pre;   ///< inputs to each activation
    std::vector<Mat<T>> post;  ///< activation outputs
    Row<T> raw;                ///< output before the occupancy squash
    Mat<T> raw_tangent;        ///< 1 x 3P
    Eigen::Index feature_cols = 0;
    int feature_n = 0, feature_c = 0, feature_h = 0, feature_w = 0;
  };
  SurfaceNet() = default;
  explicit SurfaceNet(const ModelConfig& cfg);
  void init(std::mt19937_64& rng);
  void collect(const std::string& prefix, nn::ParamRefs<T>& out);

  SurfaceOutput<T> forward(const Tensor<T>& F, const SurfaceQuery<T>& q, bool with_grad,
                           Cache* cache) const;
  /// dvalue is 1 x P; dgrad is 3 x P or empty. Returns dL/dF when need_dF.
  Tensor<T> backward(const Cache& cache, const Row<T>& dvalue, const Mat<T>& dgrad,
                     bool need_dF);

 private:
  FieldKind mode_ = FieldKind::kOccupancy;
  int channels_ = 0, pe_freq_ = 6;
  double beta_ = 100.0;
  nn::Linear<T> in_;
  std::vector<std::array<nn::Linear<T>, 2>> blocks_;
  nn::Linear<T> out_;
};

enum class Part { kExtractor, kHeads, kDecoder, kSurface };

template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamRefs<T> params();
  nn::ParamRefs<T> params(Part part);
  /// Copies values by name; shapes must agree.
  template <typename U>
  void copy_from(Model<U>& other);

  Tensor<T> extract_features(const Tensor<T>& images) const;
  LatentCodes<T> encode(const Tensor<T>& F) const;
  Tensor<T> decode(const LatentCodes<T>& codes) const;
  /// Throws DivergenceError on non-finite output.
  SurfaceOutput<T> predict_surface(const Tensor<T>& F, const SurfaceQuery<T>& q,
                                   bool with_grad) const;

  FeatureExtractor<T> f;
  std::array<EncoderHead<T>, 3> heads;
  Decoder<T> decoder;
  SurfaceNet<T> g;

 private:
  ModelConfig cfg_;
};

/// Field of image 0 of F sampled on a res^3 lattice over [-1, 1]^3.
ScalarFieldGrid evaluate_lattice(const Model<float>& model, const Tensor<float>& F, int res);

/// FNV-1a over the bytes of the given parameters, in order.
template <typename T>
std::uint64_t param_checksum(const nn::ParamRefs<T>& params);

}  // namespace disent
