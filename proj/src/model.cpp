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


#include "disent/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "disent/error.hpp"
#include "disent/hash.hpp"

namespace disent {

using Eigen::Index;
using nlohmann::json;

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("model config: " + what);
  };
  need(image_res >= 32 && image_res % 16 == 0, fmt::format("image_res {} must be a multiple of 16, >= 32", image_res));
  need(feature_channels > 0 && head_channels > 0, "channel counts must be positive");
  for (int c : extractor_channels) need(c > 0, "extractor channels must be positive");
  for (int l : latent) need(l > 0, "latent lengths must be positive");
  need(decoder_seed_channels > 0 && decoder_channels > 0, "decoder channels must be positive");
  need(g_width > 0 && g_blocks >= 0, "surface net width/blocks");
  need(pe_frequencies >= 0 && pe_frequencies <= 12, "pe_frequencies in [0, 12]");
  need(softplus_beta > 0.0, "softplus_beta must be positive");
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"mode", c.mode == FieldKind::kSdf ? "sdf" : "occupancy"},
           {"image_res", c.image_res},
           {"feature_channels", c.feature_channels},
           {"extractor_channels", c.extractor_channels},
           {"head_channels", c.head_channels},
           {"latent", c.latent},
           {"decoder_seed_channels", c.decoder_seed_channels},
           {"decoder_channels", c.decoder_channels},
           {"g_width", c.g_width},
           {"g_blocks", c.g_blocks},
           {"pe_frequencies", c.pe_frequencies},
           {"softplus_beta", c.softplus_beta},
           {"pe_bound", c.pe_bound},
           {"seed", c.seed}};
}

void from_json(const json& j, ModelConfig& c) {
  ModelConfig d;
  const std::string mode = j.value("mode", std::string("occupancy"));
  if (mode == "sdf") {
    c.mode = FieldKind::kSdf;
  } else if (mode == "occupancy" || mode == "occ") {
    c.mode = FieldKind::kOccupancy;
  } else {
    throw ConfigError("unknown mode '" + mode + "'");
  }
  c.image_res = j.value("image_res", d.image_res);
  c.feature_channels = j.value("feature_channels", d.feature_channels);
  c.extractor_channels = j.value("extractor_channels", d.extractor_channels);
  c.head_channels = j.value("head_channels", d.head_channels);
  c.latent = j.value("latent", d.latent);
  c.decoder_seed_channels = j.value("decoder_seed_channels", d.decoder_seed_channels);
  c.decoder_channels = j.value("decoder_channels", d.decoder_channels);
  c.g_width = j.value("g_width", d.g_width);
  c.g_blocks = j.value("g_blocks", d.g_blocks);
  c.pe_frequencies = j.value("pe_frequencies", d.pe_frequencies);
  c.softplus_beta = j.value("softplus_beta", d.softplus_beta);
  c.pe_bound = j.value("pe_bound", d.pe_bound);
  c.seed = j.value("seed", d.seed);
  c.validate();
}

Col<double> positional_encode(const Vec3& x, int frequencies, Mat<double>* jacobian) {
  const int n = 3 * (1 + 2 * frequencies);
  Col<double> out(n);
  if (jacobian) jacobian->setZero(n, 3);
  for (int c = 0; c < 3; ++c) {
    out[c] = x[c];
    if (jacobian) (*jacobian)(c, c) = 1.0;
  }
  for (int k = 0; k < frequencies; ++k) {
    const double freq = std::ldexp(std::numbers::pi, k);
    for (int c = 0; c < 3; ++c) {
      const double s = std::sin(freq * x[c]);
      const double co = std::cos(freq * x[c]);
      out[3 + 6 * k + c] = s;
      out[6 + 6 * k + c] = co;
      if (jacobian) {
        (*jacobian)(3 + 6 * k + c, c) = freq * co;
        (*jacobian)(6 + 6 * k + c, c) = -freq * s;
      }
    }
  }
  return out;
}

namespace {

template <typename T>
typename SurfaceNet<T>::Corner make_corner(int n, int h, int w, int image, const Vec3& x,
                                           bool* clamped) {
  if (image < 0 || image >= n) throw ShapeError("surface query refers to a missing image");
  if (h < 2 || w < 2) throw ShapeError("feature map smaller than 2x2");
  const double u = (x.x() + 1.0) / 2.0 * w;
  const double v = (1.0 - (x.y() + 1.0) / 2.0) * h;
  if (clamped) *clamped = !(u >= 0.0 && u <= w && v >= 0.0 && v <= h);
  double px = u - 0.5, py = v - 0.5;
  double dpx = w / 2.0, dpy = -h / 2.0;
  if (!(px >= 0.0)) px = 0.0, dpx = 0.0;
  if (px > w - 1) px = w - 1, dpx = 0.0;
  if (!(py >= 0.0)) py = 0.0, dpy = 0.0;
  if (py > h - 1) py = h - 1, dpy = 0.0;
  const int x0 = std::min(static_cast<int>(std::floor(px)), w - 2);
  const int y0 = std::min(static_cast<int>(std::floor(py)), h - 2);
  const double fx = px - x0, fy = py - y0;
  typename SurfaceNet<T>::Corner c;
  const Index base = (static_cast<Index>(image) * h + y0) * w + x0;
  c.col = {base, base + 1, base + w, base + w + 1};
  c.w = {T((1 - fx) * (1 - fy)), T(fx * (1 - fy)), T((1 - fx) * fy), T(fx * fy)};
  c.d1 = {T(-(1 - fy) * dpx), T((1 - fy) * dpx), T(-fy * dpx), T(fy * dpx)};
  c.d2 = {T(-(1 - fx) * dpy), T(-fx * dpy), T((1 - fx) * dpy), T(fx * dpy)};
  return c;
}

double leaky_gain() { return std::sqrt(2.0 / (1.0 + nn::kLeakySlope * nn::kLeakySlope)); }

}  // namespace

template <typename T>
Col<T> pixel_aligned_feature(const Tensor<T>& F, int image, const Vec3& x, bool* clamped,
                             Col<T>* dx1, Col<T>* dx2) {
  const auto c = make_corner<T>(F.n, F.h, F.w, image, x, clamped);
  Col<T> out = Col<T>::Zero(F.c);
  if (dx1) dx1->setZero(F.c);
  if (dx2) dx2->setZero(F.c);
  for (int k = 0; k < 4; ++k) {
    out += c.w[k] * F.data.col(c.col[k]);
    if (dx1) *dx1 += c.d1[k] * F.data.col(c.col[k]);
    if (dx2) *dx2 += c.d2[k] * F.data.col(c.col[k]);
  }
  return out;
}

template <typename T>
Tensor<T> images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw ShapeError("no images");
  const int h = images[0]->height, w = images[0]->width;
  Tensor<T> t(static_cast<int>(images.size()), 1, h, w);
  for (std::size_t b = 0; b < images.size(); ++b) {
    const Image& im = *images[b];
    if (im.height != h || im.width != w) throw ShapeError("images differ in size");
    for (std::size_t i = 0; i < im.pixels.size(); ++i) {
      t.data(0, static_cast<Index>(b * im.pixels.size() + i)) = static_cast<T>(im.pixels[i]);
    }
  }
  return t;
}

template <typename T>
LatentCodes<T> LatentCodes<T>::column(int i) const {
  LatentCodes<T> out;
  for (int a = 0; a < 3; ++a) out.code[a] = code[a].col(i);
  return out;
}

template <typename T>
Mat<T> LatentCodes<T>::concatenated() const {
  Mat<T> out(code[0].rows() + code[1].rows() + code[2].rows(), code[0].cols());
  out << code[0], code[1], code[2];
  return out;
}

// Feature extractor --------------------------------------------------------

template <typename T>
FeatureExtractor<T>::FeatureExtractor(const ModelConfig& cfg)
    : res_(cfg.image_res),
      blocks_{nn::ConvBlock<T>(1, cfg.extractor_channels[0], 3, 1),
              nn::ConvBlock<T>(cfg.extractor_channels[0], cfg.extractor_channels[1], 3, 2),
              nn::ConvBlock<T>(cfg.extractor_channels[1], cfg.extractor_channels[2], 3, 2)},
      refine_(cfg.extractor_channels[2], cfg.feature_channels, 3, 1, 1) {}

template <typename T>
void FeatureExtractor<T>::init(std::mt19937_64& rng) {
  for (auto& b : blocks_) b.init(rng);
  refine_.init(rng, 1.0);
}

template <typename T>
void FeatureExtractor<T>::collect(const std::string& prefix, nn::ParamRefs<T>& out) {
  for (int i = 0; i < 3; ++i) blocks_[i].collect(fmt::format("{}.block{}", prefix, i), out);
  refine_.collect(prefix + ".refine", out);
}

template <typename T>
Tensor<T> FeatureExtractor<T>::forward(const Tensor<T>& images, Cache* cache) const {
  if (images.c != 1 || images.h != res_ || images.w != res_) {
    throw ShapeError(fmt::format("extractor expects {}x{} grayscale images, got {}x{}x{}", res_,
                                 res_, images.h, images.w, images.c));
  }
  // ReLU would silently map NaN to zero.
  if (!images.data.allFinite()) throw InvalidArgument("input image has non-finite pixels");
  Tensor<T> x = images;
  for (int i = 0; i < 3; ++i) x = blocks_[i].forward(x, cache ? &cache->blocks[i] : nullptr);
  return refine_.forward(x, cache ? &cache->refine : nullptr);
}

template <typename T>
void FeatureExtractor<T>::backward(const Cache& cache, const Tensor<T>& dF) {
  Tensor<T> d = refine_.backward(cache.refine, dF, true);
  for (int i = 2; i >= 0; --i) d = blocks_[i].backward(cache.blocks[i], d, i > 0);
}

// Encoder heads -------------------------------------------------------------

template <typename T>
EncoderHead<T>::EncoderHead(const ModelConfig& cfg, int latent)
    : blocks_{nn::ConvBlock<T>(cfg.feature_channels, cfg.head_channels, 3, 2),
              nn::ConvBlock<T>(cfg.head_channels, cfg.head_channels, 3, 2),
              nn::ConvBlock<T>(cfg.head_channels, cfg.head_channels, 3, 2)},
      proj_(cfg.head_channels, latent) {}

template <typename T>
void EncoderHead<T>::init(std::mt19937_64& rng) {
  for (auto& b : blocks_) b.init(rng);
  proj_.init(rng, 1.0);
}

template <typename T>
void EncoderHead<T>::collect(const std::string& prefix, nn::ParamRefs<T>& out) {
  for (int i = 0; i < 3; ++i) blocks_[i].collect(fmt::format("{}.block{}", prefix, i), out);
  proj_.collect(prefix + ".proj", out);
}

template <typename T>
Mat<T> EncoderHead<T>::forward(const Tensor<T>& F, Cache* cache) const {
  Tensor<T> x = F;
  for (int i = 0; i < 3; ++i) x = blocks_[i].forward(x, cache ? &cache->blocks[i] : nullptr);
  const int p = x.pixels();
  Mat<T> pooled(x.c, x.n);
  for (int b = 0; b < x.n; ++b) {
    pooled.col(b) = x.data.middleCols(static_cast<Index>(b) * p, p).rowwise().sum() / T(p);
  }
  if (cache) {
    cache->pooled = pooled;
    cache->pixels = p;
    cache->h = x.h;
    cache->w = x.w;
  }
  return proj_.forward(pooled);
}

template <typename T>
Tensor<T> EncoderHead<T>::backward(const Cache& cache, const Mat<T>& dcode, bool need_dF) {
  const Mat<T> dpooled = proj_.backward(cache.pooled, dcode, true);
  const int n = static_cast<int>(dpooled.cols());
  Tensor<T> d(n, static_cast<int>(dpooled.rows()), cache.h, cache.w);
  for (int b = 0; b < n; ++b) {
    d.data.middleCols(static_cast<Index>(b) * cache.pixels, cache.pixels).colwise() =
        dpooled.col(b) / T(cache.pixels);
  }
  for (int i = 2; i >= 0; --i) d = blocks_[i].backward(cache.blocks[i], d, i > 0 || need_dF);
  return need_dF ? d : Tensor<T>();
}

// Decoder -------------------------------------------------------------------

template <typename T>
Decoder<T>::Decoder(const ModelConfig& cfg)
    : seed_res_(cfg.feature_res() / 4),
      seed_channels_(cfg.decoder_seed_channels),
      latent_total_(cfg.latent_total()),
      fc_(cfg.latent_total(), cfg.decoder_seed_channels * (cfg.feature_res() / 4) * (cfg.feature_res() / 4)),
      ups_{nn::UpBlock<T>(cfg.decoder_seed_channels, cfg.decoder_channels),
           nn::UpBlock<T>(cfg.decoder_channels, cfg.decoder_channels)},
      out_(cfg.decoder_channels, cfg.feature_channels, 1, 1, 0) {}

template <typename T>
void Decoder<T>::init(std::mt19937_64& rng) {
  fc_.init(rng, leaky_gain());
  for (auto& u : ups_) u.init(rng);
  out_.init(rng, 1.0);
}

template <typename T>
void Decoder<T>::collect(const std::string& prefix, nn::ParamRefs<T>& out) {
  fc_.collect(prefix + ".fc", out);
  for (int i = 0; i < 2; ++i) ups_[i].collect(fmt::format("{}.up{}", prefix, i), out);
  out_.collect(prefix + ".out", out);
}

template <typename T>
Tensor<T> Decoder<T>::forward(const Mat<T>& code, Cache* cache) const {
  if (code.rows() != latent_total_) {
    throw ShapeError(fmt::format("decoder expects a {}-long code, got {}", latent_total_,
                                 code.rows()));
  }
  Mat<T> seed = fc_.forward(code);
  nn::leaky_relu_inplace(seed);
  const int n = static_cast<int>(code.cols());
  Tensor<T> x;
  x.n = n, x.c = seed_channels_, x.h = seed_res_, x.w = seed_res_;
  x.data = Eigen::Map<const Mat<T>>(seed.data(), seed_channels_,
                                    static_cast<Index>(n) * seed_res_ * seed_res_);
  if (cache) {
    cache->input = code;
    cache->seed = seed;
  }
  for (int i = 0; i < 2; ++i) x = ups_[i].forward(x, cache ? &cache->ups[i] : nullptr);
  return out_.forward(x, cache ? &cache->out : nullptr);
}

template <typename T>
Mat<T> Decoder<T>::backward(const Cache& cache, const Tensor<T>& dF) {
  Tensor<T> d = out_.backward(cache.out, dF, true);
  for (int i = 1; i >= 0; --i) d = ups_[i].backward(cache.ups[i], d, true);
  Mat<T> dseed = Eigen::Map<const Mat<T>>(d.data.data(), cache.seed.rows(), cache.seed.cols());
  nn::leaky_relu_backward(cache.seed, dseed);
  return fc_.backward(cache.input, dseed, true);
}

// Surface net ---------------------------------------------------------------

namespace {

// Activation on a stacked [primal | tangents...] matrix.
template <typename T>
struct Act {
  bool smooth;
  T beta;

  T f(T u) const {
    if (!smooth) return u > T(0) ? u : T(0);
    const T bu = beta * u;
    return bu > T(20) ? u : std::log1p(std::exp(bu)) / beta;
  }
  T d1(T u) const {
    if (!smooth) return u > T(0) ? T(1) : T(0);
    return T(1) / (T(1) + std::exp(-beta * u));
  }
  T d2(T u) const {
    if (!smooth) return T(0);
    const T s = d1(u);
    return beta * s * (T(1) - s);
  }

  void forward(const Mat<T>& pre, int points, int blocks, Mat<T>& post) const {
    post.resize(pre.rows(), pre.cols());
    const Index rows = pre.rows();
    for (Index c = 0; c < points; ++c) {
      for (Index r = 0; r < rows; ++r) {
        const T u = pre(r, c);
        post(r, c) = f(u);
        if (blocks > 1) {
          const T g = d1(u);
          for (int j = 1; j < blocks; ++j) post(r, c + j * points) = g * pre(r, c + j * points);
        }
      }
    }
  }

  // dpost becomes dpre.
  void backward(const Mat<T>& pre, int points, int blocks, Mat<T>& d) const {
    const Index rows = pre.rows();
    for (Index c = 0; c < points; ++c) {
      for (Index r = 0; r < rows; ++r) {
        const T u = pre(r, c);
        const T g = d1(u);
        T acc = g * d(r, c);
        if (blocks > 1) {
          T cross = T(0);
          for (int j = 1; j < blocks; ++j) {
            cross += pre(r, c + j * points) * d(r, c + j * points);
            d(r, c + j * points) *= g;
          }
          if (smooth) acc += d2(u) * cross;
        }
        d(r, c) = acc;
      }
    }
  }
};

template <typename T>
void stacked_linear(const nn::Linear<T>& lin, const Mat<T>& x, int points, Mat<T>& y) {
  y.resize(lin.out(), x.cols());
  y.noalias() = lin.weight.value * x;
  y.leftCols(points).colwise() += lin.bias.value.col(0);
}

template <typename T>
void stacked_linear_backward(nn::Linear<T>& lin, const Mat<T>& x, const Mat<T>& dy, int points,
                             Mat<T>* dx) {
  lin.weight.grad.noalias() += dy * x.transpose();
  lin.bias.grad.col(0) += dy.leftCols(points).rowwise().sum().transpose();
  if (dx) {
    dx->resize(lin.in(), dy.cols());
    dx->noalias() = lin.weight.value.transpose() * dy;
  }
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <typename T>
SurfaceNet<T>::SurfaceNet(const ModelConfig& cfg)
    : mode_(cfg.mode),
      channels_(cfg.feature_channels),
      pe_freq_(cfg.pe_frequencies),
      beta_(cfg.softplus_beta),
      in_(cfg.feature_channels + cfg.pe_size(), cfg.g_width),
      out_(cfg.g_width, 1) {
  for (int b = 0; b < cfg.g_blocks; ++b) {
    blocks_.push_back({nn::Linear<T>(cfg.g_width, cfg.g_width), nn::Linear<T>(cfg.g_width, cfg.g_width)});
  }
}

template <typename T>
void SurfaceNet<T>::init(std::mt19937_64& rng) {
  const double relu_gain = std::sqrt(2.0);
  in_.init(rng, relu_gain);
  for (auto& b : blocks_) {
    b[0].init(rng, relu_gain);
    // Residual branches start as the identity.
    b[1].weight.value.setZero();
    b[1].bias.value.setZero();
  }
  out_.init(rng, 1.0);
}

template <typename T>
void SurfaceNet<T>::collect(const std::string& prefix, nn::ParamRefs<T>& out) {
  in_.collect(prefix + ".in", out);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    blocks_[b][0].collect(fmt::format("{}.block{}.fc0", prefix, b), out);
    blocks_[b][1].collect(fmt::format("{}.block{}.fc1", prefix, b), out);
  }
  out_.collect(prefix + ".out", out);
}

template <typename T>
SurfaceOutput<T> SurfaceNet<T>::forward(const Tensor<T>& F, const SurfaceQuery<T>& q,
                                        bool with_grad, Cache* cache) const {
  if (F.c != channels_) throw ShapeError("feature channels do not match the surface net");
  if (q.x.rows() != 3 || static_cast<int>(q.image.size()) != q.size()) {
    throw ShapeError("malformed surface query");
  }
  const int P = q.size();
  const int K = with_grad ? 4 : 1;
  const int pe = 3 * (1 + 2 * pe_freq_);
  const Act<T> act{mode_ == FieldKind::kSdf, static_cast<T>(beta_)};

  Cache local;
  Cache& cc = cache ? *cache : local;
  cc.points = P;
  cc.blocks = K;
  cc.corners.resize(P);
  cc.feature_cols = F.data.cols();
  cc.feature_n = F.n, cc.feature_c = F.c, cc.feature_h = F.h, cc.feature_w = F.w;
  cc.z.setZero(channels_ + pe, static_cast<Index>(K) * P);
  SurfaceOutput<T> out;
  Mat<double> jac;
  for (int i = 0; i < P; ++i) {
    const Vec3 x(static_cast<double>(q.x(0, i)), static_cast<double>(q.x(1, i)),
                 static_cast<double>(q.x(2, i)));
    bool clamped = false;
    const Corner c = make_corner<T>(F.n, F.h, F.w, q.image[i], x, &clamped);
    out.clamped += clamped;
    cc.corners[i] = c;
    auto zf = cc.z.col(i).head(channels_);
    for (int k = 0; k < 4; ++k) zf += c.w[k] * F.data.col(c.col[k]);
    const Col<double> enc = positional_encode(x, pe_freq_, K > 1 ? &jac : nullptr);
    cc.z.col(i).tail(pe) = enc.cast<T>();
    if (K > 1) {
      auto t1 = cc.z.col(P + i).head(channels_);
      auto t2 = cc.z.col(2 * P + i).head(channels_);
      for (int k = 0; k < 4; ++k) {
        t1 += c.d1[k] * F.data.col(c.col[k]);
        t2 += c.d2[k] * F.data.col(c.col[k]);
      }
      for (int j = 0; j < 3; ++j) cc.z.col((j + 1) * P + i).tail(pe) = jac.col(j).cast<T>();
    }
  }

  cc.pre.clear();
  cc.post.clear();
  Mat<T> h;
  stacked_linear(in_, cc.z, P, h);
  for (const auto& blk : blocks_) {
    Mat<T> a0, u, a1, d;
    act.forward(h, P, K, a0);
    stacked_linear(blk[0], a0, P, u);
    act.forward(u, P, K, a1);
    stacked_linear(blk[1], a1, P, d);
    cc.pre.push_back(h);
    cc.post.push_back(std::move(a0));
    cc.pre.push_back(std::move(u));
    cc.post.push_back(std::move(a1));
    h += d;
  }
  Mat<T> a;
  act.forward(h, P, K, a);
  cc.pre.push_back(std::move(h));
  cc.post.push_back(std::move(a));
  Mat<T> s;
  stacked_linear(out_, cc.post.back(), P, s);
  cc.raw = s.leftCols(P);
  if (K > 1) cc.raw_tangent = s.rightCols(3 * static_cast<Index>(P));

  const bool occ = mode_ == FieldKind::kOccupancy;
  out.value = occ ? Row<T>(cc.raw.unaryExpr([](T v) { return sigmoid(v); })) : cc.raw;
  if (K > 1) {
    out.grad.resize(3, P);
    for (int j = 0; j < 3; ++j) {
      for (int i = 0; i < P; ++i) {
        T g = cc.raw_tangent(0, static_cast<Index>(j) * P + i);
        if (occ) {
          const T sv = out.value(i);
          g *= sv * (T(1) - sv);
        }
        out.grad(j, i) = g;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> SurfaceNet<T>::backward(const Cache& cc, const Row<T>& dvalue, const Mat<T>& dgrad,
                                  bool need_dF) {
  const int P = cc.points;
  const int K = cc.blocks;
  if (dvalue.cols() != P) throw ShapeError("surface backward: dvalue size");
  const bool has_dgrad = dgrad.size() > 0;
  if (has_dgrad && (K == 1 || dgrad.rows() != 3 || dgrad.cols() != P)) {
    throw ShapeError("surface backward: gradient terms need a forward pass with x-derivatives");
  }
  const bool occ = mode_ == FieldKind::kOccupancy;
  const Act<T> act{mode_ == FieldKind::kSdf, static_cast<T>(beta_)};

  Mat<T> ds = Mat<T>::Zero(1, static_cast<Index>(K) * P);
  for (int i = 0; i < P; ++i) {
    T sp = T(1), spp = T(0);
    if (occ) {
      const T sv = sigmoid(cc.raw(i));
      sp = sv * (T(1) - sv);
      spp = sp * (T(1) - T(2) * sv);
    }
    T acc = dvalue(i) * sp;
    if (has_dgrad) {
      for (int j = 0; j < 3; ++j) {
        const Index col = static_cast<Index>(j) * P + i;
        acc += dgrad(j, i) * cc.raw_tangent(0, col) * spp;
        ds(0, P + col) = dgrad(j, i) * sp;
      }
    }
    ds(0, i) = acc;
  }

  const std::size_t nb = blocks_.size();
  Mat<T> dh;
  stacked_linear_backward(out_, cc.post[2 * nb], ds, P, &dh);
  act.backward(cc.pre[2 * nb], P, K, dh);
  for (std::size_t b = nb; b-- > 0;) {
    Mat<T> da1, da0;
    stacked_linear_backward(blocks_[b][1], cc.post[2 * b + 1], dh, P, &da1);
    act.backward(cc.pre[2 * b + 1], P, K, da1);
    stacked_linear_backward(blocks_[b][0], cc.post[2 * b], da1, P, &da0);
    act.backward(cc.pre[2 * b], P, K, da0);
    dh += da0;
  }
  Mat<T> dz;
  stacked_linear_backward(in_, cc.z, dh, P, need_dF ? &dz : nullptr);

  Tensor<T> dF;
  if (!need_dF) return dF;
  dF.n = cc.feature_n, dF.c = cc.feature_c, dF.h = cc.feature_h, dF.w = cc.feature_w;
  dF.data.setZero(cc.feature_c, cc.feature_cols);
  for (int i = 0; i < P; ++i) {
    const Corner& c = cc.corners[i];
    const auto dp = dz.col(i).head(channels_);
    for (int k = 0; k < 4; ++k) {
      auto target = dF.data.col(c.col[k]);
      target += c.w[k] * dp;
      if (K > 1) {
        target += c.d1[k] * dz.col(P + i).head(channels_);
        target += c.d2[k] * dz.col(2 * P + i).head(channels_);
      }
    }
  }
  return dF;
}

// Model ---------------------------------------------------------------------

template <typename T>
Model<T>::Model(const ModelConfig& cfg)
    : f(cfg),
      heads{EncoderHead<T>(cfg, cfg.latent[0]), EncoderHead<T>(cfg, cfg.latent[1]),
            EncoderHead<T>(cfg, cfg.latent[2])},
      decoder(cfg),
      g(cfg),
      cfg_(cfg) {
  cfg.validate();
  // Independent streams per component, so changing one part's shape leaves
  // the initial weights of the others untouched.
  std::mt19937_64 rf(mix_seed(cfg.seed, 11));
  f.init(rf);
  for (int a = 0; a < 3; ++a) {
    std::mt19937_64 rh(mix_seed(cfg.seed, 21 + a));
    heads[a].init(rh);
  }
  std::mt19937_64 rd(mix_seed(cfg.seed, 31));
  decoder.init(rd);
  std::mt19937_64 rg(mix_seed(cfg.seed, 41));
  g.init(rg);
}

template <typename T>
nn::ParamRefs<T> Model<T>::params(Part part) {
  static const char* kHeadNames[3] = {"h.theta", "h.beta", "h.gamma"};
  nn::ParamRefs<T> out;
  switch (part) {
    case Part::kExtractor:
      f.collect("f", out);
      break;
    case Part::kHeads:
      for (int a = 0; a < 3; ++a) heads[a].collect(kHeadNames[a], out);
      break;
    case Part::kDecoder:
      decoder.collect("dec", out);
      break;
    case Part::kSurface:
      g.collect("g", out);
      break;
  }
  return out;
}

template <typename T>
nn::ParamRefs<T> Model<T>::params() {
  nn::ParamRefs<T> out;
  for (Part p : {Part::kExtractor, Part::kHeads, Part::kDecoder, Part::kSurface}) {
    auto part = params(p);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

template <typename T>
template <typename U>
void Model<T>::copy_from(Model<U>& other) {
  std::map<std::string, nn::Param<U>*> src;
  for (auto& [name, p] : other.params()) src[name] = p;
  for (auto& [name, p] : params()) {
    auto it = src.find(name);
    if (it == src.end()) throw ShapeError("copy_from: missing parameter " + name);
    if (it->second->value.rows() != p->value.rows() || it->second->value.cols() != p->value.cols()) {
      throw ShapeError("copy_from: shape mismatch for " + name);
    }
    p->value = it->second->value.template cast<T>();
    p->zero_grad();
  }
}

template <typename T>
Tensor<T> Model<T>::extract_features(const Tensor<T>& images) const {
  return f.forward(images, nullptr);
}

template <typename T>
LatentCodes<T> Model<T>::encode(const Tensor<T>& F) const {
  LatentCodes<T> codes;
  for (int a = 0; a < 3; ++a) codes.code[a] = heads[a].forward(F, nullptr);
  return codes;
}

template <typename T>
Tensor<T> Model<T>::decode(const LatentCodes<T>& codes) const {
  for (int a = 0; a < 3; ++a) {
    if (codes.code[a].rows() != cfg_.latent[a]) {
      throw ShapeError(fmt::format("latent block {} has length {}, expected {}", a,
                                   codes.code[a].rows(), cfg_.latent[a]));
    }
  }
  return decoder.forward(codes.concatenated(), nullptr);
}

template <typename T>
SurfaceOutput<T> Model<T>::predict_surface(const Tensor<T>& F, const SurfaceQuery<T>& q,
                                           bool with_grad) const {
  SurfaceOutput<T> out = g.forward(F, q, with_grad, nullptr);
  for (int i = 0; i < q.size(); ++i) {
    if (!std::isfinite(static_cast<double>(out.value(i)))) {
      throw DivergenceError(fmt::format("non-finite surface value at point {}", i), -1,
                            "predict_surface");
    }
  }
  return out;
}

ScalarFieldGrid evaluate_lattice(const Model<float>& model, const Tensor<float>& F, int res) {
  if (F.n < 1) throw ShapeError("evaluate_lattice: empty feature batch");
  const nn::DenormalFlush flush;
  ScalarFieldGrid grid;
  grid.resolution = res;
  grid.lo = Vec3::Constant(-1.0);
  grid.hi = Vec3::Constant(1.0);
  grid.kind = model.config().mode;
  const std::size_t total = static_cast<std::size_t>(res) * res * res;
  grid.values.resize(total);
  const Tensor<float> F0 = F.n == 1 ? F : F.slice(0, 1);
  constexpr std::size_t kChunk = 8192;
  SurfaceQuery<float> q;
  for (std::size_t start = 0; start < total; start += kChunk) {
    const std::size_t count = std::min(kChunk, total - start);
    q.x.resize(3, static_cast<Index>(count));
    q.image.assign(count, 0);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t idx = start + i;
      const int ix = static_cast<int>(idx % res);
      const int iy = static_cast<int>((idx / res) % res);
      const int iz = static_cast<int>(idx / (static_cast<std::size_t>(res) * res));
      q.x.col(static_cast<Index>(i)) = grid.node(ix, iy, iz).cast<float>();
    }
    const SurfaceOutput<float> out = model.predict_surface(F0, q, false);
    for (std::size_t i = 0; i < count; ++i) grid.values[start + i] = out.value(static_cast<Index>(i));
  }
  return grid;
}

template <typename T>
std::uint64_t param_checksum(const nn::ParamRefs<T>& params) {
  Fnv1a h;
  for (const auto& [name, p] : params) {
    h.update(name);
    h.update(p->value.data(), sizeof(T) * static_cast<std::size_t>(p->value.size()));
  }
  return h.digest();
}

#define DISENT_MODEL_INSTANTIATE(T)                                                         \
  template Col<T> pixel_aligned_feature<T>(const Tensor<T>&, int, const Vec3&, bool*,       \
                                           Col<T>*, Col<T>*);                               \
  template Tensor<T> images_to_tensor<T>(const std::vector<const Image*>&);                 \
  template struct LatentCodes<T>;                                                           \
  template class FeatureExtractor<T>;                                                       \
  template class EncoderHead<T>;                                                            \
  template class Decoder<T>;                                                                \
  template class SurfaceNet<T>;                                                             \
  template class Model<T>;                                                                  \
  template std::uint64_t param_checksum<T>(const nn::ParamRefs<T>&);

DISENT_MODEL_INSTANTIATE(float)
DISENT_MODEL_INSTANTIATE(double)

template void Model<double>::copy_from<float>(Model<float>&);
template void Model<float>::copy_from<double>(Model<double>&);
template void Model<float>::copy_from<float>(Model<float>&);

}  // namespace disent
