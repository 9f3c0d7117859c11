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


#include "disent/nn.hpp"

#include <cmath>
#include <cstring>

#include "disent/error.hpp"

namespace disent::nn {

namespace {

using Index = Eigen::Index;

struct Geometry {
  int c, h, w;    // image side (the conv input)
  int k, s, p;
  int oh, ow;     // patch grid (the conv output)
};

// Rows of `cols` are (ky * k + kx) * c + channel.
template <typename T>
void im2col(const Mat<T>& x, int n, const Geometry& g, Mat<T>& cols) {
  const Index rows = static_cast<Index>(g.k) * g.k * g.c;
  cols.resize(rows, static_cast<Index>(n) * g.oh * g.ow);
  T* dst = cols.data();
  const T* src = x.data();
  for (int b = 0; b < n; ++b) {
    for (int oy = 0; oy < g.oh; ++oy) {
      for (int ox = 0; ox < g.ow; ++ox) {
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = oy * g.s - g.p + ky;
          for (int kx = 0; kx < g.k; ++kx) {
            const int ix = ox * g.s - g.p + kx;
            if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) {
              std::memset(dst, 0, sizeof(T) * g.c);
            } else {
              std::memcpy(dst, src + (static_cast<Index>(b * g.h + iy) * g.w + ix) * g.c,
                          sizeof(T) * g.c);
            }
            dst += g.c;
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const Mat<T>& cols, int n, const Geometry& g, Mat<T>& x) {
  x.setZero(g.c, static_cast<Index>(n) * g.h * g.w);
  const T* src = cols.data();
  T* dst = x.data();
  for (int b = 0; b < n; ++b) {
    for (int oy = 0; oy < g.oh; ++oy) {
      for (int ox = 0; ox < g.ow; ++ox) {
        for (int ky = 0; ky < g.k; ++ky) {
          const int iy = oy * g.s - g.p + ky;
          for (int kx = 0; kx < g.k; ++kx) {
            const int ix = ox * g.s - g.p + kx;
            if (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) {
              T* d = dst + (static_cast<Index>(b * g.h + iy) * g.w + ix) * g.c;
              for (int ch = 0; ch < g.c; ++ch) d[ch] += src[ch];
            }
            src += g.c;
          }
        }
      }
    }
  }
}

double leaky_gain() { return std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope)); }

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::slice(int first, int count) const {
  if (first < 0 || count < 0 || first + count > n) throw ShapeError("tensor slice out of range");
  Tensor<T> out;
  out.n = count, out.c = c, out.h = h, out.w = w;
  const Index p = pixels();
  out.data = data.middleCols(first * p, count * p);
  return out;
}

template <typename T>
Tensor<T> concat(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  Tensor<T> out;
  out.c = parts[0]->c, out.h = parts[0]->h, out.w = parts[0]->w;
  Index cols = 0;
  for (const auto* t : parts) {
    if (t->c != out.c || t->h != out.h || t->w != out.w) throw ShapeError("concat shape mismatch");
    out.n += t->n;
    cols += t->data.cols();
  }
  out.data.resize(out.c, cols);
  Index at = 0;
  for (const auto* t : parts) {
    out.data.middleCols(at, t->data.cols()) = t->data;
    at += t->data.cols();
  }
  return out;
}

template <typename T>
void init_normal(Param<T>& p, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, stddev);
  for (Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<T>(d(rng));
  p.zero_grad();
}

template <typename T>
void leaky_relu_inplace(Mat<T>& x) {
  const T slope = static_cast<T>(kLeakySlope);
  x = x.unaryExpr([slope](T v) { return v > T(0) ? v : slope * v; });
}

template <typename T>
void leaky_relu_backward(const Mat<T>& y, Mat<T>& dy) {
  const T slope = static_cast<T>(kLeakySlope);
  dy = (y.array() > T(0)).select(dy, slope * dy);
}

// Linear ------------------------------------------------------------------

template <typename T>
Linear<T>::Linear(int in, int out) {
  weight.value = Mat<T>::Zero(out, in);
  bias.value = Mat<T>::Zero(out, 1);
  weight.zero_grad();
  bias.zero_grad();
}

template <typename T>
void Linear<T>::init(std::mt19937_64& rng, double gain) {
  init_normal(weight, gain / std::sqrt(static_cast<double>(in())), rng);
  bias.value.setZero();
  bias.zero_grad();
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, ParamRefs<T>& out) {
  out.emplace_back(prefix + ".weight", &weight);
  out.emplace_back(prefix + ".bias", &bias);
}

template <typename T>
Mat<T> Linear<T>::forward(const Mat<T>& x) const {
  if (x.rows() != in()) throw ShapeError("linear input size mismatch");
  Mat<T> y(out(), x.cols());
  y.noalias() = weight.value * x;
  y.colwise() += bias.value.col(0);
  return y;
}

template <typename T>
Mat<T> Linear<T>::backward(const Mat<T>& x, const Mat<T>& dy, bool need_dx) {
  weight.grad.noalias() += dy * x.transpose();
  bias.grad.col(0) += dy.rowwise().sum().transpose();
  if (!need_dx) return {};
  Mat<T> dx(in(), dy.cols());
  dx.noalias() = weight.value.transpose() * dy;
  return dx;
}

// Conv2d ------------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(int cin, int cout, int kernel, int stride, int pad)
    : cin_(cin), cout_(cout), k_(kernel), stride_(stride), pad_(pad) {
  weight.value = Mat<T>::Zero(cout, kernel * kernel * cin);
  bias.value = Mat<T>::Zero(cout, 1);
  weight.zero_grad();
  bias.zero_grad();
}

template <typename T>
void Conv2d<T>::init(std::mt19937_64& rng, double gain) {
  init_normal(weight, gain / std::sqrt(static_cast<double>(k_ * k_ * cin_)), rng);
  bias.value.setZero();
  bias.zero_grad();
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, ParamRefs<T>& out) {
  out.emplace_back(prefix + ".weight", &weight);
  out.emplace_back(prefix + ".bias", &bias);
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, ConvCache<T>* cache) const {
  if (x.c != cin_) throw ShapeError("conv input channel mismatch");
  const Geometry g{cin_, x.h, x.w, k_, stride_, pad_, out_size(x.h), out_size(x.w)};
  ConvCache<T> local;
  ConvCache<T>& cc = cache ? *cache : local;
  im2col(x.data, x.n, g, cc.cols);
  cc.n = x.n, cc.h = x.h, cc.w = x.w;
  Tensor<T> y;
  y.n = x.n, y.c = cout_, y.h = g.oh, y.w = g.ow;
  y.data.resize(cout_, cc.cols.cols());
  y.data.noalias() = weight.value * cc.cols;
  y.data.colwise() += bias.value.col(0);
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const ConvCache<T>& cache, const Tensor<T>& dy, bool need_dx) {
  weight.grad.noalias() += dy.data * cache.cols.transpose();
  bias.grad.col(0) += dy.data.rowwise().sum().transpose();
  Tensor<T> dx;
  if (!need_dx) return dx;
  Mat<T> dcols(cache.cols.rows(), cache.cols.cols());
  dcols.noalias() = weight.value.transpose() * dy.data;
  const Geometry g{cin_, cache.h, cache.w, k_, stride_, pad_, dy.h, dy.w};
  dx.n = cache.n, dx.c = cin_, dx.h = cache.h, dx.w = cache.w;
  col2im(dcols, cache.n, g, dx.data);
  return dx;
}

// ConvTranspose2d ---------------------------------------------------------

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(int cin, int cout) : cin_(cin), cout_(cout) {
  weight.value = Mat<T>::Zero(16 * cout, cin);
  bias.value = Mat<T>::Zero(cout, 1);
  weight.zero_grad();
  bias.zero_grad();
}

template <typename T>
void ConvTranspose2d<T>::init(std::mt19937_64& rng, double gain) {
  // Each output pixel receives 4 of the 16 taps.
  init_normal(weight, gain / std::sqrt(4.0 * cin_), rng);
  bias.value.setZero();
  bias.zero_grad();
}

template <typename T>
void ConvTranspose2d<T>::collect(const std::string& prefix, ParamRefs<T>& out) {
  out.emplace_back(prefix + ".weight", &weight);
  out.emplace_back(prefix + ".bias", &bias);
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x, Tensor<T>* input_cache) const {
  if (x.c != cin_) throw ShapeError("transposed conv input channel mismatch");
  if (input_cache) *input_cache = x;
  Mat<T> cols(weight.value.rows(), x.data.cols());
  cols.noalias() = weight.value * x.data;
  const Geometry g{cout_, 2 * x.h, 2 * x.w, 4, 2, 1, x.h, x.w};
  Tensor<T> y;
  y.n = x.n, y.c = cout_, y.h = 2 * x.h, y.w = 2 * x.w;
  col2im(cols, x.n, g, y.data);
  y.data.colwise() += bias.value.col(0);
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& x, const Tensor<T>& dy, bool need_dx) {
  bias.grad.col(0) += dy.data.rowwise().sum().transpose();
  const Geometry g{cout_, dy.h, dy.w, 4, 2, 1, x.h, x.w};
  Mat<T> dcols;
  im2col(dy.data, dy.n, g, dcols);
  weight.grad.noalias() += dcols * x.data.transpose();
  Tensor<T> dx;
  if (!need_dx) return dx;
  dx.n = x.n, dx.c = cin_, dx.h = x.h, dx.w = x.w;
  dx.data.resize(cin_, x.data.cols());
  dx.data.noalias() = weight.value.transpose() * dcols;
  return dx;
}

// GroupNorm ---------------------------------------------------------------

template <typename T>
GroupNorm<T>::GroupNorm(int channels, int groups) : channels_(channels), groups_(groups) {
  if (groups <= 0 || channels % groups != 0) throw ConfigError("group norm channel split");
  gamma.value = Mat<T>::Ones(channels, 1);
  beta.value = Mat<T>::Zero(channels, 1);
  gamma.zero_grad();
  beta.zero_grad();
}

template <typename T>
void GroupNorm<T>::collect(const std::string& prefix, ParamRefs<T>& out) {
  out.emplace_back(prefix + ".gamma", &gamma);
  out.emplace_back(prefix + ".beta", &beta);
}

template <typename T>
Tensor<T> GroupNorm<T>::forward(const Tensor<T>& x, NormCache<T>* cache) const {
  if (x.c != channels_) throw ShapeError("group norm channel mismatch");
  constexpr double kEps = 1e-5;
  const int cpg = channels_ / groups_;
  const Index hw = x.pixels();
  NormCache<T> local;
  NormCache<T>& nc = cache ? *cache : local;
  nc.xhat.resize(x.data.rows(), x.data.cols());
  nc.inv_std.resize(groups_, x.n);
  for (int b = 0; b < x.n; ++b) {
    for (int g = 0; g < groups_; ++g) {
      const auto blk = x.data.block(g * cpg, b * hw, cpg, hw);
      const double m = static_cast<double>(cpg) * static_cast<double>(hw);
      const double mean = static_cast<double>(blk.sum()) / m;
      const double var = std::max(0.0, static_cast<double>(blk.squaredNorm()) / m - mean * mean);
      const T inv = static_cast<T>(1.0 / std::sqrt(var + kEps));
      nc.inv_std(g, b) = inv;
      nc.xhat.block(g * cpg, b * hw, cpg, hw) = (blk.array() - static_cast<T>(mean)) * inv;
    }
  }
  Tensor<T> y;
  y.n = x.n, y.c = x.c, y.h = x.h, y.w = x.w;
  y.data = (nc.xhat.array().colwise() * gamma.value.col(0).array()).colwise() +
           beta.value.col(0).array();
  return y;
}

template <typename T>
Tensor<T> GroupNorm<T>::backward(const NormCache<T>& cache, const Tensor<T>& dy) {
  gamma.grad.col(0) += (dy.data.array() * cache.xhat.array()).rowwise().sum().matrix();
  beta.grad.col(0) += dy.data.rowwise().sum();
  const Mat<T> dxhat = dy.data.array().colwise() * gamma.value.col(0).array();
  const int cpg = channels_ / groups_;
  const Index hw = dy.pixels();
  const T m = static_cast<T>(cpg * hw);
  Tensor<T> dx;
  dx.n = dy.n, dx.c = dy.c, dx.h = dy.h, dx.w = dy.w;
  dx.data.resize(dy.data.rows(), dy.data.cols());
  for (int b = 0; b < dy.n; ++b) {
    for (int g = 0; g < groups_; ++g) {
      const auto d = dxhat.block(g * cpg, b * hw, cpg, hw);
      const auto xh = cache.xhat.block(g * cpg, b * hw, cpg, hw);
      const T sum_d = d.sum();
      const T sum_dx = (d.array() * xh.array()).sum();
      dx.data.block(g * cpg, b * hw, cpg, hw) =
          (cache.inv_std(g, b) / m) * (m * d.array() - sum_d - xh.array() * sum_dx);
    }
  }
  return dx;
}

// Blocks ------------------------------------------------------------------

namespace {
int groups_for(int channels) {
  for (int g : {8, 4, 2}) {
    if (channels % g == 0 && channels / g >= 2) return g;
  }
  return 1;
}
}  // namespace

template <typename T>
ConvBlock<T>::ConvBlock(int cin, int cout, int kernel, int stride)
    : conv(cin, cout, kernel, stride, kernel / 2), norm(cout, groups_for(cout)) {}

template <typename T>
void ConvBlock<T>::init(std::mt19937_64& rng) {
  conv.init(rng, leaky_gain());
}

template <typename T>
void ConvBlock<T>::collect(const std::string& prefix, ParamRefs<T>& out) {
  conv.collect(prefix + ".conv", out);
  norm.collect(prefix + ".norm", out);
}

template <typename T>
Tensor<T> ConvBlock<T>::forward(const Tensor<T>& x, Cache* cache) const {
  Tensor<T> y = norm.forward(conv.forward(x, cache ? &cache->conv : nullptr),
                             cache ? &cache->norm : nullptr);
  leaky_relu_inplace(y.data);
  if (cache) cache->out = y.data;
  return y;
}

template <typename T>
Tensor<T> ConvBlock<T>::backward(const Cache& cache, const Tensor<T>& dy, bool need_dx) {
  Tensor<T> d = dy;
  leaky_relu_backward(cache.out, d.data);
  return conv.backward(cache.conv, norm.backward(cache.norm, d), need_dx);
}

template <typename T>
UpBlock<T>::UpBlock(int cin, int cout) : conv(cin, cout), norm(cout, groups_for(cout)) {}

template <typename T>
void UpBlock<T>::init(std::mt19937_64& rng) {
  conv.init(rng, leaky_gain());
}

template <typename T>
void UpBlock<T>::collect(const std::string& prefix, ParamRefs<T>& out) {
  conv.collect(prefix + ".conv", out);
  norm.collect(prefix + ".norm", out);
}

template <typename T>
Tensor<T> UpBlock<T>::forward(const Tensor<T>& x, Cache* cache) const {
  Tensor<T> y = norm.forward(conv.forward(x, cache ? &cache->in : nullptr),
                             cache ? &cache->norm : nullptr);
  leaky_relu_inplace(y.data);
  if (cache) cache->out = y.data;
  return y;
}

template <typename T>
Tensor<T> UpBlock<T>::backward(const Cache& cache, const Tensor<T>& dy, bool need_dx) {
  Tensor<T> d = dy;
  leaky_relu_backward(cache.out, d.data);
  return conv.backward(cache.in, norm.backward(cache.norm, d), need_dx);
}

#define DISENT_NN_INSTANTIATE(T)                                              \
  template struct Tensor<T>;                                                  \
  template Tensor<T> concat<T>(const std::vector<const Tensor<T>*>&);         \
  template void init_normal<T>(Param<T>&, double, std::mt19937_64&);          \
  template void leaky_relu_inplace<T>(Mat<T>&);                               \
  template void leaky_relu_backward<T>(const Mat<T>&, Mat<T>&);               \
  template class Linear<T>;                                                   \
  template class Conv2d<T>;                                                   \
  template class ConvTranspose2d<T>;                                          \
  template class GroupNorm<T>;                                                \
  template class ConvBlock<T>;                                                \
  template class UpBlock<T>;

DISENT_NN_INSTANTIATE(float)
DISENT_NN_INSTANTIATE(double)

}  // namespace disent::nn
