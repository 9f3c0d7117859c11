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

#include <Eigen/Core>

#if defined(__SSE__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace disent::nn {

/// Flushes float denormals to zero while alive. Saturated softplus units
/// otherwise feed denormal tangents into every product and slow steps ~4x.
class DenormalFlush {
 public:
#if defined(__SSE__)
  DenormalFlush() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~DenormalFlush() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Col = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using Row = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// Batch of feature maps stored channels-by-pixels: column (b * h + y) * w + x
/// holds the channel vector of pixel (y, x) of image b.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  Mat<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), data(Mat<T>::Zero(c_, static_cast<Eigen::Index>(n_) * h_ * w_)) {}

  int pixels() const { return h * w; }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  /// Images [first, first + count).
  Tensor slice(int first, int count) const;
  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.n = n, out.c = c, out.h = h, out.w = w;
    out.data = data.template cast<U>();
    return out;
  }
};

template <typename T>
Tensor<T> concat(const std::vector<const Tensor<T>*>& parts);

template <typename T>
struct Param {
  Mat<T> value;
  Mat<T> grad;
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename T>
using ParamRefs = std::vector<std::pair<std::string, Param<T>*>>;

/// Kaiming-normal init with the given gain over `fan_in`.
template <typename T>
void init_normal(Param<T>& p, double stddev, std::mt19937_64& rng);

constexpr double kLeakySlope = 0.2;

template <typename T>
void leaky_relu_inplace(Mat<T>& x);
/// dx = dy where the forward output was positive, slope * dy elsewhere.
template <typename T>
void leaky_relu_backward(const Mat<T>& y, Mat<T>& dy);

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(int in, int out);
  void init(std::mt19937_64& rng, double gain = 1.0);
  void collect(const std::string& prefix, ParamRefs<T>& out);

  /// y = W x + b for every column of x.
  Mat<T> forward(const Mat<T>& x) const;
  /// Accumulates parameter gradients; returns dx when requested.
  Mat<T> backward(const Mat<T>& x, const Mat<T>& dy, bool need_dx);

  int in() const { return static_cast<int>(weight.value.cols()); }
  int out() const { return static_cast<int>(weight.value.rows()); }

  Param<T> weight;
  Param<T> bias;
};

template <typename T>
struct ConvCache {
  Mat<T> cols;
  int n = 0, h = 0, w = 0;
};

/// Square-kernel convolution on channels-by-pixels tensors.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int cin, int cout, int kernel, int stride, int pad);
  void init(std::mt19937_64& rng, double gain);
  void collect(const std::string& prefix, ParamRefs<T>& out);

  Tensor<T> forward(const Tensor<T>& x, ConvCache<T>* cache) const;
  Tensor<T> backward(const ConvCache<T>& cache, const Tensor<T>& dy, bool need_dx);
  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Param<T> weight;  ///< cout x (k * k * cin), channel fastest
  Param<T> bias;

 private:
  int cin_ = 0, cout_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
};

/// Transposed convolution, kernel 4, stride 2, padding 1: doubles h and w.
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(int cin, int cout);
  void init(std::mt19937_64& rng, double gain);
  void collect(const std::string& prefix, ParamRefs<T>& out);

  Tensor<T> forward(const Tensor<T>& x, Tensor<T>* input_cache) const;
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy, bool need_dx);

  Param<T> weight;  ///< (16 * cout) x cin
  Param<T> bias;

 private:
  int cin_ = 0, cout_ = 0;
};

template <typename T>
struct NormCache {
  Mat<T> xhat;
  Mat<T> inv_std;  ///< groups x n
};

template <typename T>
class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(int channels, int groups);
  void collect(const std::string& prefix, ParamRefs<T>& out);

  Tensor<T> forward(const Tensor<T>& x, NormCache<T>* cache) const;
  Tensor<T> backward(const NormCache<T>& cache, const Tensor<T>& dy);

  Param<T> gamma;
  Param<T> beta;

 private:
  int channels_ = 0, groups_ = 1;
};

/// conv -> group norm -> leaky relu.
template <typename T>
class ConvBlock {
 public:
  struct Cache {
    ConvCache<T> conv;
    NormCache<T> norm;
    Mat<T> out;
  };
  ConvBlock() = default;
  ConvBlock(int cin, int cout, int kernel, int stride);
  void init(std::mt19937_64& rng);
  void collect(const std::string& prefix, ParamRefs<T>& out);
  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const;
  Tensor<T> backward(const Cache& cache, const Tensor<T>& dy, bool need_dx);

  Conv2d<T> conv;
  GroupNorm<T> norm;
};

/// Transposed conv -> group norm -> leaky relu.
template <typename T>
class UpBlock {
 public:
  struct Cache {
    Tensor<T> in;
    NormCache<T> norm;
    Mat<T> out;
  };
  UpBlock() = default;
  UpBlock(int cin, int cout);
  void init(std::mt19937_64& rng);
  void collect(const std::string& prefix, ParamRefs<T>& out);
  Tensor<T> forward(const Tensor<T>& x, Cache* cache) const;
  Tensor<T> backward(const Cache& cache, const Tensor<T>& dy, bool need_dx);

  ConvTranspose2d<T> conv;
  GroupNorm<T> norm;
};

}  // namespace disent::nn
