// Copyright (c) 2026 The DriveSal Authors. All Rights Reserved.
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

// Differentiable operators. Every operator is a pure forward function plus a
// backward function that takes the forward inputs and the upstream gradient
// and returns gradients for each differentiable operand. Nothing is cached
// inside the operators, so they are safe to call concurrently.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <string_view>

#include "drivesal/diffcore/tensor.hpp"

namespace drivesal {

enum class Padding {
  valid,     // no padding, output shrinks by k-1
  same,      // zero padding, output keeps the input extent
  periodic,  // wrap-around padding, output keeps the input extent
};

enum class Activation { relu, sigmoid, linear };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::linear: return "linear";
  }
  return "?";
}

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
  std::size_t height = 0, width = 0, channels = 0;
  std::size_t kernel_h = 0, kernel_w = 0, filters = 0;
  std::size_t out_h = 0, out_w = 0;
  std::size_t pad_top = 0, pad_left = 0;
  Padding padding = Padding::valid;

  std::size_t patch_size() const { return kernel_h * kernel_w * channels; }
  std::size_t out_pixels() const { return out_h * out_w; }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& kernels,
                           const Tensor<T>& bias, Padding padding) {
  require(input.rank() == 3, ErrorKind::shape, "conv2d input must be HxWxC, got ",
          shape_string(input.shape()));
  require(kernels.rank() == 4, ErrorKind::shape,
          "conv2d kernels must be khxkwxCxF, got ", shape_string(kernels.shape()));
  ConvGeometry g;
  g.height = input.dim(0);
  g.width = input.dim(1);
  g.channels = input.dim(2);
  g.kernel_h = kernels.dim(0);
  g.kernel_w = kernels.dim(1);
  g.filters = kernels.dim(3);
  g.padding = padding;
  require(kernels.dim(2) == g.channels, ErrorKind::shape,
          "conv2d channel mismatch: input ", shape_string(input.shape()), " vs kernels ",
          shape_string(kernels.shape()));
  require(bias.rank() == 1 && bias.dim(0) == g.filters, ErrorKind::shape,
          "conv2d bias ", shape_string(bias.shape()), " does not match kernels ",
          shape_string(kernels.shape()));
  if (padding == Padding::valid || padding == Padding::periodic) {
    require(g.kernel_h <= g.height && g.kernel_w <= g.width, ErrorKind::shape,
            "conv2d kernel ", shape_string(kernels.shape()), " larger than input ",
            shape_string(input.shape()));
  }
  if (padding == Padding::valid) {
    g.out_h = g.height - g.kernel_h + 1;
    g.out_w = g.width - g.kernel_w + 1;
  } else {
    g.out_h = g.height;
    g.out_w = g.width;
    g.pad_top = (g.kernel_h - 1) / 2;
    g.pad_left = (g.kernel_w - 1) / 2;
  }
  return g;
}

/// Source index along one axis for output position `o` and kernel tap `k`;
/// returns false for taps that land in zero padding.
inline bool source_index(std::size_t o, std::size_t k, std::size_t pad, std::size_t extent,
                         Padding padding, std::size_t& src) {
  const auto pos = static_cast<std::ptrdiff_t>(o + k) - static_cast<std::ptrdiff_t>(pad);
  const auto n = static_cast<std::ptrdiff_t>(extent);
  if (padding == Padding::periodic) {
    src = static_cast<std::size_t>(((pos % n) + n) % n);
    return true;
  }
  if (pos < 0 || pos >= n) return false;
  src = static_cast<std::size_t>(pos);
  return true;
}

/// Patch matrix of shape (out_h*out_w) x (kh*kw*C).
template <typename T>
AlignedVector<T> im2col(const Tensor<T>& input, const ConvGeometry& g) {
  AlignedVector<T> cols(g.out_pixels() * g.patch_size(), T(0));
  const T* src = input.data();
  T* dst = cols.data();
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        std::size_t sy = 0;
        const bool row_ok = source_index(oy, ky, g.pad_top, g.height, g.padding, sy);
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx, dst += g.channels) {
          std::size_t sx = 0;
          if (!row_ok || !source_index(ox, kx, g.pad_left, g.width, g.padding, sx)) continue;
          const T* px = src + (sy * g.width + sx) * g.channels;
          std::copy(px, px + g.channels, dst);
        }
      }
    }
  }
  return cols;
}

template <typename T>
void col2im_accumulate(const AlignedVector<T>& cols, const ConvGeometry& g, Tensor<T>& out) {
  T* dst = out.data();
  const T* src = cols.data();
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        std::size_t sy = 0;
        const bool row_ok = source_index(oy, ky, g.pad_top, g.height, g.padding, sy);
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx, src += g.channels) {
          std::size_t sx = 0;
          if (!row_ok || !source_index(ox, kx, g.pad_left, g.width, g.padding, sx)) continue;
          T* px = dst + (sy * g.width + sx) * g.channels;
          for (std::size_t c = 0; c < g.channels; ++c) px[c] += src[c];
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d, stride 1

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                 Padding padding) {
  const auto g = detail::conv_geometry(input, kernels, bias, padding);
  const auto cols = detail::im2col(input, g);
  Tensor<T> out({g.out_h, g.out_w, g.filters});
  detail::ConstMatrixMap<T> patches(cols.data(), g.out_pixels(), g.patch_size());
  detail::ConstMatrixMap<T> weights(kernels.data(), g.patch_size(), g.filters);
  detail::MatrixMap<T> result(out.data(), g.out_pixels(), g.filters);
  result.noalias() = patches * weights;
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), g.filters);
  result.rowwise() += b;
  return out;
}

template <typename T>
struct ConvGrads {
  Tensor<T> input;    // empty when not requested
  Tensor<T> kernels;  // empty when not requested
  Tensor<T> bias;     // empty when not requested
};

/// `want_input` / `want_params` skip work that the caller does not need, e.g.
/// the image gradient of a first layer or parameter gradients of a frozen net.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels,
                             const Tensor<T>& bias, Padding padding,
                             const Tensor<T>& grad_out, bool want_input = true,
                             bool want_params = true) {
  const auto g = detail::conv_geometry(input, kernels, bias, padding);
  require(grad_out.shape() == Shape{g.out_h, g.out_w, g.filters}, ErrorKind::shape,
          "conv2d upstream gradient ", shape_string(grad_out.shape()), " does not match output ",
          shape_string({g.out_h, g.out_w, g.filters}));
  ConvGrads<T> grads;
  detail::ConstMatrixMap<T> dout(grad_out.data(), g.out_pixels(), g.filters);
  if (want_params) {
    const auto cols = detail::im2col(input, g);
    detail::ConstMatrixMap<T> patches(cols.data(), g.out_pixels(), g.patch_size());
    grads.kernels = Tensor<T>(kernels.shape());
    detail::MatrixMap<T> dk(grads.kernels.data(), g.patch_size(), g.filters);
    dk.noalias() = patches.transpose() * dout;
    grads.bias = Tensor<T>(bias.shape());
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(grads.bias.data(), g.filters);
    db.noalias() = dout.colwise().sum();
  }
  if (want_input) {
    AlignedVector<T> dcols(g.out_pixels() * g.patch_size());
    detail::MatrixMap<T> dpatches(dcols.data(), g.out_pixels(), g.patch_size());
    detail::ConstMatrixMap<T> weights(kernels.data(), g.patch_size(), g.filters);
    dpatches.noalias() = dout * weights.transpose();
    grads.input = Tensor<T>(input.shape());
    detail::col2im_accumulate(dcols, g, grads.input);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Ties go to the first cell in scan order
// (top-left, top-right, bottom-left, bottom-right).

namespace detail {

template <typename T>
void check_pool_input(const Tensor<T>& input) {
  require(input.rank() == 3, ErrorKind::shape, "maxpool2x2 input must be HxWxC, got ",
          shape_string(input.shape()));
  require(input.dim(0) % 2 == 0 && input.dim(1) % 2 == 0, ErrorKind::shape,
          "maxpool2x2 needs even height and width, got ", shape_string(input.shape()));
}

template <typename T>
std::size_t pool_winner(const Tensor<T>& input, std::size_t oy, std::size_t ox, std::size_t c) {
  const std::size_t w = input.dim(1), ch = input.dim(2);
  std::size_t best = ((2 * oy) * w + 2 * ox) * ch + c;
  for (std::size_t dy = 0; dy < 2; ++dy) {
    for (std::size_t dx = 0; dx < 2; ++dx) {
      const std::size_t idx = ((2 * oy + dy) * w + 2 * ox + dx) * ch + c;
      if (input[idx] > input[best]) best = idx;
    }
  }
  return best;
}

}  // namespace detail

template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& input) {
  detail::check_pool_input(input);
  const std::size_t oh = input.dim(0) / 2, ow = input.dim(1) / 2, ch = input.dim(2);
  Tensor<T> out({oh, ow, ch});
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t c = 0; c < ch; ++c) out.at(y, x, c) = input[detail::pool_winner(input, y, x, c)];
  return out;
}

template <typename T>
Tensor<T> maxpool2x2_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  detail::check_pool_input(input);
  const std::size_t oh = input.dim(0) / 2, ow = input.dim(1) / 2, ch = input.dim(2);
  require(grad_out.shape() == Shape{oh, ow, ch}, ErrorKind::shape,
          "maxpool2x2 upstream gradient ", shape_string(grad_out.shape()),
          " does not match output ", shape_string({oh, ow, ch}));
  Tensor<T> grad(input.shape());
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t c = 0; c < ch; ++c)
        grad[detail::pool_winner(input, y, x, c)] += grad_out.at(y, x, c);
  return grad;
}

// ---------------------------------------------------------------------------
// Elementwise activations

template <typename T>
T sigmoid(T x) {
  // Split by sign so exp never overflows.
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> apply_activation(Activation kind, const Tensor<T>& x) {
  Tensor<T> out = x;
  out.drop_grad();
  switch (kind) {
    case Activation::relu:
      for (auto& v : out.values()) v = v > T(0) ? v : T(0);
      break;
    case Activation::sigmoid:
      for (auto& v : out.values()) v = sigmoid(v);
      break;
    case Activation::linear:
      break;
  }
  return out;
}

/// Derivative at relu(0) is taken as 0.
template <typename T>
Tensor<T> activation_backward(Activation kind, const Tensor<T>& x, const Tensor<T>& grad_out) {
  require(x.shape() == grad_out.shape(), ErrorKind::shape, "activation gradient ",
          shape_string(grad_out.shape()), " does not match input ", shape_string(x.shape()));
  Tensor<T> grad = grad_out;
  grad.drop_grad();
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < x.size(); ++i)
        if (!(x[i] > T(0))) grad[i] = T(0);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) {
        const T s = sigmoid(x[i]);
        grad[i] *= s * (T(1) - s);
      }
      break;
    case Activation::linear:
      break;
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Fully connected layer; the input is read in flatten order whatever its shape.

template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  require(weights.rank() == 2 && weights.dim(0) == input.size(), ErrorKind::shape,
          "dense weights ", shape_string(weights.shape()), " do not accept input ",
          shape_string(input.shape()));
  const std::size_t n = weights.dim(0), m = weights.dim(1);
  require(bias.rank() == 1 && bias.dim(0) == m, ErrorKind::shape, "dense bias ",
          shape_string(bias.shape()), " does not match weights ", shape_string(weights.shape()));
  Tensor<T> out({m});
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> x(input.data(), n);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), m);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> y(out.data(), m);
  detail::ConstMatrixMap<T> w(weights.data(), n, m);
  y.noalias() = x * w;
  y += b;
  return out;
}

template <typename T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             const Tensor<T>& grad_out, bool want_input = true,
                             bool want_params = true) {
  require(weights.rank() == 2 && weights.dim(0) == input.size() &&
              grad_out.size() == weights.dim(1),
          ErrorKind::shape, "dense backward shapes disagree: input ", shape_string(input.shape()),
          ", weights ", shape_string(weights.shape()), ", upstream ",
          shape_string(grad_out.shape()));
  const std::size_t n = weights.dim(0), m = weights.dim(1);
  DenseGrads<T> grads;
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> g(grad_out.data(), m);
  if (want_params) {
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> x(input.data(), n);
    grads.weights = Tensor<T>(weights.shape());
    detail::MatrixMap<T> dw(grads.weights.data(), n, m);
    dw.noalias() = x * g.transpose();
    grads.bias = Tensor<T>({m}, std::vector<T>(grad_out.values().begin(), grad_out.values().end()));
  }
  if (want_input) {
    grads.input = Tensor<T>(input.shape());
    detail::ConstMatrixMap<T> w(weights.data(), n, m);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dx(grads.input.data(), n);
    dx.noalias() = w * g;
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Max over adjacent disjoint pairs (2i, 2i+1) in flatten order; on a tie the
// even element wins.

template <typename T>
Tensor<T> pairwise_max(const Tensor<T>& input) {
  require(input.size() % 2 == 0, ErrorKind::shape, "pairwise_max needs an even length, got ",
          input.size());
  const std::size_t k = input.size() / 2;
  Tensor<T> out({k});
  for (std::size_t i = 0; i < k; ++i) out[i] = std::max(input[2 * i], input[2 * i + 1]);
  return out;
}

template <typename T>
Tensor<T> pairwise_max_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  require(input.size() % 2 == 0 && grad_out.size() * 2 == input.size(), ErrorKind::shape,
          "pairwise_max backward: input ", shape_string(input.shape()), ", upstream ",
          shape_string(grad_out.shape()));
  Tensor<T> grad(input.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const std::size_t winner = input[2 * i + 1] > input[2 * i] ? 2 * i + 1 : 2 * i;
    grad[winner] = grad_out[i];
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Elementwise product. `b` is either the same shape as `a`, or an HxW (or
// HxWx1) map broadcast across the channels of an HxWxC `a`.

namespace detail {

template <typename T>
bool broadcasts_map(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3) return false;
  const bool plain = b.rank() == 2 && b.dim(0) == a.dim(0) && b.dim(1) == a.dim(1);
  const bool single = b.rank() == 3 && b.dim(2) == 1 && b.dim(0) == a.dim(0) &&
                      b.dim(1) == a.dim(1);
  return plain || single;
}

template <typename T>
bool check_mul_shapes(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) return false;
  require(broadcasts_map(a, b), ErrorKind::shape, "elementwise_mul cannot combine ",
          shape_string(a.shape()), " with ", shape_string(b.shape()));
  return true;
}

}  // namespace detail

template <typename T>
Tensor<T> elementwise_mul(const Tensor<T>& a, const Tensor<T>& b) {
  const bool broadcast = detail::check_mul_shapes(a, b);
  Tensor<T> out(a.shape());
  if (!broadcast) {
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
  }
  const std::size_t ch = a.dim(2);
  for (std::size_t p = 0; p < b.size(); ++p)
    for (std::size_t c = 0; c < ch; ++c) out[p * ch + c] = a[p * ch + c] * b[p];
  return out;
}

template <typename T>
struct MulGrads {
  Tensor<T> a;
  Tensor<T> b;
};

template <typename T>
MulGrads<T> elementwise_mul_backward(const Tensor<T>& a, const Tensor<T>& b,
                                     const Tensor<T>& grad_out) {
  const bool broadcast = detail::check_mul_shapes(a, b);
  require(grad_out.shape() == a.shape(), ErrorKind::shape, "elementwise_mul upstream ",
          shape_string(grad_out.shape()), " does not match ", shape_string(a.shape()));
  MulGrads<T> grads{Tensor<T>(a.shape()), Tensor<T>(b.shape())};
  if (!broadcast) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      grads.a[i] = b[i] * grad_out[i];
      grads.b[i] = a[i] * grad_out[i];
    }
    return grads;
  }
  const std::size_t ch = a.dim(2);
  for (std::size_t p = 0; p < b.size(); ++p) {
    T acc = T(0);
    for (std::size_t c = 0; c < ch; ++c) {
      grads.a[p * ch + c] = b[p] * grad_out[p * ch + c];
      acc += a[p * ch + c] * grad_out[p * ch + c];
    }
    grads.b[p] = acc;
  }
  return grads;
}

}  // namespace drivesal
