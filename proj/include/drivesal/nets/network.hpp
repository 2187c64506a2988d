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

// Sequential layer stack over the diffcore operators.

#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "drivesal/common/random.hpp"
#include "drivesal/diffcore/ops.hpp"
#include "drivesal/diffcore/sgd.hpp"

namespace drivesal {

enum class LayerKind { conv, maxpool, activation, pairwise_max, dense, reshape };

struct Layer {
  LayerKind kind = LayerKind::conv;
  Padding padding = Padding::same;     // conv
  Activation activation = Activation::linear;
  std::size_t weights = 0;             // conv/dense: index into the ParamSet; bias follows
  Shape shape;                         // reshape target
};

/// Inputs seen by each layer on one forward pass; the last entry is the output.
template <typename T>
struct Trace {
  std::vector<Tensor<T>> values;
  const Tensor<T>& output() const { return values.back(); }
};

/// Parameter gradients summed over a batch. Dense weight gradients are kept
/// as row stacks and reduced with one GEMM in `finalize`, which is far
/// cheaper than a rank-one update per sample for wide layers.
template <typename T>
class GradAccumulator {
 public:
  explicit GradAccumulator(const ParamSet<T>& params) : grads_(params.zero_grads()) {}

  std::vector<Tensor<T>>& grads() { return grads_; }

  void add(std::size_t index, const Tensor<T>& g) {
    T* dst = grads_[index].data();
    const T* src = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
  }

  void defer_dense(std::size_t weight_index, std::span<const T> x, std::span<const T> g) {
    auto& d = deferred_[weight_index];
    d.x.insert(d.x.end(), x.begin(), x.end());
    d.g.insert(d.g.end(), g.begin(), g.end());
    ++d.rows;
  }

  /// Reduces deferred dense rows, then multiplies every gradient by `scale`.
  std::vector<Tensor<T>>& finalize(T scale) {
    for (auto& [index, d] : deferred_) {
      if (d.rows == 0) continue;
      auto& w = grads_[index];
      const std::size_t n = w.dim(0), m = w.dim(1);
      detail::ConstMatrixMap<T> xs(d.x.data(), d.rows, n);
      detail::ConstMatrixMap<T> gs(d.g.data(), d.rows, m);
      detail::MatrixMap<T> dw(w.data(), n, m);
      dw.noalias() += xs.transpose() * gs;
      d = {};
    }
    for (auto& g : grads_)
      for (auto& v : g.storage()) v *= scale;
    return grads_;
  }

 private:
  struct Rows {
    AlignedVector<T> x, g;
    std::size_t rows = 0;
  };
  std::vector<Tensor<T>> grads_;
  std::map<std::size_t, Rows> deferred_;
};

template <typename T>
class Network {
 public:
  Network() = default;
  Network(Shape input_shape, ParamSet<T> params, std::vector<Layer> layers)
      : input_shape_(std::move(input_shape)), params_(std::move(params)), layers_(std::move(layers)) {
    Tensor<T> probe(input_shape_);
    (void)forward(probe);  // validates the whole chain once
  }

  const Shape& input_shape() const { return input_shape_; }
  const std::vector<Layer>& layers() const { return layers_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

  Tensor<T> forward(const Tensor<T>& x) const {
    check_input(x);
    Tensor<T> cur = x;
    for (const auto& layer : layers_) cur = apply(layer, cur);
    return cur;
  }

  Trace<T> forward_trace(const Tensor<T>& x) const {
    check_input(x);
    Trace<T> trace;
    trace.values.reserve(layers_.size() + 1);
    trace.values.push_back(x);
    for (const auto& layer : layers_) trace.values.push_back(apply(layer, trace.values.back()));
    return trace;
  }

  /// Shapes after every layer, starting with the input.
  std::vector<Shape> shape_chain() const {
    std::vector<Shape> shapes;
    for (const auto& t : forward_trace(Tensor<T>(input_shape_)).values) shapes.push_back(t.shape());
    return shapes;
  }

  /// Backpropagates `grad_out`. Parameter gradients go to `acc` when given
  /// (frozen networks pass nullptr); the input gradient is returned when
  /// `want_input`, otherwise an empty tensor.
  Tensor<T> backward(const Trace<T>& trace, Tensor<T> grad_out, GradAccumulator<T>* acc,
                     bool want_input) const {
    require(trace.values.size() == layers_.size() + 1, ErrorKind::state,
            "trace does not belong to this network");
    require(grad_out.shape() == trace.output().shape(), ErrorKind::shape, "output gradient ",
            shape_string(grad_out.shape()), " does not match output ",
            shape_string(trace.output().shape()));
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const Layer& layer = layers_[li];
      const Tensor<T>& in = trace.values[li];
      const bool need_input = want_input || li > 0;
      switch (layer.kind) {
        case LayerKind::conv: {
          auto g = conv2d_backward(in, params_.value(layer.weights),
                                   params_.value(layer.weights + 1), layer.padding, grad_out,
                                   need_input, acc != nullptr);
          if (acc) {
            acc->add(layer.weights, g.kernels);
            acc->add(layer.weights + 1, g.bias);
          }
          grad_out = std::move(g.input);
          break;
        }
        case LayerKind::dense: {
          if (acc) {
            acc->defer_dense(layer.weights, in.values(), grad_out.values());
            acc->add(layer.weights + 1, grad_out.reshaped({grad_out.size()}));
          }
          if (need_input) {
            grad_out = dense_backward(in, params_.value(layer.weights), grad_out, true, false).input;
          } else {
            grad_out = Tensor<T>();
          }
          break;
        }
        case LayerKind::maxpool:
          grad_out = maxpool2x2_backward(in, grad_out);
          break;
        case LayerKind::activation:
          grad_out = activation_backward(layer.activation, in, grad_out);
          break;
        case LayerKind::pairwise_max:
          grad_out = pairwise_max_backward(in, grad_out);
          break;
        case LayerKind::reshape:
          grad_out = grad_out.reshaped(in.shape());
          break;
      }
      if (!need_input) return Tensor<T>();
    }
    return grad_out;
  }

 private:
  void check_input(const Tensor<T>& x) const {
    require(x.shape() == input_shape_, ErrorKind::shape, "network expects input ",
            shape_string(input_shape_), ", got ", shape_string(x.shape()));
  }

  Tensor<T> apply(const Layer& layer, const Tensor<T>& x) const {
    switch (layer.kind) {
      case LayerKind::conv:
        return conv2d(x, params_.value(layer.weights), params_.value(layer.weights + 1),
                      layer.padding);
      case LayerKind::maxpool:
        return maxpool2x2(x);
      case LayerKind::activation:
        return apply_activation(layer.activation, x);
      case LayerKind::pairwise_max:
        return pairwise_max(x);
      case LayerKind::dense:
        return dense(x, params_.value(layer.weights), params_.value(layer.weights + 1));
      case LayerKind::reshape:
        return x.reshaped(layer.shape);
    }
    fail(ErrorKind::state, "unknown layer kind");
  }

  Shape input_shape_;
  ParamSet<T> params_;
  std::vector<Layer> layers_;
};

/// Builds a layer list while tracking the running shape and registering
/// uniformly initialized parameters.
template <typename T>
class NetworkBuilder {
 public:
  NetworkBuilder(Shape input, Rng* rng) : input_(input), shape_(std::move(input)), rng_(rng) {}

  /// gain 6 gives He-uniform (ReLU follows), gain 3 LeCun-uniform (linear or sigmoid).
  NetworkBuilder& conv(const std::string& name, std::size_t k, std::size_t filters, Padding pad,
                       double gain) {
    require(shape_.size() == 3, ErrorKind::shape, "conv needs an HxWxC input, have ",
            shape_string(shape_));
    const std::size_t c = shape_[2];
    const std::size_t w = add_param(name + ".kernels", {k, k, c, filters}, k * k * c, gain);
    add_param(name + ".bias", {filters}, 0, 0.0);
    layers_.push_back({LayerKind::conv, pad, Activation::linear, w, {}});
    if (pad == Padding::valid) {
      require(shape_[0] >= k && shape_[1] >= k, ErrorKind::shape, "kernel larger than input");
      shape_ = {shape_[0] - k + 1, shape_[1] - k + 1, filters};
    } else {
      shape_ = {shape_[0], shape_[1], filters};
    }
    return *this;
  }

  NetworkBuilder& activation(Activation a) {
    layers_.push_back({LayerKind::activation, Padding::same, a, 0, {}});
    return *this;
  }

  NetworkBuilder& maxpool() {
    require(shape_.size() == 3 && shape_[0] % 2 == 0 && shape_[1] % 2 == 0, ErrorKind::shape,
            "maxpool2x2 needs even spatial extents, have ", shape_string(shape_));
    layers_.push_back({LayerKind::maxpool, Padding::same, Activation::linear, 0, {}});
    shape_ = {shape_[0] / 2, shape_[1] / 2, shape_[2]};
    return *this;
  }

  NetworkBuilder& reshape(Shape s) {
    require(shape_product(s) == shape_product(shape_), ErrorKind::shape, "cannot reshape ",
            shape_string(shape_), " to ", shape_string(s));
    layers_.push_back({LayerKind::reshape, Padding::same, Activation::linear, 0, s});
    shape_ = std::move(s);
    return *this;
  }

  NetworkBuilder& pairwise_max() {
    require(shape_.size() == 1 && shape_[0] % 2 == 0, ErrorKind::shape,
            "pairwise_max needs an even-length vector, have ", shape_string(shape_));
    layers_.push_back({LayerKind::pairwise_max, Padding::same, Activation::linear, 0, {}});
    shape_ = {shape_[0] / 2};
    return *this;
  }

  NetworkBuilder& dense(const std::string& name, std::size_t out, double gain) {
    const std::size_t n = shape_product(shape_);
    const std::size_t w = add_param(name + ".weights", {n, out}, n, gain);
    add_param(name + ".bias", {out}, 0, 0.0);
    layers_.push_back({LayerKind::dense, Padding::same, Activation::linear, w, {}});
    shape_ = {out};
    return *this;
  }

  const Shape& shape() const { return shape_; }

  Network<T> build() && { return Network<T>(input_, std::move(params_), std::move(layers_)); }

 private:
  std::size_t add_param(const std::string& name, Shape shape, std::size_t fan_in, double gain) {
    Tensor<T> t(std::move(shape));
    if (rng_ && fan_in > 0 && gain > 0) {
      const double limit = std::sqrt(gain / double(fan_in));
      for (auto& v : t.storage()) v = T(rng_->uniform(-limit, limit));
    }
    return params_.add(name, std::move(t));
  }

  Shape input_;
  Shape shape_;
  Rng* rng_;
  ParamSet<T> params_;
  std::vector<Layer> layers_;
};

}  // namespace drivesal
