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

#pragma once

#include <cmath>
#include <string_view>

#include "drivesal/common/action.hpp"
#include "drivesal/diffcore/tensor.hpp"

namespace drivesal {

/// Scalar loss value together with its gradient w.r.t. the differentiable operand.
template <typename T>
struct LossResult {
  T value = T(0);
  Tensor<T> grad;
};

/// Negative cosine similarity between the flattened prediction and target.
/// The target must have nonzero norm; a prediction with norm below 1e-12 yields
/// loss 0 and a zero gradient.
template <typename T>
LossResult<T> cosine_loss(const Tensor<T>& predicted, const Tensor<T>& target) {
  require(predicted.size() == target.size(), ErrorKind::shape,
          "cosine_loss operands differ in length: ", shape_string(predicted.shape()), " vs ",
          shape_string(target.shape()));
  double dot = 0.0, pp = 0.0, tt = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    dot += double(predicted[i]) * double(target[i]);
    pp += double(predicted[i]) * double(predicted[i]);
    tt += double(target[i]) * double(target[i]);
  }
  const double tnorm = std::sqrt(tt);
  require(tnorm > 0.0, ErrorKind::domain, "cosine_loss target has zero norm");
  LossResult<T> result{T(0), Tensor<T>(predicted.shape())};
  const double pnorm = std::sqrt(pp);
  if (pnorm < 1e-12) return result;
  const double cosine = dot / (pnorm * tnorm);
  result.value = T(-cosine);
  // d/dp of -(p.t)/(|p||t|) = -t/(|p||t|) + (p.t) p / (|p|^3 |t|)
  const double a = 1.0 / (pnorm * tnorm);
  const double b = cosine / pp;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    result.grad[i] = T(-a * double(target[i]) + b * double(predicted[i]));
  return result;
}

/// Mean of the squared per-actuator errors over (steering, throttle, brake).
template <typename T>
LossResult<T> action_mse(const Tensor<T>& predicted, const Tensor<T>& truth) {
  require(predicted.size() == 3 && truth.size() == 3, ErrorKind::shape,
          "action_mse expects length-3 actions, got ", shape_string(predicted.shape()), " and ",
          shape_string(truth.shape()));
  LossResult<T> result{T(0), Tensor<T>(predicted.shape())};
  for (std::size_t i = 0; i < 3; ++i) {
    const T d = predicted[i] - truth[i];
    result.value += d * d;
    result.grad[i] = T(2) * d / T(3);
  }
  result.value /= T(3);
  return result;
}

inline double action_mse(const DrivingAction& predicted, const DrivingAction& truth) {
  const double ds = predicted.steering - truth.steering;
  const double dt = predicted.throttle - truth.throttle;
  const double db = predicted.brake - truth.brake;
  return (ds * ds + dt * dt + db * db) / 3.0;
}

enum class SparsityVariant {
  squared,  // mean of map^2 (default)
  linear,   // mean of map
};

inline std::string_view to_string(SparsityVariant v) {
  return v == SparsityVariant::squared ? "squared" : "linear";
}

inline SparsityVariant parse_sparsity_variant(std::string_view s) {
  if (s == "squared") return SparsityVariant::squared;
  if (s == "linear") return SparsityVariant::linear;
  fail(ErrorKind::config, "unknown sparsity variant '", s, "' (expected squared|linear)");
}

/// Average attention over all pixels of an HxW map with values in [0,1].
template <typename T>
LossResult<T> attention_sparsity(const Tensor<T>& map,
                                 SparsityVariant variant = SparsityVariant::squared) {
  constexpr double kTolerance = 1e-6;
  LossResult<T> result{T(0), Tensor<T>(map.shape())};
  const double n = double(map.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const double v = map[i];
    require(v >= -kTolerance && v <= 1.0 + kTolerance, ErrorKind::domain,
            "attention_sparsity: map value ", v, " at index ", i, " is outside [0,1]");
    if (variant == SparsityVariant::squared) {
      acc += v * v;
      result.grad[i] = T(2.0 * v / n);
    } else {
      acc += v;
      result.grad[i] = T(1.0 / n);
    }
  }
  result.value = T(acc / n);
  return result;
}

/// Weighted sum of the sparsity term and the driving-error term.
inline double total_loss(double sparsity_loss, double action_loss, double lambda1,
                         double lambda2) {
  require(lambda1 >= 0.0 && lambda2 >= 0.0, ErrorKind::domain,
          "loss weights must be nonnegative, got ", lambda1, ", ", lambda2);
  require(lambda1 > 0.0 || lambda2 > 0.0, ErrorKind::domain,
          "loss weights must not both be zero");
  return lambda1 * sparsity_loss + lambda2 * action_loss;
}

}  // namespace drivesal
