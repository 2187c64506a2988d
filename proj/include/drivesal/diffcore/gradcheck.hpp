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

// Central finite-difference verification of every diffcore operator. Each
// operator output is reduced to a scalar through a fixed random projection,
// L = sum_i r_i * out_i, so the analytic side is the operator's backward
// called with upstream gradient r.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "drivesal/diffcore/losses.hpp"
#include "drivesal/diffcore/ops.hpp"

namespace drivesal {

struct GradCheckOptions {
  std::size_t instances = 10;
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error, so entries whose true gradient
  /// is exactly zero do not divide roundoff by zero.
  double relative_floor = 1e-6;
  std::uint64_t seed = 20260101;
};

struct GradCheckCase {
  std::string op;
  std::size_t instances = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)
inline double max_relative_error(std::span<const double> analytic,
                                 std::span<const double> numeric, double floor) {
  require(analytic.size() == numeric.size(), ErrorKind::shape,
          "gradient length mismatch in max_relative_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

/// Central differences of `f` with respect to every entry of `x` (restored on exit).
inline std::vector<double> numeric_gradient(const std::function<double()>& f,
                                            Tensor<double>& x, double h) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

namespace detail {

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

inline double project(const Tensor<double>& out, const Tensor<double>& weights) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * weights[i];
  return acc;
}

/// Pushes every value at least `gap` away from zero (relu kinks).
inline void avoid_zero(Tensor<double>& t, double gap) {
  for (auto& v : t.values())
    if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
}

/// Separates each max-pool window / pair so no perturbation can flip a winner.
inline void spread_values(Tensor<double>& t, std::mt19937_64& rng) {
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t rank = 0; rank < order.size(); ++rank)
    t[order[rank]] = -1.0 + 2.0 * double(rank) / double(order.size());
}

class CaseRunner {
 public:
  CaseRunner(std::string name, const GradCheckOptions& opts) : opts_(opts) {
    result_.op = std::move(name);
  }

  void check(std::span<const double> analytic, std::span<const double> numeric) {
    result_.max_relative_error = std::max(
        result_.max_relative_error, max_relative_error(analytic, numeric, opts_.relative_floor));
  }

  void finish_instance() { ++result_.instances; }

  GradCheckCase done() {
    result_.passed = result_.instances >= opts_.instances &&
                     result_.max_relative_error < opts_.tolerance;
    return result_;
  }

 private:
  const GradCheckOptions& opts_;
  GradCheckCase result_;
};

inline std::vector<double> to_vector(const Tensor<double>& t) {
  return {t.values().begin(), t.values().end()};
}

}  // namespace detail

inline GradCheckCase gradcheck_conv2d(const GradCheckOptions& opts, Padding padding,
                                      const std::string& name) {
  detail::CaseRunner runner(name, opts);
  std::mt19937_64 rng(opts.seed);
  for (std::size_t inst = 0; inst < opts.instances; ++inst) {
    auto input = detail::random_tensor({8, 8, 2}, rng);
    auto kernels = detail::random_tensor({3, 3, 2, 4}, rng);
    auto bias = detail::random_tensor({4}, rng);
    const auto out_shape = conv2d(input, kernels, bias, padding).shape();
    auto r = detail::random_tensor(out_shape, rng);
    auto loss = [&] { return detail::project(conv2d(input, kernels, bias, padding), r); };
    const auto grads = conv2d_backward(input, kernels, bias, padding, r);
    runner.check(detail::to_vector(grads.input), numeric_gradient(loss, input, opts.step));
    runner.check(detail::to_vector(grads.kernels), numeric_gradient(loss, kernels, opts.step));
    runner.check(detail::to_vector(grads.bias), numeric_gradient(loss, bias, opts.step));
    runner.finish_instance();
  }
  return runner.done();
}

inline GradCheckCase gradcheck_maxpool(const GradCheckOptions& opts) {
  detail::CaseRunner runner("maxpool2x2", opts);
  std::mt19937_64 rng(opts.seed + 1);
  for (std::size_t inst = 0; inst < opts.instances; ++inst) {
    Tensor<double> input({6, 6, 3});
    detail::spread_values(input, rng);
    auto r = detail::random_tensor({3, 3, 3}, rng);
    auto loss = [&] { return detail::project(maxpool2x2(input), r); };
    runner.check(detail::to_vector(maxpool2x2_backward(input, r)),
                 numeric_gradient(loss, input, opts.step));
    runner.finish_instance();
  }
  return runner.done();
}

inline GradCheckCase gradcheck_activation(const GradCheckOptions& opts, Activation kind) {
  detail::CaseRunner runner("activation/" + std::string(to_string(kind)), opts);
  std::mt19937_64 rng(opts.seed + 2 + static_cast<std::uint64_t>(kind));
  for (std::size_t inst = 0; inst < opts.instances; ++inst) {
    auto x = detail::random_tensor({4, 5, 3}, rng, -3.0, 3.0);
    if (kind == Activation::relu) detail::avoid_zero(x, 1e-3);
    auto r = detail::random_tensor(x.shape(), rng);
    auto loss = [&] { return detail::project(apply_activation(kind, x), r); };
    runner.check(detail::to_vector(activation_backward(kind, x, r)),
                 numeric_gradient(loss, x, opts.step));
    runner.finish_instance();
  }
  return runner.done();
}

inline GradCheckCase gradcheck_dense(const GradCheckOptions& opts) {
  detail::CaseRunner runner("dense", opts);
  std::mt19937_64 rng(opts.seed + 10);
  for (std::size_t inst = 0; inst < opts.instances; ++inst) {
    auto x = detail::random_tensor({10}, rng);
    auto w = detail::random_tensor({10, 7}, rng);
    auto b = detail::random_tensor({7}, rng);
    auto r = detail::random_tensor({7}, rng);
    auto loss = [&] { return detail::project(dense(x, w, b), r); };
    const auto grads = dense_backward(x, w, r);
    runner.check(detail::to_vector(grads.input), numeric_gradient(loss, x, opts.step));
    runner.check(detail::to_vector(grads.weights), numeric_gradient(loss, w, opts.step));
    runner.check(detail::to_vector(grads.bias), numeric_gradient(loss, b, opts.step));
    runner.finish_instance();
  }
  return runner.done();
}

inline GradCheckCase gradcheck_pairwise_max(const GradCheckOptions& opts) {
  detail::CaseRunner runner("pairwise_max", opts);
  std::mt19937_64 rng(opts.seed + 11);
  for (std::size_t inst = 0; inst < opts.instances; ++inst) {
    Tensor<double> x({20});
    detail::spread_values(x, rng);
    auto r = detail::random_tensor({10}, rng);
    auto loss = [&] { return detail::project(pairwise_max(x), r); };
    runner.check(detail::to_vector(pairwise_max_backward(x, r)),
                 numeric_gradient(loss, x, opts.step));
    runner.finish_instance();
  }
  return runner.done();
}

inline GradCheckCase gradcheck_elementwise_mul(const GradCheckOptions& opts, bool broadcast) {
  detail::CaseRunner runner(broadcast ? "elementwise_mul/broadcast" : "elementwise_mul/same",
                            opts);
  std::mt19937_64 rng(opts.seed + (broadcast ? 12 : 13));
  for (std::size_t inst = 0; inst < opts.instances; ++inst) {
    auto a = detail::random_tensor({5, 4, 3}, rng);
    auto b = broadcast ? detail::random_tensor({5, 4}, rng) : detail::random_tensor({5, 4, 3}, rng);
    auto r = detail::random_tensor(a.shape(), rng);
    auto loss = [&] { return detail::project(elementwise_mul(a, b), r); };
    const auto grads = elementwise_mul_backward(a, b, r);
    runner.check(detail::to_vector(grads.a), numeric_gradient(loss, a, opts.step));
    runner.check(detail::to_vector(grads.b), numeric_gradient(loss, b, opts.step));
    runner.finish_instance();
  }
  return runner.done();
}

inline GradCheckCase gradcheck_cosine_loss(const GradCheckOptions& opts) {
  detail::CaseRunner runner("cosine_loss", opts);
  std::mt19937_64 rng(opts.seed + 14);
  for (std::size_t inst = 0; inst < opts.instances; ++inst) {
    auto p = detail::random_tensor({6, 6}, rng);
    auto t = detail::random_tensor({6, 6}, rng, 0.0, 1.0);
    auto loss = [&] { return double(cosine_loss(p, t).value); };
    runner.check(detail::to_vector(cosine_loss(p, t).grad), numeric_gradient(loss, p, opts.step));
    runner.finish_instance();
  }
  return runner.done();
}

inline GradCheckCase gradcheck_action_mse(const GradCheckOptions& opts) {
  detail::CaseRunner runner("action_mse", opts);
  std::mt19937_64 rng(opts.seed + 15);
  for (std::size_t inst = 0; inst < opts.instances; ++inst) {
    auto p = detail::random_tensor({3}, rng);
    auto t = detail::random_tensor({3}, rng);
    auto loss = [&] { return double(action_mse(p, t).value); };
    runner.check(detail::to_vector(action_mse(p, t).grad), numeric_gradient(loss, p, opts.step));
    runner.finish_instance();
  }
  return runner.done();
}

inline GradCheckCase gradcheck_sparsity(const GradCheckOptions& opts, SparsityVariant variant) {
  detail::CaseRunner runner("attention_sparsity/" + std::string(to_string(variant)), opts);
  std::mt19937_64 rng(opts.seed + 16);
  for (std::size_t inst = 0; inst < opts.instances; ++inst) {
    // Keep clear of the [0,1] domain edges so +-h stays legal.
    auto m = detail::random_tensor({7, 5}, rng, 0.01, 0.99);
    auto loss = [&] { return double(attention_sparsity(m, variant).value); };
    runner.check(detail::to_vector(attention_sparsity(m, variant).grad),
                 numeric_gradient(loss, m, opts.step));
    runner.finish_instance();
  }
  return runner.done();
}

/// Runs every operator check. The suite passes iff every case passes.
inline std::vector<GradCheckCase> run_gradcheck_suite(const GradCheckOptions& opts = {}) {
  return {
      gradcheck_conv2d(opts, Padding::valid, "conv2d/valid"),
      gradcheck_conv2d(opts, Padding::same, "conv2d/same"),
      gradcheck_conv2d(opts, Padding::periodic, "conv2d/periodic"),
      gradcheck_maxpool(opts),
      gradcheck_activation(opts, Activation::relu),
      gradcheck_activation(opts, Activation::sigmoid),
      gradcheck_activation(opts, Activation::linear),
      gradcheck_dense(opts),
      gradcheck_pairwise_max(opts),
      gradcheck_elementwise_mul(opts, true),
      gradcheck_elementwise_mul(opts, false),
      gradcheck_cosine_loss(opts),
      gradcheck_action_mse(opts),
      gradcheck_sparsity(opts, SparsityVariant::squared),
      gradcheck_sparsity(opts, SparsityVariant::linear),
  };
}

}  // namespace drivesal
