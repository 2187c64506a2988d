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
#include <span>
#include <string>
#include <vector>

#include "drivesal/diffcore/tensor.hpp"

namespace drivesal {

struct SgdConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double decay = 0.005;  // L2 coefficient added to the gradient
  std::size_t batch_size = 300;

  void validate() const {
    require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::config,
            "learning rate must be positive, got ", learning_rate);
    require(momentum >= 0.0 && momentum < 1.0, ErrorKind::config,
            "momentum must lie in [0,1), got ", momentum);
    require(decay >= 0.0 && std::isfinite(decay), ErrorKind::config,
            "decay must be nonnegative, got ", decay);
    require(batch_size >= 1, ErrorKind::config, "batch size must be positive");
  }
};

/// Named, ordered parameters with their momentum buffers.
///
/// Iteration order is insertion order. Checkpoints serialize parameters in this
/// order, so networks must add their parameters deterministically.
template <typename T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> velocity;
  };

  std::size_t add(std::string name, Tensor<T> value) {
    for (const auto& e : entries_) {
      require(e.name != name, ErrorKind::state, "duplicate parameter name '", name, "'");
    }
    Tensor<T> velocity(value.shape());
    entries_.push_back({std::move(name), std::move(value), std::move(velocity)});
    return entries_.size() - 1;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Tensor<T>& value(std::size_t i) { return entries_[i].value; }
  const Tensor<T>& value(std::size_t i) const { return entries_[i].value; }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return i;
    fail(ErrorKind::state, "no parameter named '", name, "'");
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  /// Zero-valued gradient buffers matching every parameter.
  std::vector<Tensor<T>> zero_grads() const {
    std::vector<Tensor<T>> grads;
    grads.reserve(entries_.size());
    for (const auto& e : entries_) grads.emplace_back(e.value.shape());
    return grads;
  }

  void reset_momentum() {
    for (auto& e : entries_) e.velocity.fill(T(0));
  }

  /// Values equal (bitwise), momentum ignored.
  bool same_values(const ParamSet& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      if (entries_[i].name != other.entries_[i].name) return false;
      if (!(entries_[i].value == other.entries_[i].value)) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
};

/// One momentum step with L2 weight decay:
///   v <- momentum * v - lr * (g + decay * w);  w <- w + v
/// The whole step is rejected, leaving params untouched, if any gradient
/// entry is non-finite.
template <typename T>
void sgd_step(ParamSet<T>& params, std::span<const Tensor<T>> grads, const SgdConfig& cfg) {
  cfg.validate();
  require(grads.size() == params.size(), ErrorKind::shape, "sgd_step got ", grads.size(),
          " gradients for ", params.size(), " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(grads[i].shape() == params.value(i).shape(), ErrorKind::shape,
            "gradient for '", params[i].name, "' has shape ", shape_string(grads[i].shape()),
            ", parameter has ", shape_string(params.value(i).shape()));
    for (const T g : grads[i].values()) {
      require(std::isfinite(g), ErrorKind::numeric, "non-finite gradient for parameter '",
              params[i].name, "'; step rejected");
    }
  }
  const T lr = T(cfg.learning_rate), mu = T(cfg.momentum), decay = T(cfg.decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& entry = params[i];
    T* w = entry.value.data();
    T* v = entry.velocity.data();
    const T* g = grads[i].data();
    for (std::size_t k = 0; k < entry.value.size(); ++k) {
      v[k] = mu * v[k] - lr * (g[k] + decay * w[k]);
      w[k] += v[k];
    }
  }
}

}  // namespace drivesal
