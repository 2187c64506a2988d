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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "drivesal/common/error.hpp"

namespace drivesal {

using Shape = std::vector<std::size_t>;

/// Cache-line aligned allocation. Eigen's vectorized reductions peel an
/// unaligned head, so the summation order (and the last float bit) would
/// otherwise depend on where malloc happened to place a buffer.
template <typename T, std::size_t Align = 64>
struct AlignedAllocator {
  using value_type = T;
  template <typename U>
  struct rebind {
    using other = AlignedAllocator<U, Align>;
  };
  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U, Align>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t(Align)); }

  friend bool operator==(const AlignedAllocator&, const AlignedAllocator&) { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

inline std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major n-d array with an optional same-shape gradient buffer.
///
/// Images use HxWxC order (channel fastest). Conv kernels use khxkwxCxF,
/// which is also the row-major layout of the (kh*kw*C) x F GEMM operand.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), values_(shape_product(shape_), fill) {
    check_shape();
  }

  Tensor(Shape shape, const std::vector<T>& values)
      : shape_(std::move(shape)), values_(values.begin(), values.end()) {
    check_values();
  }

  Tensor(Shape shape, std::initializer_list<T> values)
      : shape_(std::move(shape)), values_(values) {
    check_values();
  }

  Tensor(Shape shape, AlignedVector<T> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    check_values();
  }

  static Tensor from(std::initializer_list<T> values) {
    return Tensor({values.size()}, AlignedVector<T>(values));
  }


  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  AlignedVector<T>& storage() noexcept { return values_; }
  const AlignedVector<T>& storage() const noexcept { return values_; }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  /// HxWxC element access.
  T& at(std::size_t y, std::size_t x, std::size_t c) {
    return values_[(y * shape_[1] + x) * shape_[2] + c];
  }
  const T& at(std::size_t y, std::size_t x, std::size_t c) const {
    return values_[(y * shape_[1] + x) * shape_[2] + c];
  }

  bool has_grad() const noexcept { return !grad_.empty(); }
  std::span<T> grad() noexcept { return grad_; }
  std::span<const T> grad() const noexcept { return grad_; }
  /// Allocates the gradient buffer (zeroed) if absent.
  std::span<T> ensure_grad() {
    if (grad_.size() != values_.size()) grad_.assign(values_.size(), T(0));
    return grad_;
  }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), T(0)); }
  void drop_grad() { grad_.clear(); grad_.shrink_to_fit(); }

  /// Same values, new shape with equal element count.
  Tensor reshaped(Shape shape) const {
    require(shape_product(shape) == size(), ErrorKind::shape, "cannot reshape ",
            shape_string(shape_), " to ", shape_string(shape));
    return Tensor(std::move(shape), values_);
  }

  Tensor flattened() const { return reshaped({size()}); }

  bool all_finite() const {
    auto finite = [](T v) { return std::isfinite(v); };
    return std::all_of(values_.begin(), values_.end(), finite) &&
           std::all_of(grad_.begin(), grad_.end(), finite);
  }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, AlignedVector<U>(values_.begin(), values_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  void check_values() const {
    check_shape();
    require(values_.size() == shape_product(shape_), ErrorKind::shape,
            "tensor of shape ", shape_string(shape_), " needs ",
            shape_product(shape_), " values, got ", values_.size());
  }

  void check_shape() const {
    for (auto extent : shape_) {
      require(extent > 0, ErrorKind::shape, "tensor extents must be positive, got ",
              shape_string(shape_));
    }
  }

  Shape shape_;
  AlignedVector<T> values_;
  AlignedVector<T> grad_;
};

template <typename T>
void require_finite(const Tensor<T>& t, const char* what) {
  require(t.all_finite(), ErrorKind::numeric, what, " produced non-finite values");
}

}  // namespace drivesal
