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
#include <cstdint>
#include <vector>

#include "drivesal/diffcore/tensor.hpp"

namespace drivesal {

/// 8-bit interleaved image (1 or 3 channels), row-major.
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }

  friend bool operator==(const Image8&, const Image8&) = default;
};

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// HxWxC tensor with values in [0,1].
template <typename T = float>
Tensor<T> to_tensor(const Image8& img) {
  Tensor<T> t({img.height, img.width, img.channels});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = T(img.pixels[i]) / T(255);
  return t;
}

/// Accepts HxWxC or HxW (single channel) tensors; values are clamped to [0,1].
template <typename T>
Image8 to_image(const Tensor<T>& t) {
  require(t.rank() == 2 || t.rank() == 3, ErrorKind::shape, "cannot view ",
          shape_string(t.shape()), " as an image");
  Image8 img(t.dim(1), t.dim(0), t.rank() == 3 ? t.dim(2) : 1);
  for (std::size_t i = 0; i < t.size(); ++i) img.pixels[i] = to_byte(double(t[i]));
  return img;
}

// Resampling uses pixel-index coordinates: pixel i sits at coordinate i. A
// crop with origin o and side s resampled to n pixels maps destination pixel
// j to source coordinate o + j*s/n, i.e. x' = (x - o) * n / s, which is the
// same affine map applied to gaze points.

template <typename T>
T sample_bilinear(const Tensor<T>& img, double x, double y, std::size_t c) {
  const std::size_t h = img.dim(0), w = img.dim(1);
  x = std::clamp(x, 0.0, double(w - 1));
  y = std::clamp(y, 0.0, double(h - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const T fx = T(x - double(x0)), fy = T(y - double(y0));
  const std::size_t ch = img.rank() == 3 ? img.dim(2) : 1;
  auto px = [&](std::size_t xx, std::size_t yy) { return img[(yy * w + xx) * ch + c]; };
  const T top = px(x0, y0) * (T(1) - fx) + px(x1, y0) * fx;
  const T bottom = px(x0, y1) * (T(1) - fx) + px(x1, y1) * fx;
  return top * (T(1) - fy) + bottom * fy;
}

/// Resamples the square region [ox, ox+side) x [oy, oy+side) to out_w x out_h.
template <typename T>
Tensor<T> crop_resample(const Tensor<T>& img, double ox, double oy, double side_x,
                        double side_y, std::size_t out_w, std::size_t out_h) {
  require(img.rank() == 2 || img.rank() == 3, ErrorKind::shape, "cannot resample ",
          shape_string(img.shape()));
  const std::size_t ch = img.rank() == 3 ? img.dim(2) : 1;
  Shape shape = img.rank() == 3 ? Shape{out_h, out_w, ch} : Shape{out_h, out_w};
  Tensor<T> out(shape);
  const double sx = side_x / double(out_w), sy = side_y / double(out_h);
  for (std::size_t y = 0; y < out_h; ++y)
    for (std::size_t x = 0; x < out_w; ++x)
      for (std::size_t c = 0; c < ch; ++c)
        out[(y * out_w + x) * ch + c] =
            sample_bilinear(img, ox + double(x) * sx, oy + double(y) * sy, c);
  return out;
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& img, std::size_t out_w, std::size_t out_h) {
  return crop_resample(img, 0.0, 0.0, double(img.dim(1)), double(img.dim(0)), out_w, out_h);
}

}  // namespace drivesal
