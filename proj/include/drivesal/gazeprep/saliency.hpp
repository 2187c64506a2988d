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
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drivesal/image/image.hpp"
#include "drivesal/simworld/camera.hpp"

namespace drivesal {

/// Reference resolution at which the pixel constants below were chosen.
inline constexpr double kReferenceWidth = 227.0;
inline constexpr double kReferenceSigma = 20.0;
inline constexpr double kReferenceAlignThreshold = 10.0;

struct AlignedGaze {
  std::size_t frame_idx = 0;
  double x = 0.0;
  double y = 0.0;
  std::size_t accepted_count = 1;  // reference plus accepted candidates
};

/// Slot weights: reference first, then the four preceding samples.
inline constexpr std::array<double, 5> kAlignWeights{5.0, 4.0, 3.0, 2.0, 1.0};

/// Fuses the gaze samples around one frame. The reference is the latest
/// sample at or before the frame; each of the four samples before it is kept
/// when within `threshold_px` of the reference. Returns nothing when no
/// sample precedes the frame. `gaze` must be sorted by time.
inline std::optional<AlignedGaze> align_gaze_with_threshold(std::int64_t frame_t_ms,
                                                            std::span<const GazeSample> gaze,
                                                            double threshold_px) {
  const auto after = std::upper_bound(
      gaze.begin(), gaze.end(), frame_t_ms,
      [](std::int64_t t, const GazeSample& g) { return t < g.t_ms; });
  if (after == gaze.begin()) return std::nullopt;
  const std::size_t ref = std::size_t(after - gaze.begin()) - 1;
  const GazeSample& r = gaze[ref];
  double wsum = kAlignWeights[0], sx = kAlignWeights[0] * r.x, sy = kAlignWeights[0] * r.y;
  std::size_t accepted = 1;
  for (std::size_t slot = 1; slot < kAlignWeights.size() && slot <= ref; ++slot) {
    const GazeSample& c = gaze[ref - slot];
    if (std::hypot(c.x - r.x, c.y - r.y) > threshold_px) continue;
    wsum += kAlignWeights[slot];
    sx += kAlignWeights[slot] * c.x;
    sy += kAlignWeights[slot] * c.y;
    ++accepted;
  }
  return AlignedGaze{0, sx / wsum, sy / wsum, accepted};
}

/// Threshold scaled from 10 px at width 227.
inline std::optional<AlignedGaze> align_gaze_to_frame(std::int64_t frame_t_ms,
                                                      std::span<const GazeSample> gaze,
                                                      std::size_t frame_width) {
  return align_gaze_with_threshold(frame_t_ms, gaze,
                                   kReferenceAlignThreshold * double(frame_width) / kReferenceWidth);
}

/// Un-normalized Gaussian blob, peak 1 at (mu_x, mu_y). Returns [height, width].
template <typename T = double>
Tensor<T> gaussian_saliency_map(double mu_x, double mu_y, double sigma, std::size_t width,
                                std::size_t height) {
  require(sigma > 0.0, ErrorKind::domain, "saliency sigma must be > 0, got ", sigma);
  require(width > 0 && height > 0, ErrorKind::domain, "saliency map must be non-empty");
  Tensor<T> map({height, width});
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double dx = double(x) - mu_x, dy = double(y) - mu_y;
      map[y * width + x] = T(std::exp(-(dx * dx + dy * dy) * inv));
    }
  return map;
}

/// Inside the square of side 2*sigma centered on (width/2, height/2), boundary included.
inline bool is_central(double x, double y, double sigma, std::size_t width, std::size_t height) {
  return std::abs(x - double(width) / 2.0) <= sigma && std::abs(y - double(height) / 2.0) <= sigma;
}

enum class Corner { top_left, top_right, bottom_left, bottom_right };

inline constexpr std::array<Corner, 4> kCorners{Corner::top_left, Corner::top_right,
                                                Corner::bottom_left, Corner::bottom_right};

inline std::string provenance_tag(std::optional<Corner> c) {
  return c ? "crop-corner-" + std::to_string(int(*c)) : std::string("original");
}

/// Corner-anchored square crop, rescaled to `out` pixels.
struct CropGeometry {
  double ox = 0.0;
  double oy = 0.0;
  double side = 0.0;
  std::size_t out = 0;

  Vec2 forward(Vec2 p) const { return {(p.x - ox) * double(out) / side, (p.y - oy) * double(out) / side}; }
  Vec2 inverse(Vec2 p) const { return {p.x * side / double(out) + ox, p.y * side / double(out) + oy}; }
};

/// Crop side is width - margin*sigma. With margin 4 every central gaze lands
/// strictly outside the central square after rescaling (needs width > 10*sigma
/// for the gaze to stay inside all four crops).
inline CropGeometry corner_crop(Corner c, std::size_t width, double sigma, double margin_sigmas) {
  const double side = double(width) - margin_sigmas * sigma;
  require(side > 0.0, ErrorKind::domain, "crop side ", side, " px is not positive");
  const double far = double(width) - side;
  const bool right = c == Corner::top_right || c == Corner::bottom_right;
  const bool bottom = c == Corner::bottom_left || c == Corner::bottom_right;
  return {right ? far : 0.0, bottom ? far : 0.0, side, width};
}

struct AugmentedSample {
  Image8 frame;
  double x = 0.0;
  double y = 0.0;
  Corner corner = Corner::top_left;
};

/// Four corner crops of a frame whose gaze is central; empty otherwise.
/// Crops whose mapped gaze leaves the frame are dropped.
inline std::vector<AugmentedSample> central_bias_augment(const Image8& frame, double gx, double gy,
                                                         double sigma, double margin_sigmas = 4.0) {
  require(frame.width == frame.height, ErrorKind::shape, "frames must be square, got ",
          frame.width, "x", frame.height);
  std::vector<AugmentedSample> out;
  if (!is_central(gx, gy, sigma, frame.width, frame.height)) return out;
  const auto img = to_tensor<float>(frame);
  const double w = double(frame.width);
  for (Corner c : kCorners) {
    const CropGeometry g = corner_crop(c, frame.width, sigma, margin_sigmas);
    const Vec2 p = g.forward({gx, gy});
    if (p.x < 0.0 || p.x >= w || p.y < 0.0 || p.y >= w) continue;
    out.push_back({to_image(crop_resample(img, g.ox, g.oy, g.side, g.side, g.out, g.out)), p.x,
                   p.y, c});
  }
  return out;
}

}  // namespace drivesal
