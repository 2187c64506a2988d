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

// Driver-centric renderer and the synthetic gaze oracle.
//
// The view is a top-down trapezoid anchored at the car: the bottom image row
// is the car's own position, the top row lies `ahead` meters in front of it,
// and the lateral half-span widens linearly from `near_half_span` to
// `far_half_span`, which gives a hood-camera-like perspective.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "drivesal/image/image.hpp"
#include "drivesal/simworld/vehicle.hpp"

namespace drivesal {

struct Frame {
  Image8 image;
  std::int64_t t_ms = 0;
};

/// Gaze point in frame pixel coordinates (pixel i at coordinate i).
struct GazeSample {
  std::int64_t t_ms = 0;
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const GazeSample&, const GazeSample&) = default;
};

using Rgb = std::array<std::uint8_t, 3>;

namespace palette {
inline constexpr Rgb asphalt{89, 89, 97};
inline constexpr Rgb marking{242, 242, 235};
inline constexpr Rgb grass{64, 140, 51};
inline constexpr Rgb building{153, 77, 64};
inline constexpr Rgb roadside_object{242, 153, 26};
inline constexpr Rgb parked_car{38, 77, 204};

inline Rgb obstacle(ObstacleKind k) {
  switch (k) {
    case ObstacleKind::building: return building;
    case ObstacleKind::roadside_object: return roadside_object;
    case ObstacleKind::parked_car: return parked_car;
  }
  return building;
}
}  // namespace palette

struct CameraConfig {
  std::size_t resolution = 227;
  double ahead = 24.0;
  double near_half_span = 6.0;
  double far_half_span = 14.0;
  double dash_period = 6.0;   // center-line dash + gap length, meters
  double center_line_half_width = 0.15;
  double edge_line_inset = 0.15;
  double edge_line_width = 0.2;

  double half_span(double forward) const {
    return near_half_span + (far_half_span - near_half_span) * forward / ahead;
  }
};

inline void to_json(nlohmann::json& j, const CameraConfig& c) {
  j = {{"resolution", c.resolution},         {"ahead", c.ahead},
       {"near_half_span", c.near_half_span}, {"far_half_span", c.far_half_span},
       {"dash_period", c.dash_period},       {"center_line_half_width", c.center_line_half_width},
       {"edge_line_inset", c.edge_line_inset}, {"edge_line_width", c.edge_line_width}};
}

inline void from_json(const nlohmann::json& j, CameraConfig& c) {
  c.resolution = j.at("resolution").get<std::size_t>();
  c.ahead = j.at("ahead").get<double>();
  c.near_half_span = j.at("near_half_span").get<double>();
  c.far_half_span = j.at("far_half_span").get<double>();
  c.dash_period = j.at("dash_period").get<double>();
  c.center_line_half_width = j.at("center_line_half_width").get<double>();
  c.edge_line_inset = j.at("edge_line_inset").get<double>();
  c.edge_line_width = j.at("edge_line_width").get<double>();
}

/// World point seen at pixel (u, v).
inline Vec2 pixel_to_world(const CameraConfig& cam, const CarState& car, double u, double v) {
  const double n = double(cam.resolution - 1);
  const double forward = (n - v) / n * cam.ahead;
  const double right = (u - n / 2.0) / (n / 2.0) * cam.half_span(forward);
  return car.position + car.forward() * forward + car.right() * right;
}

/// Pixel coordinates of a world point (may fall outside the frame).
inline Vec2 world_to_pixel(const CameraConfig& cam, const CarState& car, Vec2 p) {
  const double n = double(cam.resolution - 1);
  const Vec2 rel = p - car.position;
  const double forward = rel.dot(car.forward());
  const double right = rel.dot(car.right());
  const double half = std::max(cam.half_span(forward), 1e-6);
  return {n / 2.0 + right / half * (n / 2.0), n - forward / cam.ahead * n};
}

namespace detail {

inline bool dash_on(double arc_length, double period) {
  return std::fmod(arc_length, period) < period / 2.0;
}

}  // namespace detail

/// Track segments and obstacles close enough to appear in one frame.
struct VisibleScene {
  std::vector<std::size_t> segments;
  std::vector<const Obstacle*> obstacles;
};

inline VisibleScene visible_scene(const TrackSpec& track, const CameraConfig& cam,
                                  const CarState& car) {
  const double reach = std::hypot(cam.ahead, cam.far_half_span) + track.half_width() + 1.0;
  VisibleScene scene;
  for (std::size_t i = 0; i < track.segment_count(); ++i)
    if (track.project_on_segment(car.position, i).distance <= reach) scene.segments.push_back(i);
  for (const auto& o : track.obstacles()) {
    const Vec2 half = (o.max - o.min) * 0.5;
    if ((o.center() - car.position).norm() <= reach + half.norm()) scene.obstacles.push_back(&o);
  }
  return scene;
}

/// Surface color at a world point.
inline Rgb shade_point(const TrackSpec& track, const CameraConfig& cam, const VisibleScene& scene,
                       Vec2 p) {
  for (const Obstacle* o : scene.obstacles)
    if (o->contains(p)) return palette::obstacle(o->kind);
  TrackProjection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (auto i : scene.segments) {
    const auto proj = track.project_on_segment(p, i);
    if (proj.distance < best.distance) best = proj;
  }
  const double hw = track.half_width();
  if (!(best.distance < hw)) return palette::grass;
  if (best.distance <= cam.center_line_half_width &&
      detail::dash_on(best.arc_length, cam.dash_period))
    return palette::marking;
  const double edge_outer = hw - cam.edge_line_inset;
  if (best.distance <= edge_outer && best.distance >= edge_outer - cam.edge_line_width)
    return palette::marking;
  return palette::asphalt;
}

/// Renders the driver view. Deterministic in (track, camera, state, t_ms).
inline Frame render_frame(const TrackSpec& track, const CarState& car, std::int64_t t_ms,
                          const CameraConfig& cam = {}) {
  const std::size_t n = cam.resolution;
  require(n >= 2, ErrorKind::domain, "frame resolution must be at least 2");
  Frame frame{Image8(n, n, 3), t_ms};
  const auto scene = visible_scene(track, cam, car);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t u = 0; u < n; ++u) {
      const Rgb c = shade_point(track, cam, scene, pixel_to_world(cam, car, double(u), double(v)));
      for (std::size_t k = 0; k < 3; ++k) frame.image.at(u, v, k) = c[k];
    }
  }
  return frame;
}

inline bool is_road_color(const Rgb& c) { return c == palette::asphalt || c == palette::marking; }

struct GazeModel {
  double noise_px = 4.0;             // isotropic Gaussian pixel noise
  double saccade_probability = 0.1;  // jump to the nearest visible obstacle
};

inline Vec2 clamp_to_frame(Vec2 p, std::size_t resolution) {
  const double hi = double(resolution - 1);
  return {std::clamp(p.x, 0.0, hi), std::clamp(p.y, 0.0, hi)};
}

/// Synthetic gaze: projected look-ahead point plus Gaussian noise, with an
/// occasional saccade to the nearest obstacle whose center is in view.
inline GazeSample synth_gaze(const TrackSpec& track, const CarState& car, std::int64_t t_ms,
                             const CameraConfig& cam, const GazeModel& model, Rng& rng,
                             const OracleConstants& oc = {}) {
  const double hi = double(cam.resolution - 1);
  Vec2 target = world_to_pixel(cam, car, lookahead_point(track, car, oc));
  // Draw the saccade decision unconditionally so the random stream length
  // does not depend on the scenery.
  const bool saccade = rng.bernoulli(model.saccade_probability);
  if (saccade) {
    std::optional<Vec2> nearest;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& o : track.obstacles()) {
      const Vec2 c = o.center();
      const Vec2 px = world_to_pixel(cam, car, c);
      if (px.x < 0 || px.x > hi || px.y < 0 || px.y > hi) continue;
      const double d = (c - car.position).norm();
      if (d < best) {
        best = d;
        nearest = px;
      }
    }
    if (nearest) target = *nearest;
  }
  const double nx = rng.normal(), ny = rng.normal();
  const Vec2 noisy{target.x + model.noise_px * nx, target.y + model.noise_px * ny};
  const Vec2 clamped = clamp_to_frame(noisy, cam.resolution);
  return {t_ms, clamped.x, clamped.y};
}

}  // namespace drivesal
