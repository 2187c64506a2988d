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
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "drivesal/common/error.hpp"
#include "drivesal/common/random.hpp"

namespace drivesal {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

enum class ObstacleKind { building, roadside_object, parked_car };

inline std::string_view to_string(ObstacleKind k) {
  switch (k) {
    case ObstacleKind::building: return "building";
    case ObstacleKind::roadside_object: return "roadside-object";
    case ObstacleKind::parked_car: return "parked-car";
  }
  return "?";
}

/// Axis-aligned rectangle [min, max] in world meters.
struct Obstacle {
  Vec2 min;
  Vec2 max;
  ObstacleKind kind = ObstacleKind::building;

  bool contains(Vec2 p) const { return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y; }
  Vec2 center() const { return (min + max) * 0.5; }
};

/// Closest-point query result against the centerline.
struct TrackProjection {
  double arc_length = 0.0;  // along the loop, in [0, length)
  double lateral = 0.0;     // signed, positive to the left of travel direction
  double distance = 0.0;    // |lateral|
  std::size_t segment = 0;
};

/// Closed loop of centerline waypoints plus roadside obstacles.
class TrackSpec {
 public:
  static constexpr double kCarWidth = 1.8;

  TrackSpec(std::vector<Vec2> waypoints, double half_width, std::vector<Obstacle> obstacles = {})
      : waypoints_(std::move(waypoints)), half_width_(half_width), obstacles_(std::move(obstacles)) {
    require(waypoints_.size() >= 4, ErrorKind::domain, "track needs at least 3 distinct waypoints");
    require(waypoints_.front() == waypoints_.back(), ErrorKind::domain,
            "track loop must be closed (first waypoint == last waypoint)");
    require(half_width_ > kCarWidth / 2, ErrorKind::domain, "road half-width ", half_width_,
            " m is narrower than half the car width");
    cumulative_.assign(waypoints_.size(), 0.0);
    for (std::size_t i = 1; i < waypoints_.size(); ++i) {
      const double len = (waypoints_[i] - waypoints_[i - 1]).norm();
      require(len > 0.0, ErrorKind::domain, "consecutive waypoints ", i - 1, " and ", i,
              " coincide");
      cumulative_[i] = cumulative_[i - 1] + len;
    }
  }

  const std::vector<Vec2>& waypoints() const { return waypoints_; }
  const std::vector<Obstacle>& obstacles() const { return obstacles_; }
  double half_width() const { return half_width_; }
  double length() const { return cumulative_.back(); }
  std::size_t segment_count() const { return waypoints_.size() - 1; }

  Vec2 segment_start(std::size_t i) const { return waypoints_[i]; }
  Vec2 segment_end(std::size_t i) const { return waypoints_[i + 1]; }

  double wrap(double s) const {
    const double len = length();
    s = std::fmod(s, len);
    return s < 0 ? s + len : s;
  }

  /// Projection restricted to the given segment.
  TrackProjection project_on_segment(Vec2 p, std::size_t i) const {
    const Vec2 a = waypoints_[i], b = waypoints_[i + 1];
    const Vec2 ab = b - a;
    const double len2 = ab.dot(ab);
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    const Vec2 q = a + ab * t;
    TrackProjection proj;
    proj.segment = i;
    proj.arc_length = wrap(cumulative_[i] + t * std::sqrt(len2));
    proj.distance = (p - q).norm();
    proj.lateral = ab.cross(p - a) >= 0 ? proj.distance : -proj.distance;
    return proj;
  }

  /// Closest point over all segments (first segment wins ties).
  TrackProjection project(Vec2 p) const {
    TrackProjection best;
    best.distance = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < segment_count(); ++i) {
      const auto proj = project_on_segment(p, i);
      if (proj.distance < best.distance) best = proj;
    }
    return best;
  }

  Vec2 point_at(double s) const {
    s = wrap(s);
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    const std::size_t i = std::min<std::size_t>(
        static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - cumulative_.begin() - 1, 0)),
        segment_count() - 1);
    const double seg = cumulative_[i + 1] - cumulative_[i];
    const double t = std::clamp((s - cumulative_[i]) / seg, 0.0, 1.0);
    return waypoints_[i] + (waypoints_[i + 1] - waypoints_[i]) * t;
  }

  /// Unit tangent (direction of travel) at arc length s.
  Vec2 tangent_at(double s) const {
    const Vec2 a = point_at(s - 0.5), b = point_at(s + 0.5);
    const Vec2 d = b - a;
    return d * (1.0 / d.norm());
  }

  /// Unsigned curvature estimated from the turning of the tangent over +-ds.
  double curvature_at(double s, double ds = 2.0) const {
    const Vec2 t0 = tangent_at(s - ds), t1 = tangent_at(s + ds);
    const double angle = std::atan2(t0.cross(t1), t0.dot(t1));
    return std::abs(angle) / (2.0 * ds);
  }

  /// Largest curvature over [s, s + span], sampled every meter.
  double max_curvature_ahead(double s, double span) const {
    double k = 0.0;
    for (double d = 0.0; d <= span; d += 1.0) k = std::max(k, curvature_at(s + d));
    return k;
  }

  bool on_road(Vec2 p) const { return project(p).distance < half_width_; }

 private:
  std::vector<Vec2> waypoints_;
  double half_width_;
  std::vector<Obstacle> obstacles_;
  std::vector<double> cumulative_;
};

/// Smooth closed loop of varying curvature with deterministic roadside scenery.
inline TrackSpec default_track() {
  constexpr std::size_t kPoints = 240;
  constexpr double kHalfWidth = 4.0;
  std::vector<Vec2> pts;
  pts.reserve(kPoints + 1);
  for (std::size_t i = 0; i < kPoints; ++i) {
    const double th = 2.0 * std::numbers::pi * double(i) / double(kPoints);
    const double r = 80.0 + 14.0 * std::sin(2.0 * th) + 7.0 * std::cos(3.0 * th);
    pts.push_back({r * std::cos(th), r * std::sin(th)});
  }
  pts.push_back(pts.front());

  // Scenery placed by a fixed generator so every build sees the same world.
  const TrackSpec bare(pts, kHalfWidth);
  Rng rng(0x5eed7a11);
  std::vector<Obstacle> obstacles;
  auto try_add = [&](Vec2 c, Vec2 half, ObstacleKind kind) {
    Obstacle o{c - half, c + half, kind};
    // Keep every corner and the center clear of the road surface.
    const Vec2 probes[] = {o.min, o.max, {o.min.x, o.max.y}, {o.max.x, o.min.y}, c};
    for (const auto& p : probes)
      if (bare.project(p).distance < kHalfWidth + 0.5) return;
    obstacles.push_back(o);
  };
  for (double s = 0.0; s < bare.length(); s += 9.0) {
    const Vec2 at = bare.point_at(s);
    const Vec2 t = bare.tangent_at(s);
    const Vec2 left{-t.y, t.x};
    const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const double u = rng.uniform();
    if (u < 0.30) {
      const double off = rng.uniform(12.0, 20.0);
      try_add(at + left * (side * off), {rng.uniform(3.0, 6.0), rng.uniform(3.0, 6.0)},
              ObstacleKind::building);
    } else if (u < 0.55) {
      try_add(at + left * (side * rng.uniform(5.5, 7.0)), {0.5, 0.5},
              ObstacleKind::roadside_object);
    } else if (u < 0.70) {
      try_add(at + left * (side * 6.0), {1.0, 1.0}, ObstacleKind::parked_car);
    }
  }
  return TrackSpec(std::move(pts), kHalfWidth, std::move(obstacles));
}

/// Long rectangular loop whose bottom edge is a straight road along +x.
inline TrackSpec straight_track(double half_length = 400.0, double half_width = 4.0) {
  std::vector<Vec2> pts;
  const double y_far = 300.0;
  for (double x = -half_length; x < half_length; x += 10.0) pts.push_back({x, 0.0});
  pts.push_back({half_length, 0.0});
  pts.push_back({half_length, y_far});
  pts.push_back({-half_length, y_far});
  pts.push_back({-half_length, 0.0});
  return TrackSpec(std::move(pts), half_width);
}

}  // namespace drivesal
