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

// Kinematic bicycle car and the pure-pursuit oracle driver.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include <json.hpp>

#include "drivesal/common/action.hpp"
#include "drivesal/simworld/track.hpp"

namespace drivesal {

/// Heading is measured counter-clockwise from +x and kept in (-pi, pi].
struct CarState {
  Vec2 position;
  double heading = 0.0;
  double speed = 0.0;

  Vec2 forward() const { return {std::cos(heading), std::sin(heading)}; }
  Vec2 right() const { return {std::sin(heading), -std::cos(heading)}; }
  friend bool operator==(const CarState&, const CarState&) = default;
};

inline double normalize_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);  // [-pi, pi]
  return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a;
}

struct VehicleConstants {
  double wheelbase = 2.7;        // L, meters
  double max_steer = 0.45;       // delta_max, radians at |steering| = 1
  double max_accel = 3.0;        // a_max, m/s^2 at throttle = 1
  double max_brake = 8.0;        // b_max, m/s^2 at brake = 1
  double drag = 0.1;             // 1/s, linear speed drag

  /// Terminal speed under full throttle.
  double max_speed() const { return max_accel / drag; }
};

inline void to_json(nlohmann::json& j, const VehicleConstants& c) {
  j = {{"wheelbase", c.wheelbase},
       {"max_steer", c.max_steer},
       {"max_accel", c.max_accel},
       {"max_brake", c.max_brake},
       {"drag", c.drag}};
}

inline void from_json(const nlohmann::json& j, VehicleConstants& c) {
  c.wheelbase = j.at("wheelbase").get<double>();
  c.max_steer = j.at("max_steer").get<double>();
  c.max_accel = j.at("max_accel").get<double>();
  c.max_brake = j.at("max_brake").get<double>();
  c.drag = j.at("drag").get<double>();
}

/// Advances the car by dt. The position moves with the pre-step speed and
/// heading; positive steering turns clockwise (to the right).
inline CarState step_dynamics(const CarState& state, const DrivingAction& raw_action, double dt,
                              const VehicleConstants& k = {}) {
  require(dt > 0.0, ErrorKind::domain, "step_dynamics needs dt > 0, got ", dt);
  const DrivingAction a = raw_action.clamped();
  CarState next = state;
  next.position = state.position + state.forward() * (state.speed * dt);
  const double yaw_rate = state.speed / k.wheelbase * std::tan(a.steering * k.max_steer);
  next.heading = normalize_angle(state.heading - yaw_rate * dt);
  const double accel = k.max_accel * a.throttle - k.max_brake * a.brake - k.drag * state.speed;
  next.speed = std::clamp(state.speed + accel * dt, 0.0, k.max_speed());
  return next;
}

struct OracleConstants {
  double lookahead_gain = 1.0;  // seconds of travel
  double lookahead_min = 6.0;   // meters
  double lookahead_max = 18.0;  // meters
  double cruise_speed = 11.0;   // m/s on straights
  double max_lateral_accel = 3.0;
  double speed_gain = 0.5;      // throttle per m/s of speed deficit
  double brake_gain = 0.3;      // brake per m/s of overspeed

  double lookahead(double speed) const {
    return std::clamp(lookahead_gain * speed, lookahead_min, lookahead_max);
  }
};

inline void to_json(nlohmann::json& j, const OracleConstants& c) {
  j = {{"lookahead_gain", c.lookahead_gain}, {"lookahead_min", c.lookahead_min},
       {"lookahead_max", c.lookahead_max},   {"cruise_speed", c.cruise_speed},
       {"max_lateral_accel", c.max_lateral_accel}, {"speed_gain", c.speed_gain},
       {"brake_gain", c.brake_gain}};
}

inline void from_json(const nlohmann::json& j, OracleConstants& c) {
  c.lookahead_gain = j.at("lookahead_gain").get<double>();
  c.lookahead_min = j.at("lookahead_min").get<double>();
  c.lookahead_max = j.at("lookahead_max").get<double>();
  c.cruise_speed = j.at("cruise_speed").get<double>();
  c.max_lateral_accel = j.at("max_lateral_accel").get<double>();
  c.speed_gain = j.at("speed_gain").get<double>();
  c.brake_gain = j.at("brake_gain").get<double>();
}

/// Centerline point the oracle steers toward (and the synthetic gaze targets).
inline Vec2 lookahead_point(const TrackSpec& track, const CarState& state,
                            const OracleConstants& oc = {}) {
  const auto proj = track.project(state.position);
  return track.point_at(proj.arc_length + oc.lookahead(state.speed));
}

/// Speed the oracle aims for, limited by the sharpest curve in its preview.
inline double target_speed(const TrackSpec& track, const CarState& state,
                           const OracleConstants& oc = {}) {
  const auto proj = track.project(state.position);
  const double kappa = track.max_curvature_ahead(proj.arc_length, 2.0 * oc.lookahead(state.speed));
  if (kappa < 1e-9) return oc.cruise_speed;
  return std::min(oc.cruise_speed, std::sqrt(oc.max_lateral_accel / kappa));
}

/// Pure-pursuit steering plus proportional speed control.
inline DrivingAction oracle_action(const TrackSpec& track, const CarState& state,
                                   const OracleConstants& oc = {},
                                   const VehicleConstants& vc = {}) {
  const Vec2 target = lookahead_point(track, state, oc);
  const Vec2 rel = target - state.position;
  const double dist2 = std::max(rel.dot(rel), 1e-6);
  const Vec2 left{-state.right().x, -state.right().y};
  const double curvature = 2.0 * rel.dot(left) / dist2;
  const double wheel_angle = std::atan(curvature * vc.wheelbase);

  DrivingAction action;
  action.steering = -wheel_angle / vc.max_steer;
  const double v_target = target_speed(track, state, oc);
  const double deficit = v_target - state.speed;
  if (deficit >= 0.0) {
    action.throttle = vc.drag * v_target / vc.max_accel + oc.speed_gain * deficit;
    action.brake = 0.0;
  } else {
    action.throttle = 0.0;
    action.brake = oc.brake_gain * -deficit;
  }
  return action.clamped();
}

}  // namespace drivesal
