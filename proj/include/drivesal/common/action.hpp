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

namespace drivesal {

/// Actuator triple. Positive steering turns right (clockwise seen from above).
/// Deployment values are clamped to steering in [-1,1], throttle and brake in
/// [0,1]; network outputs are unclamped reals until `clamped()` is applied.
struct DrivingAction {
  double steering = 0.0;
  double throttle = 0.0;
  double brake = 0.0;

  DrivingAction clamped() const {
    return {std::clamp(steering, -1.0, 1.0), std::clamp(throttle, 0.0, 1.0),
            std::clamp(brake, 0.0, 1.0)};
  }

  bool in_range() const {
    return steering >= -1.0 && steering <= 1.0 && throttle >= 0.0 && throttle <= 1.0 &&
           brake >= 0.0 && brake <= 1.0;
  }

  std::array<double, 3> as_array() const { return {steering, throttle, brake}; }

  static DrivingAction from_array(const std::array<double, 3>& v) { return {v[0], v[1], v[2]}; }

  friend bool operator==(const DrivingAction&, const DrivingAction&) = default;
};

}  // namespace drivesal
