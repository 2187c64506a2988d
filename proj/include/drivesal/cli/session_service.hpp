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

// Live human-driven capture session behind the HTTP endpoints of `serve`.
//
// One clock: milliseconds since the session started, read from an injected
// source. The simulation catches up lazily on every call, which yields the
// same frames a background ticker would, since frame times and physics
// ticks are fixed on that clock and actions take effect from the tick after
// their receipt.

#pragma once

#include <chrono>
#include <functional>
#include <mutex>
#include <optional>
#include <string>

#include "drivesal/common/random.hpp"
#include "drivesal/simworld/session.hpp"

namespace drivesal {

struct ServiceStartRequest {
  std::string track = "default";
  double frame_rate_hz = 10.0;
  std::size_t resolution = 227;
  double gaze_rate_hz = 50.0;  // nominal rate recorded in meta.json
};

struct GazeBatchResult {
  std::size_t accepted = 0;
  std::size_t dropped = 0;
};

struct FinishedSession {
  fs::path dir;
  std::size_t frames = 0;
  std::size_t gaze = 0;
  std::size_t dropped_gaze = 0;
};

class SessionService {
 public:
  using Clock = std::function<std::int64_t()>;  // monotone milliseconds

  SessionService(fs::path out_dir, Clock clock, std::uint64_t seed = 1)
      : out_dir_(std::move(out_dir)), clock_(std::move(clock)), seed_(seed) {}

  /// Wall clock in milliseconds from construction.
  static Clock steady_clock() {
    const auto t0 = std::chrono::steady_clock::now();
    return [t0] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(
                 std::chrono::steady_clock::now() - t0)
          .count();
    };
  }

  std::string start(const ServiceStartRequest& req) {
    std::lock_guard lock(mu_);
    require(!live_, ErrorKind::state, "session ", live_ ? live_->id : "", " is still live; ",
            "finish it before starting another");
    SessionConfig sc;
    sc.track = req.track;
    sc.frame_rate_hz = req.frame_rate_hz;
    sc.gaze_rate_hz = req.gaze_rate_hz;
    sc.camera.resolution = req.resolution;
    sc.seed = seed_ + counter_;
    sc.validate();
    const TrackSpec track = track_by_name(req.track);
    Rng rng(sc.seed);
    const CarState start = start_state(track, rng, sc.oracle);
    live_.emplace(Live{detail::concat("s", ++counter_), sc, track, clock_(), std::nullopt, {}, 0});
    live_->sim.emplace(live_->track, start, sc.tick_ms, sc.vehicle);
    capture(0);  // frame available immediately
    return live_->id;
  }

  /// Latest frame and its session time.
  Frame frame(const std::string& id) {
    std::lock_guard lock(mu_);
    Live& s = get(id);
    catch_up(s);
    return s.log.frames.back();
  }

  /// Receipt-stamped; client t_ms is advisory only.
  std::int64_t action(const std::string& id, const DrivingAction& a) {
    std::lock_guard lock(mu_);
    require(a.in_range(), ErrorKind::domain, "action (", a.steering, ", ", a.throttle, ", ",
            a.brake, ") outside the action ranges");
    Live& s = get(id);
    const std::int64_t now = catch_up(s);
    s.sim->set_action(a);
    return now;
  }

  /// Client timestamps are clamped to the receipt time. Samples that would
  /// break strict ordering or fall outside the frame are dropped and counted.
  GazeBatchResult gaze(const std::string& id, const std::vector<GazeSample>& samples) {
    std::lock_guard lock(mu_);
    Live& s = get(id);
    const std::int64_t now = catch_up(s);
    const double hi = double(s.cfg.camera.resolution);
    GazeBatchResult r;
    for (auto g : samples) {
      g.t_ms = std::min(g.t_ms, now);
      const bool inside = g.t_ms >= 0 && g.x >= 0 && g.x < hi && g.y >= 0 && g.y < hi;
      const bool ordered = s.log.gaze.empty() || g.t_ms > s.log.gaze.back().t_ms;
      if (inside && ordered && std::isfinite(g.x) && std::isfinite(g.y)) {
        s.log.gaze.push_back(g);
        ++r.accepted;
      } else {
        ++r.dropped;
      }
    }
    s.dropped_gaze += r.dropped;
    return r;
  }

  /// Writes <out>/<id> in the session on-disk format and closes the session.
  FinishedSession finish(const std::string& id) {
    std::lock_guard lock(mu_);
    Live& s = get(id);
    catch_up(s);
    s.log.meta = {s.cfg.camera.resolution, s.cfg.frame_rate_hz, s.cfg.gaze_rate_hz,
                  SessionSource::human,    s.cfg.seed,          s.cfg.track,
                  session_constants(s.cfg)};
    s.log.meta.constants["dropped_gaze"] = s.dropped_gaze;
    const fs::path dir = out_dir_ / s.id;
    write_session(dir, s.log);
    FinishedSession f{dir, s.log.frames.size(), s.log.gaze.size(), s.dropped_gaze};
    live_.reset();
    return f;
  }

  std::optional<std::string> live_id() const {
    std::lock_guard lock(mu_);
    return live_ ? std::optional<std::string>(live_->id) : std::nullopt;
  }

 private:
  struct Live {
    std::string id;
    SessionConfig cfg;
    TrackSpec track;
    std::int64_t t0 = 0;
    std::optional<Simulator> sim;  // points at `track`; built after placement
    SessionLog log;
    std::size_t dropped_gaze = 0;
  };

  Live& get(const std::string& id) {
    require(live_ && live_->id == id, ErrorKind::state, "no live session '", id, "'");
    return *live_;
  }

  void capture(std::int64_t t) {
    Live& s = *live_;
    s.sim->advance_to(t);
    s.log.frames.push_back(render_frame(s.track, s.sim->state(), t, s.cfg.camera));
    s.log.actions.push_back(s.sim->action());
  }

  /// Renders every frame due up to now; returns now on the session clock.
  std::int64_t catch_up(Live& s) {
    const std::int64_t now = std::max<std::int64_t>(clock_() - s.t0, 0);
    const std::int64_t period = s.cfg.frame_period_ms();
    for (std::int64_t t = std::int64_t(s.log.frames.size()) * period; t <= now; t += period)
      capture(t);
    s.sim->advance_to(now);
    return now;
  }

  fs::path out_dir_;
  Clock clock_;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  mutable std::mutex mu_;
  std::optional<Live> live_;
};

}  // namespace drivesal
