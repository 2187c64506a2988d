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

// Closed-loop sessions and their on-disk layout:
//
//   meta.json         resolution, rates, source, seed, constants
//   frames/NNNNNN.png 8-bit RGB
//   frames.jsonl      {"frame_idx", "t_ms"}
//   gaze.jsonl        {"t_ms", "x", "y"}
//   actions.jsonl     {"frame_idx", "steering", "throttle", "brake"}

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drivesal/common/files.hpp"
#include "drivesal/image/codec.hpp"
#include "drivesal/simworld/camera.hpp"

namespace drivesal {

inline TrackSpec track_by_name(const std::string& name) {
  if (name == "default") return default_track();
  if (name == "straight") return straight_track();
  fail(ErrorKind::config, "unknown track '", name, "' (expected default or straight)");
}

struct SessionConfig {
  std::string track = "default";
  std::size_t n_frames = 100;
  double frame_rate_hz = 10.0;
  double gaze_rate_hz = 50.0;
  bool synth_gaze = true;       // false: no gaze stream at all
  std::int64_t tick_ms = 10;    // physics step
  std::int64_t frame_jitter_ms = 5;  // frame k lands in [t_k, t_k + jitter]
  std::int64_t gaze_jitter_ms = 3;   // gaze j lands in [t_j - jitter, t_j + jitter]
  std::uint64_t seed = 1;
  CameraConfig camera;
  GazeModel gaze;
  VehicleConstants vehicle;
  OracleConstants oracle;

  std::int64_t frame_period_ms() const { return std::llround(1000.0 / frame_rate_hz); }
  std::int64_t gaze_period_ms() const { return std::llround(1000.0 / gaze_rate_hz); }

  void validate() const {
    require(n_frames >= 1, ErrorKind::config, "session needs at least one frame");
    require(frame_rate_hz > 0 && frame_rate_hz <= 100, ErrorKind::config,
            "frame rate must be in (0, 100] Hz, got ", frame_rate_hz);
    require(gaze_rate_hz >= frame_rate_hz && gaze_rate_hz <= 1000, ErrorKind::config,
            "gaze rate ", gaze_rate_hz, " Hz must be >= frame rate ", frame_rate_hz,
            " Hz and <= 1000 Hz");
    require(tick_ms >= 1, ErrorKind::config, "physics tick must be >= 1 ms");
    require(frame_jitter_ms >= 0 && 2 * frame_jitter_ms < frame_period_ms(), ErrorKind::config,
            "frame jitter must be >= 0 and below half the frame period");
    require(gaze_jitter_ms >= 0 && 2 * gaze_jitter_ms < gaze_period_ms(), ErrorKind::config,
            "gaze jitter must be >= 0 and below half the gaze period");
    require(camera.resolution >= 8, ErrorKind::config, "resolution must be >= 8");
    require(gaze.noise_px >= 0, ErrorKind::config, "gaze noise must be >= 0");
    require(gaze.saccade_probability >= 0 && gaze.saccade_probability <= 1, ErrorKind::config,
            "saccade probability must be in [0, 1]");
  }
};

enum class SessionSource { oracle, human };

inline std::string to_string(SessionSource s) { return s == SessionSource::oracle ? "oracle" : "human"; }

inline SessionSource parse_session_source(const std::string& s) {
  if (s == "oracle") return SessionSource::oracle;
  if (s == "human") return SessionSource::human;
  fail(ErrorKind::corrupt, "unknown session source '", s, "'");
}

struct SessionMeta {
  std::size_t resolution = 227;
  double frame_rate_hz = 10.0;
  double gaze_rate_hz = 50.0;
  SessionSource source = SessionSource::oracle;
  std::uint64_t seed = 0;
  std::string track = "default";
  Json constants = Json::object();
};

struct SessionLog {
  SessionMeta meta;
  std::vector<Frame> frames;
  std::vector<GazeSample> gaze;
  std::vector<DrivingAction> actions;  // one per frame
};

/// Checks every SessionLog invariant; throws `corrupt` naming the first breach.
inline void validate_session(const SessionLog& log) {
  const auto& m = log.meta;
  require(m.resolution >= 1, ErrorKind::corrupt, "session resolution is zero");
  require(m.frame_rate_hz > 0 && m.gaze_rate_hz >= m.frame_rate_hz, ErrorKind::corrupt,
          "gaze rate ", m.gaze_rate_hz, " Hz below frame rate ", m.frame_rate_hz, " Hz");
  require(log.actions.size() == log.frames.size(), ErrorKind::corrupt, "session has ",
          log.frames.size(), " frames but ", log.actions.size(), " actions");
  for (std::size_t i = 0; i < log.frames.size(); ++i) {
    const auto& f = log.frames[i];
    require(f.image.width == m.resolution && f.image.height == m.resolution &&
                f.image.channels == 3,
            ErrorKind::corrupt, "frame ", i, " is ", f.image.width, "x", f.image.height, "x",
            f.image.channels, ", expected ", m.resolution, "x", m.resolution, "x3");
    require(f.image.pixels.size() == m.resolution * m.resolution * 3, ErrorKind::corrupt,
            "frame ", i, " pixel buffer has the wrong size");
    require(i == 0 || f.t_ms > log.frames[i - 1].t_ms, ErrorKind::corrupt,
            "frame timestamps not strictly increasing at frame ", i);
    require(log.actions[i].in_range(), ErrorKind::corrupt, "action ", i, " out of range");
  }
  const double hi = double(m.resolution);
  for (std::size_t j = 0; j < log.gaze.size(); ++j) {
    const auto& g = log.gaze[j];
    require(g.x >= 0 && g.x < hi && g.y >= 0 && g.y < hi, ErrorKind::corrupt, "gaze ", j, " (",
            g.x, ", ", g.y, ") outside the ", m.resolution, "px frame");
    require(j == 0 || g.t_ms > log.gaze[j - 1].t_ms, ErrorKind::corrupt,
            "gaze timestamps not strictly increasing at sample ", j);
  }
}

/// Car on a fixed physics clock. Actions are held until replaced.
class Simulator {
 public:
  Simulator(const TrackSpec& track, CarState start, std::int64_t tick_ms,
            VehicleConstants vehicle = {})
      : track_(&track), state_(start), tick_ms_(tick_ms), vehicle_(vehicle) {
    require(tick_ms >= 1, ErrorKind::config, "physics tick must be >= 1 ms");
  }

  /// Runs whole ticks while the next tick boundary is <= t_ms.
  void advance_to(std::int64_t t_ms) {
    while (now_ms_ + tick_ms_ <= t_ms) {
      state_ = step_dynamics(state_, action_, double(tick_ms_) / 1000.0, vehicle_);
      now_ms_ += tick_ms_;
    }
  }

  void set_action(const DrivingAction& a) { action_ = a.clamped(); }
  const DrivingAction& action() const { return action_; }
  const CarState& state() const { return state_; }
  std::int64_t now_ms() const { return now_ms_; }
  const TrackSpec& track() const { return *track_; }

 private:
  const TrackSpec* track_;
  CarState state_;
  std::int64_t tick_ms_;
  std::int64_t now_ms_ = 0;
  VehicleConstants vehicle_;
  DrivingAction action_;
};

/// Centered, aligned start at a seed-chosen arc length, at the oracle's target speed.
inline CarState start_state(const TrackSpec& track, Rng& rng, const OracleConstants& oc = {}) {
  const double s = rng.uniform(0.0, track.length());
  const Vec2 t = track.tangent_at(s);
  CarState st{track.point_at(s), std::atan2(t.y, t.x), 0.0};
  st.speed = target_speed(track, st, oc);
  return st;
}

inline Json session_constants(const SessionConfig& cfg) {
  return {{"tick_ms", cfg.tick_ms},
          {"frame_jitter_ms", cfg.frame_jitter_ms},
          {"gaze_jitter_ms", cfg.gaze_jitter_ms},
          {"synth_gaze", cfg.synth_gaze},
          {"gaze_noise_px", cfg.gaze.noise_px},
          {"saccade_probability", cfg.gaze.saccade_probability},
          {"camera", cfg.camera},
          {"vehicle", cfg.vehicle},
          {"oracle", cfg.oracle}};
}

/// Closed-loop oracle run. Frames and gaze have independent jittered clocks;
/// each event sees the latest physics state at or before its timestamp.
inline SessionLog run_session(const TrackSpec& track, const SessionConfig& cfg) {
  cfg.validate();
  Rng clock_rng(cfg.seed);
  Rng gaze_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  SessionLog log;
  log.meta = {cfg.camera.resolution, cfg.frame_rate_hz, cfg.gaze_rate_hz, SessionSource::oracle,
              cfg.seed, cfg.track, session_constants(cfg)};

  const std::int64_t fp = cfg.frame_period_ms(), gp = cfg.gaze_period_ms();
  std::vector<std::int64_t> frame_t(cfg.n_frames);
  for (std::size_t k = 0; k < cfg.n_frames; ++k)
    frame_t[k] = fp + std::int64_t(k) * fp +
                 std::int64_t(clock_rng.index(std::size_t(cfg.frame_jitter_ms) + 1));
  std::vector<std::int64_t> gaze_t;
  if (cfg.synth_gaze) {
    const std::int64_t end = frame_t.back() + fp;
    for (std::int64_t j = 1; j * gp <= end; ++j) {
      const auto span = std::size_t(2 * cfg.gaze_jitter_ms + 1);
      gaze_t.push_back(j * gp + std::int64_t(clock_rng.index(span)) - cfg.gaze_jitter_ms);
    }
  }

  Simulator sim(track, start_state(track, clock_rng, cfg.oracle), cfg.tick_ms, cfg.vehicle);
  std::size_t k = 0, j = 0;
  while (k < frame_t.size() || j < gaze_t.size()) {
    // Gaze first on equal timestamps; both see the same state either way.
    const bool take_gaze = j < gaze_t.size() && (k == frame_t.size() || gaze_t[j] <= frame_t[k]);
    if (take_gaze) {
      sim.advance_to(gaze_t[j]);
      log.gaze.push_back(
          synth_gaze(track, sim.state(), gaze_t[j], cfg.camera, cfg.gaze, gaze_rng, cfg.oracle));
      ++j;
    } else {
      sim.advance_to(frame_t[k]);
      log.frames.push_back(render_frame(track, sim.state(), frame_t[k], cfg.camera));
      const DrivingAction a = oracle_action(track, sim.state(), cfg.oracle, cfg.vehicle);
      log.actions.push_back(a);
      sim.set_action(a);
      ++k;
    }
  }
  return log;
}

inline SessionLog run_session(const SessionConfig& cfg) {
  return run_session(track_by_name(cfg.track), cfg);
}

inline Json to_json(const SessionMeta& m) {
  return {{"format", "drivesal-session"},
          {"version", 1},
          {"resolution", m.resolution},
          {"frame_rate_hz", m.frame_rate_hz},
          {"gaze_rate_hz", m.gaze_rate_hz},
          {"source", to_string(m.source)},
          {"seed", m.seed},
          {"track", m.track},
          {"constants", m.constants}};
}

inline SessionMeta session_meta_from_json(const Json& j) {
  try {
    require(j.at("format") == "drivesal-session", ErrorKind::corrupt,
            "meta.json is not a drivesal session");
    require(j.at("version") == 1, ErrorKind::corrupt, "unsupported session version ",
            j.at("version").dump());
    SessionMeta m;
    m.resolution = j.at("resolution").get<std::size_t>();
    m.frame_rate_hz = j.at("frame_rate_hz").get<double>();
    m.gaze_rate_hz = j.at("gaze_rate_hz").get<double>();
    m.source = parse_session_source(j.at("source").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.track = j.at("track").get<std::string>();
    m.constants = j.value("constants", Json::object());
    return m;
  } catch (const Json::exception& e) {
    fail(ErrorKind::corrupt, "bad session meta: ", e.what());
  }
}

inline void write_session(const fs::path& dir, const SessionLog& log) {
  validate_session(log);
  ensure_directory(dir / "frames");
  std::vector<Json> frames, gaze, actions;
  for (std::size_t i = 0; i < log.frames.size(); ++i) {
    write_png(dir / "frames" / index_name("", i, ".png"), log.frames[i].image);
    frames.push_back({{"frame_idx", i}, {"t_ms", log.frames[i].t_ms}});
    const auto& a = log.actions[i];
    actions.push_back(
        {{"frame_idx", i}, {"steering", a.steering}, {"throttle", a.throttle}, {"brake", a.brake}});
  }
  for (const auto& g : log.gaze) gaze.push_back({{"t_ms", g.t_ms}, {"x", g.x}, {"y", g.y}});
  write_jsonl(dir / "frames.jsonl", frames);
  write_jsonl(dir / "gaze.jsonl", gaze);
  write_jsonl(dir / "actions.jsonl", actions);
  write_json(dir / "meta.json", to_json(log.meta));
}

/// Loads and validates a session directory. With `load_images` false the
/// frames carry timestamps only (empty images) and validation skips pixels.
inline SessionLog read_session(const fs::path& dir, bool load_images = true) {
  require(fs::is_directory(dir), ErrorKind::io, "session directory ", dir.string(),
          " does not exist");
  SessionLog log;
  log.meta = session_meta_from_json(read_json(dir / "meta.json"));
  try {
    const auto frames = read_jsonl(dir / "frames.jsonl");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      require(frames[i].at("frame_idx").get<std::size_t>() == i, ErrorKind::corrupt,
              "frames.jsonl row ", i, " has frame_idx ", frames[i].at("frame_idx").dump());
      Frame f;
      f.t_ms = frames[i].at("t_ms").get<std::int64_t>();
      if (load_images) f.image = read_png(dir / "frames" / index_name("", i, ".png"), 3);
      log.frames.push_back(std::move(f));
    }
    const auto actions = read_jsonl(dir / "actions.jsonl");
    for (std::size_t i = 0; i < actions.size(); ++i) {
      require(actions[i].at("frame_idx").get<std::size_t>() == i, ErrorKind::corrupt,
              "actions.jsonl row ", i, " has frame_idx ", actions[i].at("frame_idx").dump());
      log.actions.push_back({actions[i].at("steering").get<double>(),
                             actions[i].at("throttle").get<double>(),
                             actions[i].at("brake").get<double>()});
    }
    for (const auto& g : read_jsonl(dir / "gaze.jsonl"))
      log.gaze.push_back(
          {g.at("t_ms").get<std::int64_t>(), g.at("x").get<double>(), g.at("y").get<double>()});
  } catch (const Json::exception& e) {
    fail(ErrorKind::corrupt, "bad session record in ", dir.string(), ": ", e.what());
  }
  if (load_images) {
    validate_session(log);
  } else {
    SessionLog probe = log;
    for (auto& f : probe.frames) f.image = Image8(probe.meta.resolution, probe.meta.resolution, 3);
    validate_session(probe);
  }
  return log;
}

}  // namespace drivesal
