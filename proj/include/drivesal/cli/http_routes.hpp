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

// HTTP binding of SessionService.
//
//   POST /session/start        {track, frame_rate_hz, resolution} -> {session_id}
//   GET  /session/:id/frame    PNG body, X-Frame-T-Ms header
//   POST /session/:id/action   {t_ms, steering, throttle, brake}
//   POST /session/:id/gaze     {samples: [{t_ms, x, y}, ...]}
//   POST /session/:id/finish   -> {path, frames, gaze, dropped_gaze}
//
// Errors come back as {"error": kind, "message": text}.

#pragma once

#include <httplib.h>

#include "drivesal/cli/session_service.hpp"
#include "drivesal/image/codec.hpp"

namespace drivesal {

namespace detail {

inline int http_status(ErrorKind k) {
  switch (k) {
    case ErrorKind::state: return 409;
    case ErrorKind::io: return 500;
    default: return 400;
  }
}

inline void send_error(httplib::Response& res, int status, std::string_view kind,
                       const std::string& msg) {
  res.status = status;
  res.set_content(Json{{"error", kind}, {"message", msg}}.dump(), "application/json");
}

/// Parses the body, runs `fn`, maps failures to status codes.
template <typename Fn>
void handle(SessionService& svc, const httplib::Request& req, httplib::Response& res, Fn&& fn) {
  try {
    if (req.path_params.count("id")) {
      const auto live = svc.live_id();
      const std::string& id = req.path_params.at("id");
      if (!live || *live != id) {
        send_error(res, 404, "state", "no live session '" + id + "'");
        return;
      }
    }
    const Json body =
        req.body.empty() ? Json::object() : Json::parse(req.body);
    fn(body);
  } catch (const Json::exception& e) {
    send_error(res, 400, "domain", std::string("bad request body: ") + e.what());
  } catch (const Error& e) {
    send_error(res, http_status(e.kind()), to_string(e.kind()), e.what());
  }
}

}  // namespace detail

inline void register_session_routes(httplib::Server& server, SessionService& svc,
                                    const ServiceStartRequest& defaults = {}) {
  using httplib::Request;
  using httplib::Response;
  auto json_reply = [](Response& res, const Json& j) {
    res.set_content(j.dump(), "application/json");
  };
  // The capture page may be served from another local origin.
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Expose-Headers", "X-Frame-T-Ms"}});
  server.Options(R"(/session/.*)", [](const Request&, Response& res) { res.status = 204; });

  server.Post("/session/start", [&svc, defaults, json_reply](const Request& req, Response& res) {
    detail::handle(svc, req, res, [&](const Json& b) {
      ServiceStartRequest r = defaults;
      r.track = b.value("track", r.track);
      r.frame_rate_hz = b.value("frame_rate_hz", r.frame_rate_hz);
      r.resolution = b.value("resolution", r.resolution);
      r.gaze_rate_hz = b.value("gaze_rate_hz", r.gaze_rate_hz);
      json_reply(res, {{"session_id", svc.start(r)}});
    });
  });

  server.Get("/session/:id/frame", [&svc](const Request& req, Response& res) {
    detail::handle(svc, req, res, [&](const Json&) {
      const Frame f = svc.frame(req.path_params.at("id"));
      res.set_header("X-Frame-T-Ms", std::to_string(f.t_ms));
      res.set_content(encode_png(f.image), "image/png");
    });
  });

  server.Post("/session/:id/action", [&svc, json_reply](const Request& req, Response& res) {
    detail::handle(svc, req, res, [&](const Json& b) {
      const DrivingAction a{b.at("steering").get<double>(), b.at("throttle").get<double>(),
                            b.at("brake").get<double>()};
      json_reply(res, {{"applied_t_ms", svc.action(req.path_params.at("id"), a)}});
    });
  });

  server.Post("/session/:id/gaze", [&svc, json_reply](const Request& req, Response& res) {
    detail::handle(svc, req, res, [&](const Json& b) {
      std::vector<GazeSample> samples;
      for (const auto& s : b.at("samples"))
        samples.push_back(
            {s.at("t_ms").get<std::int64_t>(), s.at("x").get<double>(), s.at("y").get<double>()});
      const auto r = svc.gaze(req.path_params.at("id"), samples);
      json_reply(res, {{"accepted", r.accepted}, {"dropped", r.dropped}});
    });
  });

  server.Post("/session/:id/finish", [&svc, json_reply](const Request& req, Response& res) {
    detail::handle(svc, req, res, [&](const Json&) {
      const auto f = svc.finish(req.path_params.at("id"));
      json_reply(res, {{"path", f.dir.string()},
                       {"frames", f.frames},
                       {"gaze", f.gaze},
                       {"dropped_gaze", f.dropped_gaze}});
    });
  });
}

}  // namespace drivesal
