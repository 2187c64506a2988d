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

#include <gtest/gtest.h>

#include <cstdio>
#include <set>
#include <thread>

#include "drivesal/cli/commands.hpp"
#include "drivesal/cli/http_routes.hpp"
#include "support/dir_compare.hpp"
#include "support/temp_dir.hpp"

using namespace drivesal;
using testing_support::TempDir;
using testing_support::tree_differences;

namespace {

std::string error_message(const std::function<void()>& fn, ErrorKind* kind = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (kind) *kind = e.kind();
    return e.what();
  }
  return "";
}

/// Small, fast settings for the whole chain.
RunConfig small_config() {
  RunConfig c;
  c.load_text(R"(
sim.resolution = 64
sim.frames = 60
prep.input_resolution = 32
prep.target_resolution = 16
agent.input = 32
agent.hidden = 8
roadsal.epochs = 2
roadsal.batch = 16
driver.epochs = 2
attn.epochs = 2
agents.epochs = 2
export.count = 3
)",
              "small");
  return c;
}

struct ProcessResult {
  int status = 0;
  std::string stderr_text;
};

/// Runs the built binary; captures stderr only.
ProcessResult run_binary(const std::string& args) {
  const std::string cmd = std::string("\"") + DRIVESAL_BIN + "\" " + args + " 2>&1 >/dev/null";
  ProcessResult r;
  FILE* p = popen(cmd.c_str(), "r");
  char buf[512];
  while (p && std::fgets(buf, sizeof buf, p)) r.stderr_text += buf;
  const int st = p ? pclose(p) : -1;
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

}  // namespace

// --- RunConfig ---------------------------------------------------------------

TEST(RunConfig, DefaultsMatchLibraryDefaults) {
  const RunConfig c;
  const SessionConfig s = session_config(c);
  EXPECT_EQ(s.n_frames, 100u);
  EXPECT_EQ(s.camera.resolution, 227u);
  EXPECT_EQ(dataset_config(c).sigma_ref, DatasetConfig{}.sigma_ref);
  EXPECT_EQ(roadsal_spec(c, 96).channels, RoadSalSpec{}.channels);
  EXPECT_EQ(net1_spec(c, 96).widths, Net1Spec{}.widths);
  EXPECT_EQ(agent_spec(c).hidden, AgentSpec{}.hidden);
  const TrainConfig r = train_config(c, "roadsal");
  EXPECT_EQ(r.sgd.learning_rate, 1e-3);
  EXPECT_EQ(r.sgd.batch_size, 300u);
  EXPECT_EQ(r.sgd.decay, 0.005);
  EXPECT_EQ(train_config(c, "attn").lambda1, 0.1);
  EXPECT_EQ(train_config(c, "attn").lambda2, 1.0);
}

TEST(RunConfig, EchoReloadsToTheSameConfig) {
  RunConfig c = small_config();
  c.set("attn.lambda1", "0.050");
  c.set("net1.widths", " 4, 2 ,1");
  RunConfig back;
  back.load_text(c.echo("x"), "echo");
  EXPECT_EQ(back.echo("x"), c.echo("x"));
  EXPECT_EQ(back.text("attn.lambda1"), "0.05");
  EXPECT_EQ(back.text("net1.widths"), "4,2,1");
}

TEST(RunConfig, UnknownDuplicateAndMalformedLinesNameTheLine) {
  RunConfig c;
  ErrorKind kind{};
  auto msg = error_message([&] { c.load_text("seed = 2\n\n# ok\nsim.frmaes = 3\n", "f.cfg"); },
                           &kind);
  EXPECT_EQ(kind, ErrorKind::config);
  EXPECT_NE(msg.find("f.cfg:4"), std::string::npos) << msg;
  EXPECT_NE(msg.find("sim.frmaes"), std::string::npos);

  msg = error_message([&] { c.load_text("seed = 2\nseed = 3\n", "f.cfg"); });
  EXPECT_NE(msg.find("f.cfg:2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 1"), std::string::npos) << msg;

  msg = error_message([&] { c.load_text("just words\n", "f.cfg"); });
  EXPECT_NE(msg.find("f.cfg:1"), std::string::npos) << msg;
  EXPECT_THROW(c.set("no.such.key", "1"), Error);
}

TEST(RunConfig, ValuesAreTypeChecked) {
  RunConfig c;
  EXPECT_THROW(c.set("sim.frames", "-3"), Error);
  EXPECT_THROW(c.set("sim.frames", "2.5"), Error);
  EXPECT_THROW(c.set("driver.lr", "fast"), Error);
  EXPECT_THROW(c.set("driver.lr", "inf"), Error);
  EXPECT_THROW(c.set("sim.synth_gaze", "maybe"), Error);
  EXPECT_THROW(c.set("sim.track", "oval"), Error);
  EXPECT_THROW(c.set("agent.channels", "8,x,32"), Error);
  c.set("sim.synth_gaze", "off");
  EXPECT_FALSE(c.flag("sim.synth_gaze"));
  // Parsed fine, rejected by the domain struct.
  c.set("agent.channels", "8,16");
  EXPECT_THROW(agent_spec(c), Error);
  c.set("roadsal.channels", "16,24,16");
  EXPECT_THROW(roadsal_spec(c, 96), Error);
}

TEST(RunConfig, FileThenFlagPrecedence) {
  TempDir tmp;
  write_text_atomic(tmp.path() / "c.cfg", "seed = 5\nsim.frames = 12\n");
  RunConfig c;
  c.load_file(tmp.path() / "c.cfg");
  c.set("seed", "9");  // what a flag does
  EXPECT_EQ(c.u64("seed"), 9u);
  EXPECT_EQ(c.size("sim.frames"), 12u);
}

TEST(RunConfig, EveryKeyIsReachableFromSomeCommand) {
  std::set<std::string> reachable;
  for (const char* cmd : {"simulate", "gaze-prep", "train-roadsal", "train-driver", "train-attn",
                          "train-agents", "evaluate", "export-pairs", "gradcheck", "serve"})
    for (const KeyInfo* k : command_keys(cmd)) reachable.insert(k->key);
  for (const auto& k : config_keys()) EXPECT_TRUE(reachable.count(k.key)) << k.key;
  EXPECT_THROW(command_keys("fly"), Error);
}

// --- commands ----------------------------------------------------------------

TEST(Commands, SimulateRerunsByteIdentically) {
  TempDir tmp;
  RunConfig c;
  c.set("sim.frames", "100");
  c.set("seed", "7");
  cmd_simulate(c, tmp.path() / "a");
  cmd_simulate(c, tmp.path() / "b");
  EXPECT_TRUE(tree_differences(tmp.path() / "a", tmp.path() / "b").empty());
  const auto log = read_session(tmp.path() / "a");
  EXPECT_EQ(log.frames.size(), 100u);
  EXPECT_EQ(log.meta.seed, 7u);
  EXPECT_TRUE(fs::exists(tmp.path() / "a" / "config.txt"));
  c.set("seed", "8");
  cmd_simulate(c, tmp.path() / "c");
  EXPECT_FALSE(tree_differences(tmp.path() / "a", tmp.path() / "c").empty());
}

TEST(Commands, SessionPathExpansion) {
  TempDir tmp;
  RunConfig c = small_config();
  c.set("sim.frames", "5");
  for (const char* n : {"b", "a"}) cmd_simulate(c, tmp.path() / "all" / n);
  const auto paths = expand_session_paths({tmp.path() / "all"});
  ASSERT_EQ(paths.size(), 2u);
  EXPECT_EQ(paths[0].filename(), "a");
  EXPECT_EQ(expand_session_paths({tmp.path() / "all" / "b"}).size(), 1u);
  fs::create_directories(tmp.path() / "empty");
  EXPECT_THROW(expand_session_paths({tmp.path() / "empty"}), Error);
  EXPECT_THROW(expand_session_paths({tmp.path() / "missing"}), Error);
}

TEST(Commands, FullChainEmitsOneComparisonAndRerunsIdentically) {
  TempDir tmp;
  const RunConfig c = small_config();
  auto chain = [&](const fs::path& root) {
    RunConfig s = c;
    for (int k = 0; k < 2; ++k) {
      s.set("seed", std::to_string(k + 1));
      cmd_simulate(s, root / "sessions" / ("s" + std::to_string(k)));
    }
    s.set("seed", "3");
    s.set("sim.frames", "40");
    cmd_simulate(s, root / "test");
    cmd_gaze_prep(c, {root / "sessions"}, root / "ds");
    cmd_train_roadsal(c, root / "ds", root / "roadsal", true);
    cmd_train_driver(c, {root / "sessions"}, root / "net2", true);
    cmd_train_attn(c, root / "net2", {root / "sessions"}, root / "net1", true);
    cmd_train_agents(c, root / "roadsal", root / "net1", {root / "sessions"}, root / "agents",
                     true);
    const auto r = cmd_evaluate(c, root / "agents", {root / "test"}, root / "eval");
    cmd_export_pairs(c, root / "net1", root / "test", root / "pairs");
    return r;
  };
  const auto r = chain(tmp.path() / "one");
  EXPECT_EQ(r.comparison.rows[0].frames, 40u);
  EXPECT_NE(r.text.find("ordering (clamped combined MSE): "), std::string::npos);
  EXPECT_NE(r.text.find("baseline-mean"), std::string::npos);
  const std::string csv = read_text(tmp.path() / "one" / "eval" / "eval.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);  // header, 3 models, baseline
  EXPECT_EQ(testing_support::list_files(tmp.path() / "one" / "pairs").size(), 4u);
  for (const char* d : {"ds", "roadsal", "net2", "net1", "agents", "eval", "pairs"})
    EXPECT_TRUE(fs::exists(tmp.path() / "one" / d / "config.txt")) << d;

  chain(tmp.path() / "two");
  const auto diffs = tree_differences(tmp.path() / "one", tmp.path() / "two");
  EXPECT_TRUE(diffs.empty()) << diffs.front();
}

TEST(Commands, DivergedTrainingWritesPartialReportThenFails) {
  TempDir tmp;
  RunConfig c = small_config();
  cmd_simulate(c, tmp.path() / "s");
  c.set("driver.lr", "1e12");
  c.set("driver.epochs", "3");
  ErrorKind kind{};
  const auto msg = error_message(
      [&] { cmd_train_driver(c, {tmp.path() / "s"}, tmp.path() / "out", true); }, &kind);
  EXPECT_EQ(kind, ErrorKind::numeric);
  EXPECT_NE(msg.find("partial report"), std::string::npos) << msg;
  EXPECT_NE(read_text(tmp.path() / "out" / "report.txt").find("status: aborted"),
            std::string::npos);
  EXPECT_TRUE(fs::exists(tmp.path() / "out" / "loss_curve.csv"));
  EXPECT_FALSE(fs::exists(tmp.path() / "out" / "manifest.json"));
}

TEST(Commands, WrongCheckpointKindsAreRejected) {
  TempDir tmp;
  RunConfig c = small_config();
  c.set("sim.frames", "20");
  cmd_simulate(c, tmp.path() / "s");
  save_checkpoint(tmp.path() / "agent", make_model<float>(agent_spec(c), 1));
  ErrorKind kind{};
  error_message([&] { cmd_train_attn(c, tmp.path() / "s", {tmp.path() / "s"}, tmp.path() / "o"); },
                &kind);
  EXPECT_EQ(kind, ErrorKind::io);  // not a checkpoint at all
  const auto msg = error_message(
      [&] { cmd_export_pairs(c, tmp.path() / "agent", tmp.path() / "s", tmp.path() / "p"); },
      &kind);
  EXPECT_EQ(kind, ErrorKind::config);
  EXPECT_NE(msg.find("roadsal or net1"), std::string::npos) << msg;
}

TEST(Commands, CorruptAgentsManifestIsDiagnosed) {
  TempDir tmp;
  write_text_atomic(tmp.path() / "agents.json", R"({"format": "drivesal-agents"})");
  ErrorKind kind{};
  const auto msg =
      error_message([&] { cmd_evaluate(RunConfig{}, tmp.path(), {tmp.path()}, tmp.path() / "e"); },
                    &kind);
  EXPECT_EQ(kind, ErrorKind::corrupt) << msg;
}

TEST(Commands, GradcheckPassesAndPrintsEveryOperator) {
  RunConfig c;
  c.set("gradcheck.instances", "2");
  std::ostringstream out;
  const auto cases = cmd_gradcheck(c, out);
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), long(cases.size()) + 1);
  c.set("gradcheck.tolerance", "1e-300");
  EXPECT_THROW(cmd_gradcheck(c, out), Error);
}

// --- session service ------------------------------------------------------------

TEST(SessionService, FramesFollowTheServerClock) {
  TempDir tmp;
  std::int64_t now = 1000;
  SessionService svc(tmp.path(), [&] { return now; });
  ServiceStartRequest req;
  req.resolution = 64;
  const std::string id = svc.start(req);
  EXPECT_EQ(svc.frame(id).t_ms, 0);
  now += 250;
  EXPECT_EQ(svc.frame(id).t_ms, 200);
  now += 50;
  EXPECT_EQ(svc.frame(id).t_ms, 300);
  EXPECT_THROW(svc.frame("s99"), Error);
}

TEST(SessionService, OneLiveSessionAtATime) {
  TempDir tmp;
  std::int64_t now = 0;
  SessionService svc(tmp.path(), [&] { return now; });
  ServiceStartRequest req;
  req.resolution = 32;
  const std::string id = svc.start(req);
  ErrorKind kind{};
  const auto msg = error_message([&] { svc.start(req); }, &kind);
  EXPECT_EQ(kind, ErrorKind::state);
  EXPECT_NE(msg.find(id), std::string::npos);
  svc.finish(id);
  EXPECT_NE(svc.start(req), id);
}

TEST(SessionService, GazeIsReceiptClampedAndFiltered) {
  TempDir tmp;
  std::int64_t now = 0;
  SessionService svc(tmp.path(), [&] { return now; });
  ServiceStartRequest req;
  req.resolution = 32;
  const std::string id = svc.start(req);
  now = 100;
  const auto r = svc.gaze(id, {{10, 5, 5},      // ok
                               {10, 6, 6},      // not after the previous sample
                               {500, 7, 7},     // future: clamped to 100
                               {90, 8, 8},      // now behind the clamped one
                               {-5, 1, 1}});    // before the session
  EXPECT_EQ(r.accepted, 2u);
  EXPECT_EQ(r.dropped, 3u);
  now = 150;
  const auto r2 = svc.gaze(id, {{120, 32.0, 3}, {130, 31.5, 3}});  // x == width is outside
  EXPECT_EQ(r2.accepted, 1u);
  const auto f = svc.finish(id);
  const auto log = read_session(f.dir);
  ASSERT_EQ(log.gaze.size(), 3u);
  EXPECT_EQ(log.gaze[1].t_ms, 100);
  EXPECT_EQ(f.dropped_gaze, 4u);
  EXPECT_EQ(log.meta.source, SessionSource::human);
  EXPECT_EQ(log.meta.constants.at("dropped_gaze"), 4);
}

TEST(SessionService, ActionsAreRecordedFromTheNextFrame) {
  TempDir tmp;
  std::int64_t now = 0;
  SessionService svc(tmp.path(), [&] { return now; });
  ServiceStartRequest req;
  req.resolution = 32;
  req.track = "straight";
  const std::string id = svc.start(req);
  now = 150;
  EXPECT_EQ(svc.action(id, {0.0, 1.0, 0.0}), 150);
  EXPECT_THROW(svc.action(id, {0.0, 2.0, 0.0}), Error);
  now = 420;
  const auto log = read_session(svc.finish(id).dir);
  ASSERT_EQ(log.frames.size(), 5u);  // t = 0, 100, 200, 300, 400
  EXPECT_EQ(log.actions[1].throttle, 0.0);
  EXPECT_EQ(log.actions[2].throttle, 1.0);
  EXPECT_EQ(log.actions[4].throttle, 1.0);
}

TEST(SessionService, ThirtySecondSessionFeedsGazePrep) {
  // 10 fps with 50 Hz gaze for 30 s: ~300 frames and >= 1500 gaze samples.
  TempDir tmp;
  std::int64_t now = 0;
  SessionService svc(tmp.path(), [&] { return now; });
  ServiceStartRequest req;
  req.resolution = 64;
  const std::string id = svc.start(req);
  std::vector<GazeSample> batch;
  for (std::int64_t t = 20; t <= 30000; t += 20) {
    batch.push_back({t, 32.0 + 10.0 * std::sin(double(t) / 900.0), 40.0});
    if (t % 200 == 0) {  // flushed every 200 ms
      now = t;
      EXPECT_EQ(svc.gaze(id, batch).dropped, 0u);
      batch.clear();
    }
  }
  const auto f = svc.finish(id);
  EXPECT_EQ(f.frames, 301u);
  EXPECT_EQ(f.gaze, 1500u);
  EXPECT_EQ(f.dropped_gaze, 0u);
  DatasetConfig dc;
  dc.input_resolution = 32;
  dc.target_resolution = 16;
  dc.augment = false;
  const auto ds = build_dataset({read_session(f.dir)}, dc);
  EXPECT_EQ(ds.counts.frames_dropped, 1u);  // frame 0 precedes every gaze sample
  EXPECT_EQ(ds.samples.size(), 300u);
}

TEST(SessionService, HttpEndpointsRoundTrip) {
  TempDir tmp;
  SessionService svc(tmp.path(), SessionService::steady_clock());
  httplib::Server server;
  ServiceStartRequest defaults;
  defaults.resolution = 48;
  register_session_routes(server, svc, defaults);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  auto res = cli.Post("/session/start", R"({"frame_rate_hz": 20})", "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  const std::string id = Json::parse(res->body).at("session_id");

  res = cli.Post("/session/start", "{}", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 409);
  EXPECT_EQ(Json::parse(res->body).at("error"), "state");

  res = cli.Get("/session/" + id + "/frame");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  EXPECT_TRUE(res->has_header("X-Frame-T-Ms"));
  const Image8 img = decode_png(res->body);
  EXPECT_EQ(img.width, 48u);

  res = cli.Post("/session/" + id + "/action",
                 R"({"t_ms": 0, "steering": 0.1, "throttle": 0.5, "brake": 0})",
                 "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200) << res->body;
  res = cli.Post("/session/" + id + "/action", R"({"steering": 3})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  res = cli.Post("/session/" + id + "/gaze",
                 R"({"samples": [{"t_ms": 0, "x": 10, "y": 10}, {"t_ms": 0, "x": 11, "y": 10}]})",
                 "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(Json::parse(res->body).at("accepted"), 1);
  EXPECT_EQ(Json::parse(res->body).at("dropped"), 1);
  res = cli.Get("/session/nope/frame");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);

  res = cli.Post("/session/" + id + "/finish", "", "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  const Json done = Json::parse(res->body);
  const auto log = read_session(done.at("path").get<std::string>());
  EXPECT_EQ(log.meta.frame_rate_hz, 20.0);
  EXPECT_EQ(log.gaze.size(), 1u);

  server.stop();
  t.join();
}

// --- the binary -------------------------------------------------------------------

TEST(Binary, GradcheckExitsZero) { EXPECT_EQ(run_binary("gradcheck").status, 0); }

TEST(Binary, FailuresAreOneMachineParsableLine) {
  TempDir tmp;
  const std::string cfg = (tmp.path() / "bad.cfg").string();
  write_text_atomic(cfg, "sim.frmaes = 3\n");
  for (const std::string& args :
       {"simulate --config " + cfg + " --out " + (tmp.path() / "x").string(),
        "train-driver --sessions " + (tmp.path() / "none").string() + " --out " +
            (tmp.path() / "y").string(),
        std::string("simulate --frames 5")}) {
    const ProcessResult r = run_binary(args);
    EXPECT_NE(r.status, 0) << args;
    EXPECT_EQ(std::count(r.stderr_text.begin(), r.stderr_text.end(), '\n'), 1) << r.stderr_text;
    EXPECT_EQ(r.stderr_text.rfind("drivesal: error[", 0), 0u) << r.stderr_text;
  }
}

TEST(Binary, HelpDocumentsConfigKeys) {
  const std::string cmd = std::string("\"") + DRIVESAL_BIN + "\" train-attn --help";
  std::string out;
  FILE* p = popen(cmd.c_str(), "r");
  char buf[512];
  while (p && std::fgets(buf, sizeof buf, p)) out += buf;
  ASSERT_EQ(pclose(p), 0);
  for (const KeyInfo* k : command_keys("train-attn"))
    EXPECT_NE(out.find("[config: " + k->key), std::string::npos) << k->key;
  EXPECT_NE(out.find("--lambda1"), std::string::npos);
}
