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

#include <CLI11.hpp>

#include <iostream>
#include <map>

#include "drivesal/cli/commands.hpp"
#include "drivesal/cli/http_routes.hpp"

namespace {

using namespace drivesal;

/// Failures leave the process as exactly one line on stderr.
int report_failure(std::string_view kind, std::string msg) {
  for (char& c : msg)
    if (c == '\n' || c == '\r') c = ' ';
  std::cerr << "drivesal: error[" << kind << "]: " << msg << '\n';
  return 1;
}

// Short aliases for the most used keys.
const std::map<std::string, std::string> kAliases = {
    {"sim.frames", "--frames"}, {"seed", "--seed"},       {"attn.lambda1", "--lambda1"},
    {"attn.lambda2", "--lambda2"}, {"serve.port", "--port"},
};

struct Command {
  CLI::App* app = nullptr;
  std::string name;
  std::string config_file;
  bool quiet = false;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  /// Defaults, then --config, then flags.
  RunConfig effective() const {
    RunConfig cfg;
    if (!config_file.empty()) cfg.load_file(config_file);
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) cfg.set(key, values.at(key));
    return cfg;
  }
};

Command& add_command(CLI::App& app, std::vector<std::unique_ptr<Command>>& all,
                     const std::string& name, const std::string& about) {
  auto cmd = std::make_unique<Command>();
  cmd->name = name;
  cmd->app = app.add_subcommand(name, about);
  cmd->app->add_option("--config", cmd->config_file, "flat key = value config file")
      ->check(CLI::ExistingFile);
  for (const KeyInfo* k : command_keys(name)) {
    std::string names = "--" + k->key;
    if (kAliases.count(k->key) && kAliases.at(k->key) != names) names += "," + kAliases.at(k->key);
    std::string help = k->help + " [config: " + k->key + ", default " + k->default_value + "]";
    if (!k->choices.empty()) {
      std::string all;
      for (const auto& c : k->choices) all += (all.empty() ? "" : "|") + c;
      help += " {" + all + "}";
    }
    cmd->options[k->key] =
        cmd->app->add_option(names, cmd->values[k->key], help)->type_name(type_name(k->type));
  }
  all.push_back(std::move(cmd));
  return *all.back();
}

void add_quiet(Command& c) {
  c.app->add_flag("--quiet", c.quiet, "no per-epoch progress on stderr");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drivesal: task-driven saliency pipeline (simulate, prepare, train, evaluate)"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> commands;

  std::string out;
  std::vector<std::string> sessions;
  std::string dataset, net2, roadsal, net1, agents, ckpt, session;

  auto& sim = add_command(app, commands, "simulate", "run the oracle driver and write a session");
  sim.app->add_option("--out", out, "output session directory")->required();

  auto& prep = add_command(app, commands, "gaze-prep", "build a saliency dataset from sessions");
  prep.app->add_option("--sessions", sessions, "session directories or parents of them")
      ->required();
  prep.app->add_option("--out", out, "output dataset directory")->required();

  auto& trs = add_command(app, commands, "train-roadsal", "train RoadSal on a saliency dataset");
  trs.app->add_option("--dataset", dataset, "dataset directory from gaze-prep")->required();
  trs.app->add_option("--out", out, "output checkpoint directory")->required();
  add_quiet(trs);

  auto& trd = add_command(app, commands, "train-driver", "train Net2 on raw frames");
  trd.app->add_option("--sessions", sessions, "session directories or parents of them")
      ->required();
  trd.app->add_option("--out", out, "output checkpoint directory")->required();
  add_quiet(trd);

  auto& tra = add_command(app, commands, "train-attn", "train Net1 against a frozen Net2");
  tra.app->add_option("--net2", net2, "Net2 checkpoint from train-driver")->required();
  tra.app->add_option("--sessions", sessions, "session directories or parents of them")
      ->required();
  tra.app->add_option("--out", out, "output checkpoint directory")->required();
  add_quiet(tra);

  auto& trg = add_command(app, commands, "train-agents", "train Model1/2/3 on identical data");
  trg.app->add_option("--roadsal", roadsal, "RoadSal checkpoint")->required();
  trg.app->add_option("--net1", net1, "Net1 checkpoint")->required();
  trg.app->add_option("--sessions", sessions, "session directories or parents of them")
      ->required();
  trg.app->add_option("--out", out, "output directory for the three agents")->required();
  add_quiet(trg);

  auto& ev = add_command(app, commands, "evaluate", "MSE table and model comparison");
  ev.app->add_option("--agents", agents, "directory from train-agents")->required();
  ev.app->add_option("--test-session", sessions, "held-out session directories")->required();
  ev.app->add_option("--out", out, "report directory")->required();

  auto& ex = add_command(app, commands, "export-pairs", "original | map | product images");
  ex.app->add_option("--ckpt", ckpt, "RoadSal or Net1 checkpoint")->required();
  ex.app->add_option("--session", session, "session directory")->required();
  ex.app->add_option("--out", out, "image directory")->required();

  auto& gc = add_command(app, commands, "gradcheck", "finite-difference check of every operator");

  auto& sv = add_command(app, commands, "serve", "HTTP session service for the capture UI");
  sv.app->add_option("--out", out, "directory for finished sessions")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    report_failure("usage", e.what());
    return 2;
  }

  auto paths = [&] { return std::vector<fs::path>(sessions.begin(), sessions.end()); };
  try {
    if (sim.app->parsed()) {
      cmd_simulate(sim.effective(), out);
    } else if (prep.app->parsed()) {
      const auto ds = cmd_gaze_prep(prep.effective(), paths(), out);
      std::cout << "dataset: " << ds.samples.size() << " samples (" << ds.train.size()
                << " train, " << ds.test.size() << " test), " << ds.counts.frames_dropped
                << " frames without gaze dropped\n";
    } else if (trs.app->parsed()) {
      std::cout << report_text(cmd_train_roadsal(trs.effective(), dataset, out, trs.quiet));
    } else if (trd.app->parsed()) {
      std::cout << report_text(cmd_train_driver(trd.effective(), paths(), out, trd.quiet));
    } else if (tra.app->parsed()) {
      std::cout << report_text(cmd_train_attn(tra.effective(), net2, paths(), out, tra.quiet));
    } else if (trg.app->parsed()) {
      const auto t = cmd_train_agents(trg.effective(), roadsal, net1, paths(), out, trg.quiet);
      for (const auto& m : t.models) std::cout << report_text(m.report) << '\n';
    } else if (ev.app->parsed()) {
      std::cout << cmd_evaluate(ev.effective(), agents, paths(), out).text;
    } else if (ex.app->parsed()) {
      const auto files = cmd_export_pairs(ex.effective(), ckpt, session, out);
      std::cout << "wrote " << files.size() << " pairs to " << out << '\n';
    } else if (gc.app->parsed()) {
      cmd_gradcheck(gc.effective(), std::cout);
    } else if (sv.app->parsed()) {
      const RunConfig cfg = sv.effective();
      cfg.write_echo(out, "serve");
      SessionService svc(out, SessionService::steady_clock(), cfg.u64("seed"));
      ServiceStartRequest defaults;
      defaults.track = cfg.text("sim.track");
      defaults.frame_rate_hz = cfg.real("sim.frame_rate_hz");
      defaults.gaze_rate_hz = cfg.real("sim.gaze_rate_hz");
      defaults.resolution = cfg.size("sim.resolution");
      httplib::Server server;
      register_session_routes(server, svc, defaults);
      const std::string host = cfg.text("serve.host");
      const int port = int(cfg.u64("serve.port"));
      require(server.bind_to_port(host, port), ErrorKind::io, "cannot listen on ", host, ":",
              port);
      std::cerr << "drivesal: serving on http://" << host << ":" << port << '\n';
      require(server.listen_after_bind(), ErrorKind::io, "server on ", host, ":", port,
              " stopped unexpectedly");
    }
  } catch (const Error& e) {
    return report_failure(to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return report_failure("internal", e.what());
  }
  return 0;
}
