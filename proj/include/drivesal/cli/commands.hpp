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

// Subcommand bodies. The binary only parses arguments and calls these, so
// tests drive the same code paths without spawning processes.

#pragma once

#include <algorithm>
#include <iostream>
#include <string>
#include <vector>

#include "drivesal/cli/run_config.hpp"
#include "drivesal/diffcore/gradcheck.hpp"
#include "drivesal/evalreport/evaluate.hpp"
#include "drivesal/trainer/trainer.hpp"

namespace drivesal {

// --- config -> domain structs ----------------------------------------------

inline SessionConfig session_config(const RunConfig& c) {
  SessionConfig s;
  s.track = c.text("sim.track");
  s.n_frames = c.size("sim.frames");
  s.frame_rate_hz = c.real("sim.frame_rate_hz");
  s.gaze_rate_hz = c.real("sim.gaze_rate_hz");
  s.synth_gaze = c.flag("sim.synth_gaze");
  s.seed = c.u64("seed");
  s.camera.resolution = c.size("sim.resolution");
  s.gaze.noise_px = c.real("sim.gaze_noise_px");
  s.gaze.saccade_probability = c.real("sim.saccade_probability");
  s.validate();
  return s;
}

inline DatasetConfig dataset_config(const RunConfig& c) {
  DatasetConfig d;
  d.sigma_ref = c.real("prep.sigma");
  d.crop_margin_sigmas = c.real("prep.crop_margin_sigmas");
  d.augment = c.flag("prep.augment");
  d.input_resolution = c.size("prep.input_resolution");
  d.target_resolution = c.size("prep.target_resolution");
  d.train_fraction = c.real("prep.train_fraction");
  d.seed = c.u64("seed");
  d.validate();
  return d;
}

namespace detail {

inline std::array<std::size_t, 3> triple(const RunConfig& c, const std::string& key) {
  const auto v = c.list(key);
  require(v.size() == 3, ErrorKind::config, "key '", key, "' needs exactly 3 values, got ",
          v.size());
  return {v[0], v[1], v[2]};
}

}  // namespace detail

inline RoadSalSpec roadsal_spec(const RunConfig& c, std::size_t input) {
  RoadSalSpec s;
  s.input = input;
  s.channels = detail::triple(c, "roadsal.channels");
  s.kernels = detail::triple(c, "roadsal.kernels");
  s.validate();
  return s;
}

inline AgentSpec agent_spec(const RunConfig& c) {
  AgentSpec s;
  s.input = c.size("agent.input");
  s.channels = detail::triple(c, "agent.channels");
  s.kernels = detail::triple(c, "agent.kernels");
  s.hidden = c.size("agent.hidden");
  s.validate();
  return s;
}

inline Net1Spec net1_spec(const RunConfig& c, std::size_t input) {
  Net1Spec s;
  s.input = input;
  s.widths = c.list("net1.widths");
  s.kernel = c.size("net1.kernel");
  s.padding = parse_padding(c.text("net1.padding"));
  s.validate();
  return s;
}

/// `prefix` is one of roadsal, driver, attn, agents.
inline TrainConfig train_config(const RunConfig& c, const std::string& prefix) {
  TrainConfig t;
  t.sgd.learning_rate = c.real(prefix + ".lr");
  t.sgd.momentum = c.real(prefix + ".momentum");
  t.sgd.decay = c.real(prefix + ".decay");
  t.sgd.batch_size = c.size(prefix + ".batch");
  t.epochs = c.size(prefix + ".epochs");
  t.seed = c.u64("seed");
  t.holdout_fraction = c.real("train.holdout_fraction");
  t.lambda1 = c.real("attn.lambda1");
  t.lambda2 = c.real("attn.lambda2");
  t.sparsity = parse_sparsity_variant(c.text("attn.sparsity"));
  t.validate();
  return t;
}

// --- inputs ------------------------------------------------------------------

/// A path with meta.json is a session; otherwise its session subdirectories
/// are used in name order.
inline std::vector<fs::path> expand_session_paths(const std::vector<fs::path>& paths) {
  std::vector<fs::path> out;
  for (const auto& p : paths) {
    require(fs::is_directory(p), ErrorKind::io, "session path ", p.string(), " is not a directory");
    if (fs::exists(p / "meta.json")) {
      out.push_back(p);
      continue;
    }
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_directory() && fs::exists(e.path() / "meta.json")) found.push_back(e.path());
    require(!found.empty(), ErrorKind::io, p.string(), " holds no session directories");
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  require(!out.empty(), ErrorKind::config, "no sessions given");
  return out;
}

/// Sessions with frames already resized to `input` and gaze dropped, so
/// only the driving-set footprint stays in memory.
inline std::vector<SessionLog> load_driving_sessions(const std::vector<fs::path>& paths,
                                                     std::size_t input) {
  std::vector<SessionLog> out;
  for (const auto& p : expand_session_paths(paths)) {
    SessionLog log = read_session(p);
    log.gaze.clear();
    log.meta.resolution = input;
    for (auto& f : log.frames) f.image = detail::resize_image(f.image, input);
    out.push_back(std::move(log));
  }
  return out;
}

/// Accepts a checkpoint directory (manifest.json inside).
inline LoadedCheckpoint load_checkpoint_expect(const fs::path& dir, const std::string& kind) {
  auto ck = load_checkpoint(dir);
  require(ck.model.kind() == kind, ErrorKind::config, dir.string(), " holds a ", ck.model.kind(),
          " checkpoint, expected ", kind);
  return ck;
}

// --- outputs -----------------------------------------------------------------

inline Json action_json(const DrivingAction& a) {
  return Json::array({a.steering, a.throttle, a.brake});
}

/// Saves the model, its loss curve and report. A diverged run still writes
/// the partial report, then fails.
inline void save_trained(const fs::path& dir, const TrainedModel& t, const Json& extra) {
  write_train_report(dir, t.report);
  require(!t.report.aborted, ErrorKind::numeric, t.report.procedure, " diverged: ",
          t.report.aborted.value_or(""), "; partial report in ", (dir / "report.txt").string());
  CheckpointMeta meta{t.report.config.seed, t.report.config.digest(), extra};
  save_checkpoint(dir, t.model, meta);
}

inline TrainOptions stderr_log(bool quiet) {
  TrainOptions o;
  if (!quiet) o.log = [](const std::string& s) { std::cerr << s << '\n'; };
  return o;
}

// --- commands ----------------------------------------------------------------

inline void cmd_simulate(const RunConfig& c, const fs::path& out) {
  const SessionLog log = run_session(session_config(c));
  write_session(out, log);
  c.write_echo(out, "simulate");
}

inline SaliencyDataset cmd_gaze_prep(const RunConfig& c, const std::vector<fs::path>& sessions,
                                     const fs::path& out) {
  DatasetBuilder b(dataset_config(c));
  for (const auto& p : expand_session_paths(sessions)) b.add_session(read_session(p));
  SaliencyDataset ds = std::move(b).finish();
  write_dataset(out, ds);
  c.write_echo(out, "gaze-prep");
  return ds;
}

inline TrainReport cmd_train_roadsal(const RunConfig& c, const fs::path& dataset,
                                     const fs::path& out, bool quiet = false) {
  const SaliencyDataset ds = read_dataset(dataset);
  const auto t = train_roadsal(ds, roadsal_spec(c, ds.config.input_resolution),
                               train_config(c, "roadsal"), stderr_log(quiet));
  c.write_echo(out, "train-roadsal");
  save_trained(out, t, {{"dataset_digest", ds.digest()}});
  return t.report;
}

inline TrainReport cmd_train_driver(const RunConfig& c, const std::vector<fs::path>& sessions,
                                    const fs::path& out, bool quiet = false) {
  const AgentSpec spec = agent_spec(c);
  const TrainConfig tc = train_config(c, "driver");
  const DrivingSet set = make_driving_set(load_driving_sessions(sessions, spec.input),
                                          spec.input, tc.holdout_fraction, tc.seed);
  const auto t = train_driver(set, spec, tc, stderr_log(quiet));
  c.write_echo(out, "train-driver");
  save_trained(out, t,
               {{"pipeline", "raw"},
                {"data_digest", set.digest()},
                {"train_action_mean", action_json(mean_action(set, set.train))}});
  return t.report;
}

inline TrainReport cmd_train_attn(const RunConfig& c, const fs::path& net2_dir,
                                  const std::vector<fs::path>& sessions, const fs::path& out,
                                  bool quiet = false) {
  const auto net2 = load_checkpoint_expect(net2_dir, "agent");
  const std::size_t input = net2.model.net.input_shape()[0];
  const TrainConfig tc = train_config(c, "attn");
  const DrivingSet set =
      make_driving_set(load_driving_sessions(sessions, input), input, tc.holdout_fraction, tc.seed);
  const auto t = train_attention_unsupervised(net2.model, set, net1_spec(c, input), tc,
                                              stderr_log(quiet));
  c.write_echo(out, "train-attn");
  save_trained(out, t,
               {{"net2_train_config_digest", net2.meta.train_config_digest},
                {"data_digest", set.digest()}});
  return t.report;
}

/// Writes model1..3 checkpoints, copies of the attention checkpoints they
/// depend on, and agents.json tying them together.
inline TrainedAgents cmd_train_agents(const RunConfig& c, const fs::path& roadsal_dir,
                                      const fs::path& net1_dir,
                                      const std::vector<fs::path>& sessions, const fs::path& out,
                                      bool quiet = false) {
  const auto roadsal = load_checkpoint_expect(roadsal_dir, "roadsal");
  const auto net1 = load_checkpoint_expect(net1_dir, "net1");
  const AgentSpec spec = agent_spec(c);
  const TrainConfig tc = train_config(c, "agents");
  const DrivingSet set = make_driving_set(load_driving_sessions(sessions, spec.input), spec.input,
                                          tc.holdout_fraction, tc.seed);
  auto trained = train_agents(roadsal.model, net1.model, set, spec, tc, stderr_log(quiet));
  c.write_echo(out, "train-agents");
  save_checkpoint(out / "roadsal", roadsal.model, roadsal.meta);
  save_checkpoint(out / "net1", net1.model, net1.meta);
  const Json mean = action_json(mean_action(set, set.train));
  Json models = Json::array();
  for (std::size_t m = 0; m < 3; ++m) {
    const std::string pipeline = to_string(kAgentPipelines[m]);
    save_trained(out / kAgentNames[m], trained.models[m],
                 {{"pipeline", pipeline}, {"data_digest", set.digest()}, {"train_action_mean", mean}});
    models.push_back({{"name", kAgentNames[m]}, {"pipeline", pipeline}, {"checkpoint", kAgentNames[m]}});
  }
  write_json(out / "agents.json", {{"format", "drivesal-agents"},
                                   {"version", 1},
                                   {"models", models},
                                   {"roadsal", "roadsal"},
                                   {"net1", "net1"},
                                   {"train_action_mean", mean}});
  return trained;
}

struct EvaluateResult {
  Comparison comparison;
  EvalRow baseline;
  std::string text;  // what evaluate prints
};

inline EvaluateResult cmd_evaluate(const RunConfig& c, const fs::path& agents_dir,
                                   const std::vector<fs::path>& test_sessions, const fs::path& out) {
  const Json manifest = read_json(agents_dir / "agents.json");
  std::array<EvalRow, 3> rows;
  DrivingAction mean;
  try {
    require(manifest.at("format") == "drivesal-agents", ErrorKind::corrupt,
            "agents.json is not a drivesal agents manifest");
    const auto roadsal = load_checkpoint_expect(
        agents_dir / manifest.at("roadsal").get<std::string>(), "roadsal");
    const auto net1 =
        load_checkpoint_expect(agents_dir / manifest.at("net1").get<std::string>(), "net1");
    const auto& listed = manifest.at("models");
    require(listed.size() == 3, ErrorKind::corrupt, "agents.json must list three models");
    const auto m = manifest.at("train_action_mean").get<std::vector<double>>();
    require(m.size() == 3, ErrorKind::corrupt, "train_action_mean needs three values");
    mean = DrivingAction::from_array({m[0], m[1], m[2]});

    std::optional<DrivingSet> test;
    for (std::size_t k = 0; k < 3; ++k) {
      const std::string name = listed[k].at("name").get<std::string>();
      const auto agent =
          load_checkpoint_expect(agents_dir / listed[k].at("checkpoint").get<std::string>(), "agent");
      const std::size_t input = agent.model.net.input_shape()[0];
      if (!test) test = make_driving_set(load_driving_sessions(test_sessions, input), input, 0.0, 0);
      InputPipeline pipe;
      switch (parse_pipeline(listed[k].at("pipeline").get<std::string>())) {
        case PipelineKind::raw: pipe = InputPipeline::raw(); break;
        case PipelineKind::roadsal: pipe = InputPipeline::roadsal(roadsal.model); break;
        case PipelineKind::net1: pipe = InputPipeline::net1(net1.model); break;
      }
      rows[k] = evaluate_mse(name, agent.model, pipe, *test);
    }
    EvaluateResult r{compare_models(rows), evaluate_constant("baseline-mean", mean, *test), ""};
    r.text = comparison_text(r.comparison, {r.baseline});
    std::vector<EvalRow> all(rows.begin(), rows.end());
    all.push_back(r.baseline);
    c.write_echo(out, "evaluate");
    write_text_atomic(out / "eval.csv", eval_csv(all));
    write_text_atomic(out / "comparison.txt", r.text);
    return r;
  } catch (const Json::exception& e) {
    fail(ErrorKind::corrupt, "bad agents manifest in ", agents_dir.string(), ": ", e.what());
  }
}

/// Saliency pairs for the first export.count frames of a session, through a
/// RoadSal or Net1 checkpoint.
inline std::vector<fs::path> cmd_export_pairs(const RunConfig& c, const fs::path& ckpt,
                                              const fs::path& session, const fs::path& out) {
  auto ck = load_checkpoint(ckpt);
  const std::string kind = ck.model.kind();
  require(kind == "roadsal" || kind == "net1", ErrorKind::config,
          "export-pairs needs a roadsal or net1 checkpoint, got ", kind);
  const SessionLog log = read_session(session);
  const std::size_t want = c.size("export.count");
  const std::size_t n = want == 0 ? log.frames.size() : std::min(want, log.frames.size());
  const InputPipeline pipe = kind == "roadsal" ? InputPipeline::roadsal(std::move(ck.model))
                                               : InputPipeline::net1(std::move(ck.model));
  const std::size_t side =
      kind == "net1" ? pipe.attention()->net.input_shape()[0] : log.meta.resolution;
  std::vector<Image8> images;
  std::vector<Tensor<float>> maps;
  for (std::size_t i = 0; i < n; ++i) {
    images.push_back(detail::resize_image(log.frames[i].image, side));
    maps.push_back(*pipe.attention_map(images.back()));
  }
  c.write_echo(out, "export-pairs");
  return export_saliency_pairs(images, maps, out);
}

/// Prints one line per operator; fails if any operator exceeds tolerance.
inline std::vector<GradCheckCase> cmd_gradcheck(const RunConfig& c, std::ostream& out) {
  GradCheckOptions o;
  o.instances = c.size("gradcheck.instances");
  o.step = c.real("gradcheck.step");
  o.tolerance = c.real("gradcheck.tolerance");
  o.seed = c.u64("seed");
  require(o.instances >= 1 && o.step > 0 && o.tolerance > 0, ErrorKind::config,
          "gradcheck needs instances >= 1, step > 0 and tolerance > 0");
  const auto cases = run_gradcheck_suite(o);
  std::size_t failed = 0;
  for (const auto& k : cases) {
    char line[160];
    std::snprintf(line, sizeof line, "%-20s instances=%zu max_rel_err=%.3e %s\n", k.op.c_str(),
                  k.instances, k.max_relative_error, k.passed ? "ok" : "FAIL");
    out << line;
    failed += k.passed ? 0 : 1;
  }
  require(failed == 0, ErrorKind::numeric, failed, " of ", cases.size(),
          " operators failed the gradient check");
  out << "gradcheck: all " << cases.size() << " operators passed\n";
  return cases;
}

}  // namespace drivesal
