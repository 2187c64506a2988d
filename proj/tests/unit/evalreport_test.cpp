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

#include "drivesal/evalreport/evaluate.hpp"
#include "support/temp_dir.hpp"

using namespace drivesal;

namespace {

const DrivingSet& test_set() {
  static const DrivingSet set = [] {
    SessionConfig sc;
    sc.n_frames = 40;
    sc.camera.resolution = 32;
    sc.seed = 11;
    sc.synth_gaze = false;
    return make_driving_set({run_session(sc)}, 32, 0.0, 1);
  }();
  return set;
}

AgentSpec agent32() {
  AgentSpec s;
  s.input = 32;
  s.hidden = 8;
  return s;
}

/// Agent whose output is the fc2 bias for every input.
Model<float> constant_agent(float s, float t, float b) {
  auto m = make_zero_model<float>(agent32());
  auto& bias = m.net.params().value(m.net.params().index_of("fc2.bias"));
  bias[0] = s;
  bias[1] = t;
  bias[2] = b;
  return m;
}

EvalRow row(const std::string& name, double combined, const std::string& digest = "d") {
  EvalRow r;
  r.model = name;
  r.clamped.combined = combined;
  r.frames = 10;
  r.digest = digest;
  return r;
}

}  // namespace

TEST(EvaluateMse, ExactAgentScoresZero) {
  DrivingSet set = test_set();
  for (auto& a : set.actions) a = {0.25, 0.5, 0.0};
  const auto r = evaluate_mse("m", constant_agent(0.25f, 0.5f, 0.0f), InputPipeline::raw(), set);
  EXPECT_EQ(r.clamped.combined, 0.0);
  EXPECT_EQ(r.raw.combined, 0.0);
  EXPECT_EQ(r.frames, set.size());
}

TEST(EvaluateMse, ZeroAgentScoresMeanSquareMagnitude) {
  const auto& set = test_set();
  double m = 0.0;
  for (const auto& a : set.actions)
    m += (a.steering * a.steering + a.throttle * a.throttle + a.brake * a.brake) / 3.0;
  m /= double(set.size());
  const auto r = evaluate_mse("zero", make_zero_model<float>(agent32()), InputPipeline::raw(), set);
  EXPECT_NEAR(r.clamped.combined, m, 1e-15);
  EXPECT_NEAR(r.clamped.combined,
              (r.clamped.per_action[0] + r.clamped.per_action[1] + r.clamped.per_action[2]) / 3.0,
              1e-12);
}

TEST(EvaluateMse, ClampedAndRawDiffer) {
  const auto& set = test_set();
  const auto r = evaluate_mse("c", constant_agent(1.5f, -0.25f, 0.0f), InputPipeline::raw(), set);
  const auto want_clamped = evaluate_constant("k", {1.0, 0.0, 0.0}, set);
  const auto want_raw = evaluate_constant("k", {1.5, -0.25, 0.0}, set);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(r.clamped.per_action[k], want_clamped.clamped.per_action[k], 1e-15);
    EXPECT_NEAR(r.raw.per_action[k], want_raw.raw.per_action[k], 1e-15);
  }
  EXPECT_GT(r.raw.combined, r.clamped.combined);
}

TEST(EvaluateMse, RepeatableAndSideEffectFree) {
  const auto& set = test_set();
  const auto agent = make_model<float>(agent32(), 3);
  const auto before = set.digest();
  const auto a = evaluate_mse("a", agent, InputPipeline::raw(), set);
  const auto b = evaluate_mse("a", agent, InputPipeline::raw(), set);
  EXPECT_EQ(eval_csv({a}), eval_csv({b}));
  EXPECT_EQ(a.clamped.combined, b.clamped.combined);
  EXPECT_EQ(set.digest(), before);
  EXPECT_TRUE(agent.net.params().same_values(make_model<float>(agent32(), 3).net.params()));
}

TEST(EvaluateMse, PipelineAndCheckpointMustMatch) {
  Net1Spec n1;
  n1.input = 32;
  EXPECT_THROW(InputPipeline::roadsal(make_model<float>(n1, 1)), Error);
  EXPECT_THROW(InputPipeline::net1(make_model<float>(agent32(), 1)), Error);
  EXPECT_THROW(evaluate_mse("x", make_model<float>(n1, 1), InputPipeline::raw(), test_set()),
               Error);
  AgentSpec big;
  EXPECT_THROW(evaluate_mse("x", make_model<float>(big, 1), InputPipeline::raw(), test_set()),
               Error);
}

TEST(EvaluateMse, Net1PipelineMatchesManualProduct) {
  const auto& set = test_set();
  Net1Spec n1;
  n1.input = 32;
  n1.widths = {4, 1};
  const auto net1 = make_model<float>(n1, 2);
  const auto agent = make_model<float>(agent32(), 3);
  const auto r = evaluate_mse("m3", agent, InputPipeline::net1(net1), set);
  detail::MseAccumulator acc;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto x = to_tensor<float>(set.frames[i]);
    const auto map = net1.net.forward(x);
    Tensor<float> masked(x.shape());
    for (std::size_t p = 0; p < map.size(); ++p)
      for (std::size_t c = 0; c < 3; ++c) masked[p * 3 + c] = x[p * 3 + c] * map[p];
    acc.add(agent_forward(agent, masked).clamped(), set.actions[i]);
  }
  EXPECT_EQ(r.clamped.combined, acc.result().combined);
  EXPECT_EQ(r.pipeline, "net1");
}

TEST(CompareModels, ReferenceRowsMatchPaperOrdering) {
  const auto c = compare_models({row("model1", 0.01369), row("model2", 0.01145), row("model3", 0.034)});
  EXPECT_EQ(c.ordering, "model2 < model1 < model3");
  EXPECT_EQ(c.flag, OrderingFlag::matches_paper);
  EXPECT_NE(comparison_text(c).find("matches-paper"), std::string::npos);
}

TEST(CompareModels, TiesAreIndeterminate) {
  const auto c = compare_models({row("model1", 0.02), row("model2", 0.02), row("model3", 0.02)});
  EXPECT_EQ(c.flag, OrderingFlag::indeterminate);
  EXPECT_EQ(c.ordering, "model1 = model2 = model3");
}

TEST(CompareModels, OtherOrderingsDiffer) {
  const auto c = compare_models({row("model1", 0.01), row("model2", 0.02), row("model3", 0.03)});
  EXPECT_EQ(c.flag, OrderingFlag::differs);
  EXPECT_EQ(c.ordering, "model1 < model2 < model3");
}

TEST(CompareModels, RejectsMixedTestData) {
  EXPECT_THROW(
      compare_models({row("model1", 0.1), row("model2", 0.2, "other"), row("model3", 0.3)}),
      Error);
}

TEST(ExportPairs, OneFilePerFrameWithIdentityPanels) {
  testing_support::TempDir tmp;
  const auto& set = test_set();
  std::vector<Image8> images(set.frames.begin(), set.frames.begin() + 3);
  std::vector<Tensor<float>> maps(3, Tensor<float>({32, 32, 1}, 1.0f));
  maps[2] = Tensor<float>({32, 32}, 0.0f);
  const auto files = export_saliency_pairs(images, maps, tmp.path());
  ASSERT_EQ(files.size(), 3u);
  EXPECT_EQ(files[1].filename(), "pair_000001.png");
  const Image8 p = read_png(files[0]);
  ASSERT_EQ(p.width, 96u);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        ASSERT_EQ(p.at(x, y, c), p.at(64 + x, y, c));
        ASSERT_EQ(p.at(x, y, c), images[0].at(x, y, c));
        ASSERT_EQ(p.at(32 + x, y, c), 255);
      }
  const Image8 z = read_png(files[2]);
  for (std::size_t x = 32; x < 96; ++x) EXPECT_EQ(z.at(x, 5, 1), 0);
}

TEST(ExportPairs, CountMismatchAndIoFailures) {
  testing_support::TempDir tmp;
  const auto& set = test_set();
  EXPECT_THROW(export_saliency_pairs({set.frames[0]}, {}, tmp.path()), Error);
  fs::create_directories(tmp.path() / "pair_000000.png");  // a directory where a file goes
  try {
    export_saliency_pairs({set.frames[0], set.frames[1]},
                          {Tensor<float>({32, 32}, 1.0f), Tensor<float>({32, 32}, 1.0f)},
                          tmp.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
    EXPECT_NE(std::string(e.what()).find("1 of 2"), std::string::npos) << e.what();
  }
  EXPECT_TRUE(fs::exists(tmp.path() / "pair_000001.png"));
}
