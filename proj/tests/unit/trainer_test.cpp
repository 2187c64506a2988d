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

#include <random>
#include <set>

#include "drivesal/trainer/trainer.hpp"
#include "support/finite_diff.hpp"
#include "support/temp_dir.hpp"

using namespace drivesal;

namespace {

SessionLog small_session(std::size_t frames, std::size_t res, std::uint64_t seed,
                         bool gaze = true) {
  SessionConfig sc;
  sc.n_frames = frames;
  sc.camera.resolution = res;
  sc.seed = seed;
  sc.synth_gaze = gaze;
  return run_session(sc);
}

const DrivingSet& driving48() {
  static const DrivingSet set = make_driving_set({small_session(120, 48, 5, false)}, 48, 0.2, 1);
  return set;
}

AgentSpec agent48() {
  AgentSpec s;
  s.input = 48;
  return s;
}

Net1Spec net1_48() {
  Net1Spec s;
  s.input = 48;
  s.widths = {8, 1};
  return s;
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.sgd.learning_rate = 1e-2;
  c.sgd.batch_size = 16;
  return c;
}

const SaliencyDataset& tiny_saliency() {
  static const SaliencyDataset ds = [] {
    DatasetConfig dc;
    dc.input_resolution = 16;
    dc.target_resolution = 8;
    return build_dataset({small_session(30, 64, 2)}, dc);
  }();
  return ds;
}

RoadSalSpec roadsal16() {
  RoadSalSpec s;
  s.input = 16;
  s.channels = {4, 8, 32};
  s.kernels = {3, 3, 3};
  return s;
}

}  // namespace

TEST(TrainConfig, RejectsBadWeightsAndFractions) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lambda1 = 0.0;
  c.lambda2 = 0.0;
  EXPECT_THROW(c.validate(), Error);
  c.lambda1 = -0.1;
  c.lambda2 = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.holdout_fraction = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.sgd.momentum = 1.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(TrainConfig, DigestTracksEveryField) {
  TrainConfig a, b;
  EXPECT_EQ(a.digest(), b.digest());
  b.lambda1 = 0.2;
  EXPECT_NE(a.digest(), b.digest());
  b = a;
  b.sparsity = SparsityVariant::linear;
  EXPECT_NE(a.digest(), b.digest());
}

TEST(DrivingSet, HeldOutBlocksAreWholeAndDisjoint) {
  const auto& set = driving48();
  ASSERT_EQ(set.size(), 120u);
  std::set<std::size_t> all(set.train.begin(), set.train.end());
  for (auto i : set.heldout) EXPECT_TRUE(all.insert(i).second) << i;
  EXPECT_EQ(all.size(), 120u);
  EXPECT_EQ(set.heldout.size(), 20u * (set.heldout.size() / 20));
  std::set<std::size_t> held(set.heldout.begin(), set.heldout.end());
  for (std::size_t b = 0; b < 6; ++b) {
    const bool first = held.count(b * 20) > 0;
    for (std::size_t i = b * 20; i < b * 20 + 20; ++i) EXPECT_EQ(held.count(i) > 0, first);
  }
  EXPECT_EQ(set.frames[0].width, 48u);
}

TEST(DrivingSet, ConstantBaselineMatchesDirectSum) {
  const auto& set = driving48();
  double m[3] = {0, 0, 0};
  for (auto i : set.train) {
    m[0] += set.actions[i].steering;
    m[1] += set.actions[i].throttle;
    m[2] += set.actions[i].brake;
  }
  for (double& v : m) v /= double(set.train.size());
  double want = 0.0;
  for (auto i : set.heldout) {
    const auto& a = set.actions[i];
    want += ((a.steering - m[0]) * (a.steering - m[0]) + (a.throttle - m[1]) * (a.throttle - m[1]) +
             (a.brake - m[2]) * (a.brake - m[2])) /
            3.0;
  }
  want /= double(set.heldout.size());
  EXPECT_NEAR(constant_baseline_mse(set, set.train, set.heldout), want, 1e-15);
}

TEST(TrainRoadSal, InitialLossIsNearZero) {
  DatasetConfig dc;
  auto ds = build_dataset({small_session(12, 96, 4)}, dc);
  ds.train.resize(1);
  TrainConfig c = quick(0);
  const auto r = train_roadsal(ds, RoadSalSpec{}, c).report;
  EXPECT_LT(std::abs(r.initial_heldout_loss), 0.3);
  EXPECT_TRUE(r.train_loss.empty());
}

TEST(TrainRoadSal, SameSeedSameCurvesAndWeights) {
  TrainConfig c = quick(3);
  c.sgd.learning_rate = 0.1;
  const auto a = train_roadsal(tiny_saliency(), roadsal16(), c);
  const auto b = train_roadsal(tiny_saliency(), roadsal16(), c);
  EXPECT_EQ(a.report.train_loss, b.report.train_loss);
  EXPECT_EQ(a.report.heldout_loss, b.report.heldout_loss);
  EXPECT_TRUE(a.model.net.params().same_values(b.model.net.params()));
  EXPECT_EQ(loss_curve_csv(a.report), loss_curve_csv(b.report));
  EXPECT_EQ(report_text(a.report), report_text(b.report));
  c.seed = 2;
  EXPECT_NE(train_roadsal(tiny_saliency(), roadsal16(), c).report.train_loss, a.report.train_loss);
}

TEST(TrainRoadSal, BatchClampIsRecorded) {
  TrainConfig c = quick(1);
  c.sgd.batch_size = 300;
  const auto r = train_roadsal(tiny_saliency(), roadsal16(), c).report;
  EXPECT_EQ(r.batch_size_used, tiny_saliency().train.size());
  ASSERT_FALSE(r.notes.empty());
  EXPECT_NE(r.notes[0].find("clamped"), std::string::npos);
  EXPECT_NE(report_text(r).find("batch size used: " + std::to_string(r.batch_size_used)),
            std::string::npos);
}

TEST(TrainRoadSal, RejectsMismatchedResolution) {
  EXPECT_THROW(train_roadsal(tiny_saliency(), RoadSalSpec{}, quick(1)), Error);
}

TEST(TrainRoadSal, LossDecreasesOnTinySet) {
  TrainConfig c = quick(15);
  c.sgd.learning_rate = 0.3;
  const auto r = train_roadsal(tiny_saliency(), roadsal16(), c).report;
  ASSERT_EQ(r.train_loss.size(), 15u);
  EXPECT_LT(r.train_loss.back(), r.train_loss.front() - 0.1);
  for (double v : r.train_loss) EXPECT_TRUE(std::isfinite(v));
}

TEST(TrainDriver, ZeroEpochsKeepsInitialization) {
  const auto r = train_driver(driving48(), agent48(), quick(0));
  EXPECT_TRUE(r.model.net.params().same_values(make_model<float>(agent48(), 1).net.params()));
  EXPECT_EQ(loss_curve_csv(r.report), "epoch,train_loss,heldout_loss\n");
}

TEST(TrainDriver, BeatsConstantBaselineOnTrainData) {
  const auto& set = driving48();
  const auto r = train_driver(set, agent48(), quick(12));
  ASSERT_EQ(r.report.train_loss.size(), 12u);
  for (double v : r.report.train_loss) ASSERT_TRUE(std::isfinite(v));
  const std::vector<std::optional<Tensor<float>>> none(set.size());
  EXPECT_LT(driver_loss(r.model, set, set.train, none),
            constant_baseline_mse(set, set.train, set.train));
}

TEST(TrainDriver, DivergenceAbortsWithPartialReport) {
  TrainConfig c = quick(5);
  c.sgd.learning_rate = 1e12;
  const auto r = train_driver(driving48(), agent48(), c).report;
  ASSERT_TRUE(r.aborted.has_value());
  EXPECT_LT(r.train_loss.size(), 5u);
  EXPECT_EQ(r.train_loss.size(), r.heldout_loss.size());
  for (double v : r.train_loss) EXPECT_TRUE(std::isfinite(v));
  EXPECT_NE(report_text(r).find("aborted"), std::string::npos);
}

TEST(TrainDriver, StopHookEndsEarly) {
  TrainOptions opt;
  opt.stop_when = [](const TrainReport& r) { return r.epochs_run() == 2; };
  const auto r = train_driver(driving48(), agent48(), quick(10), opt).report;
  EXPECT_EQ(r.train_loss.size(), 2u);
}

TEST(AttentionStep, ChainGradientMatchesFiniteDifferences) {
  AgentSpec as;
  as.input = 8;
  as.channels = {2, 3, 4};
  as.hidden = 5;
  Net1Spec ns;
  ns.input = 8;
  ns.widths = {3, 1};
  auto net1 = make_model<double>(ns, 3);
  for (auto& e : net1.net.params())
    if (e.value.rank() == 1)
      for (auto& v : e.value.storage()) v = 0.05;
  const auto net2 = make_model<double>(as, 4);
  std::mt19937_64 gen(5);
  const auto image = testing_support::uniform({8, 8, 3}, gen, 0.0, 1.0);
  const auto truth = Tensor<double>::from({0.1, 0.4, 0.0});
  TrainConfig cfg;
  cfg.lambda1 = 0.3;
  cfg.lambda2 = 2.0;
  for (auto variant : {SparsityVariant::squared, SparsityVariant::linear}) {
    cfg.sparsity = variant;
    GradAccumulator<double> acc(net1.net.params());
    attention_sample(net1.net, net2.net, image, truth, cfg, &acc);
    auto& grads = acc.finalize(1.0);
    double worst = 0.0;
    for (std::size_t p = 0; p < net1.net.params().size(); ++p) {
      auto& w = net1.net.params().value(p);
      const auto num = testing_support::central_diff(
          [&] {
            return attention_sample<double>(net1.net, net2.net, image, truth, cfg, nullptr).total;
          },
          w);
      worst = std::max(worst, testing_support::worst_rel_err(grads[p], num));
    }
    EXPECT_LT(worst, 1e-5) << to_string(variant);
  }
}

TEST(AttentionStep, Net2StaysBitwiseFrozenAndNet1Learns) {
  const auto& set = driving48();
  const auto net2 = train_driver(set, agent48(), quick(2)).model;
  testing_support::TempDir tmp;
  save_checkpoint(tmp.path() / "before", net2);
  TrainConfig c = quick(2);
  const auto r = train_attention_unsupervised(net2, set, net1_48(), c);
  save_checkpoint(tmp.path() / "after", net2);
  EXPECT_EQ(read_text(tmp.path() / "before" / "params.bin"),
            read_text(tmp.path() / "after" / "params.bin"));
  EXPECT_FALSE(r.model.net.params().same_values(make_model<float>(net1_48(), 1).net.params()));
  for (const auto& n : r.report.notes) EXPECT_EQ(n.find("all-zero"), std::string::npos);
  for (const char* name : {"loss1", "loss2", "mean_attention"})
    EXPECT_EQ(r.report.series.at(name).size(), 2u);
  EXPECT_NE(loss_curve_csv(r.report).find("loss1,loss2,mean_attention"), std::string::npos);
}

TEST(AttentionStep, FirstBatchGradientIsNonzero) {
  const auto& set = driving48();
  const auto net2 = make_model<float>(agent48(), 7);
  const auto net1 = make_model<float>(net1_48(), 8);
  GradAccumulator<float> acc(net1.net.params());
  attention_sample(net1.net, net2.net, to_tensor<float>(set.frames[0]),
                   action_tensor(set.actions[0]), TrainConfig{}, &acc);
  bool any = false;
  for (const auto& g : acc.grads())
    for (float v : g.values()) any = any || v != 0.0f;
  EXPECT_TRUE(any);
}

TEST(AttentionStep, RejectsWrongNet2) {
  const auto& set = driving48();
  EXPECT_THROW(train_attention_unsupervised(make_model<float>(net1_48(), 1), set, net1_48(),
                                            quick(1)),
               Error);
  EXPECT_THROW(
      train_attention_unsupervised(make_model<float>(AgentSpec{}, 1), set, net1_48(), quick(1)),
      Error);
}

TEST(TrainAgents, SharedInitAndOnesMapIdentity) {
  const auto& set = driving48();
  RoadSalSpec rs;
  rs.input = 48;
  const auto a = train_agents(make_model<float>(rs, 1), make_model<float>(net1_48(), 2), set,
                              agent48(), quick(0));
  EXPECT_TRUE(a.models[0].model.net.params().same_values(a.models[1].model.net.params()));
  EXPECT_TRUE(a.models[0].model.net.params().same_values(a.models[2].model.net.params()));
  const Tensor<float> ones({48, 48, 1}, 1.0f);
  EXPECT_EQ(InputPipeline::apply(set.frames[3], ones), InputPipeline::apply(set.frames[3], {}));
}

TEST(TrainAgents, RejectsMismatchedAttentionBeforeTraining) {
  const auto& set = driving48();
  RoadSalSpec rs;
  rs.input = 48;
  Net1Spec wrong = net1_48();
  wrong.input = 32;
  EXPECT_THROW(train_agents(make_model<float>(rs, 1), make_model<float>(wrong, 2), set, agent48(),
                            quick(1)),
               Error);
  EXPECT_THROW(train_agents(make_model<float>(net1_48(), 1), make_model<float>(net1_48(), 2), set,
                            agent48(), quick(1)),
               Error);
}

TEST(TrainAgents, PipelinesDifferOnlyInInput) {
  const auto& set = driving48();
  RoadSalSpec rs;
  rs.input = 48;
  const auto roadsal = make_model<float>(rs, 1);
  const auto p = InputPipeline::roadsal(roadsal);
  const auto map = *p.attention_map(set.frames[0]);
  ASSERT_EQ(map.shape(), (Shape{48, 48, 1}));
  float hi = 0.0f;
  for (float v : map.values()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
    hi = std::max(hi, v);
  }
  EXPECT_FLOAT_EQ(hi, 1.0f);
  EXPECT_EQ(p.prepare(set.frames[0]), incorporate_saliency(to_tensor<float>(set.frames[0]), map));
}

TEST(TrainReportIo, WritesCsvAndReport) {
  testing_support::TempDir tmp;
  TrainReport r;
  r.procedure = "x";
  r.train_loss = {1.5, 0.25};
  r.heldout_loss = {2, 0.5};
  r.series["mean_attention"] = {0.5, 0.125};
  write_train_report(tmp.path(), r, "p_");
  EXPECT_EQ(read_text(tmp.path() / "p_loss_curve.csv"),
            "epoch,train_loss,heldout_loss,mean_attention\n1,1.5,2,0.5\n2,0.25,0.5,0.125\n");
  EXPECT_EQ(read_text(tmp.path() / "p_report.txt").find("wall"), std::string::npos);
}
