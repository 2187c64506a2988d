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

#include <cmath>
#include <random>

#include "drivesal/nets/checkpoint.hpp"
#include "support/finite_diff.hpp"
#include "support/temp_dir.hpp"

using namespace drivesal;

namespace {

template <typename T>
Tensor<T> random_image(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<T> t({n, n, 3});
  for (auto& v : t.storage()) v = T(rng.uniform());
  return t;
}

Tensor<double> shift(const Tensor<double>& x, std::size_t dy, std::size_t dx) {
  Tensor<double> out(x.shape());
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx)
      for (std::size_t k = 0; k < c; ++k) out.at((y + dy) % h, (xx + dx) % w, k) = x.at(y, xx, k);
  return out;
}

// Whole-network gradient of loss = <r, f(x)> against central differences on
// a sample of parameter entries.
double network_grad_error(Model<double>& m, const Tensor<double>& x, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const auto out_shape = m.net.forward(x).shape();
  const auto r = testing_support::uniform(out_shape, gen);
  GradAccumulator<double> acc(m.net.params());
  const auto trace = m.net.forward_trace(x);
  m.net.backward(trace, r, &acc, false);
  auto& grads = acc.finalize(1.0);
  double worst = 0.0;
  for (std::size_t p = 0; p < m.net.params().size(); ++p) {
    auto& value = m.net.params().value(p);
    std::uniform_int_distribution<std::size_t> pick(0, value.size() - 1);
    for (int s = 0; s < 6; ++s) {
      const std::size_t i = pick(gen);
      const double keep = value[i], h = 1e-5;
      value[i] = keep + h;
      const double fp = testing_support::dot(r, m.net.forward(x));
      value[i] = keep - h;
      const double fm = testing_support::dot(r, m.net.forward(x));
      value[i] = keep;
      const double num = (fp - fm) / (2 * h), ana = grads[p][i];
      worst = std::max(worst, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6}));
    }
  }
  return worst;
}

}  // namespace

TEST(RoadSal, ShapeChainMatchesArchitecture) {
  const auto m = make_model<float>(RoadSalSpec{}, 1);
  const auto chain = m.net.shape_chain();
  std::vector<Shape> pooled;
  for (std::size_t i = 0; i < m.net.layers().size(); ++i)
    if (m.net.layers()[i].kind == LayerKind::maxpool) pooled.push_back(chain[i + 1]);
  ASSERT_EQ(pooled.size(), 3u);
  EXPECT_EQ(pooled[0], (Shape{48, 48, 16}));
  EXPECT_EQ(pooled[1], (Shape{24, 24, 24}));
  EXPECT_EQ(pooled[2], (Shape{12, 12, 32}));
  const std::size_t n = chain.size();
  EXPECT_EQ(chain[n - 4], (Shape{4608}));
  EXPECT_EQ(chain[n - 3], (Shape{2304}));
  EXPECT_EQ(chain[n - 2], (Shape{2304}));
  EXPECT_EQ(chain[n - 1], (Shape{48, 48}));
  EXPECT_EQ(m.net.params().value(m.net.params().index_of("dense.weights")).shape(),
            (Shape{2304, 2304}));
}

TEST(RoadSal, ChainHoldsForOtherWidthsAndKernels) {
  for (auto [c1, c2, k1, k2, k3] : std::vector<std::array<std::size_t, 5>>{
           {4, 8, 3, 3, 3}, {32, 16, 7, 5, 1}, {1, 1, 1, 1, 1}}) {
    RoadSalSpec s;
    s.channels = {c1, c2, 32};
    s.kernels = {k1, k2, k3};
    const auto chain = make_zero_model<float>(s).net.shape_chain();
    EXPECT_EQ(chain[chain.size() - 4], (Shape{4608}));
    EXPECT_EQ(chain.back(), (Shape{48, 48}));
  }
}

TEST(RoadSal, ThirdBlockMustBe32Wide) {
  RoadSalSpec s;
  s.channels = {16, 24, 16};
  EXPECT_THROW(make_zero_model<float>(s), Error);
  s.channels = {16, 24, 32};
  s.input = 100;
  EXPECT_THROW(make_zero_model<float>(s), Error);
}

TEST(RoadSal, ZeroImageZeroBiasGivesZeroMap) {
  const auto m = make_model<float>(RoadSalSpec{}, 4);
  const auto out = roadsal_forward(m, Tensor<float>({96, 96, 3}));
  ASSERT_EQ(out.shape(), (Shape{48, 48}));
  for (float v : out.values()) ASSERT_EQ(v, 0.0f);
}

TEST(Net1, KeepsSpatialSizeAndSigmoidRange) {
  const auto m = make_model<float>(Net1Spec{}, 2);
  const auto out = net1_forward(m, random_image<float>(96, 3));
  ASSERT_EQ(out.shape(), (Shape{96, 96, 1}));
  for (float v : out.values()) {
    ASSERT_GT(v, 0.0f);
    ASSERT_LT(v, 1.0f);
  }
}

TEST(Net1, ZeroParamsGiveHalfEverywhere) {
  const auto out = net1_forward(make_zero_model<float>(Net1Spec{}), random_image<float>(96, 5));
  for (float v : out.values()) ASSERT_EQ(v, 0.5f);
}

TEST(Net1, RejectsDownsamplingOrMultiChannelHead) {
  Net1Spec s;
  s.widths = {16, 2};
  EXPECT_THROW(make_zero_model<float>(s), Error);
  s.widths = {16, 1};
  s.padding = Padding::valid;
  EXPECT_THROW(make_zero_model<float>(s), Error);
}

TEST(Net1, PeriodicPaddingIsShiftEquivariant) {
  Net1Spec s;
  s.input = 24;
  s.padding = Padding::periodic;
  const auto m = make_model<double>(s, 6);
  const auto x = random_image<double>(24, 7);
  const auto y = m.net.forward(x);
  const auto ys = m.net.forward(shift(x, 5, 11));
  const auto want = shift(y, 5, 11);
  for (std::size_t i = 0; i < want.size(); ++i) ASSERT_NEAR(ys[i], want[i], 1e-12);
}

TEST(Agent, ZeroParamsGiveZeroAction) {
  const auto a = agent_forward(make_zero_model<float>(AgentSpec{}), random_image<float>(96, 1));
  EXPECT_EQ(a, (DrivingAction{0, 0, 0}));
}

TEST(Agent, OutputsThreeFiniteValuesForRandomParams) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto m = make_model<float>(AgentSpec{}, seed);
    const auto out = m.net.forward(random_image<float>(96, seed + 1000));
    ASSERT_EQ(out.shape(), (Shape{3}));
    ASSERT_TRUE(out.all_finite());
  }
}

TEST(Agent, InitDependsOnlyOnSeed) {
  const auto a = make_model<float>(AgentSpec{}, 9), b = make_model<float>(AgentSpec{}, 9);
  EXPECT_TRUE(a.net.params().same_values(b.net.params()));
  EXPECT_FALSE(a.net.params().same_values(make_model<float>(AgentSpec{}, 10).net.params()));
}

TEST(Backprop, MatchesFiniteDifferencesOnSmallNetworks) {
  RoadSalSpec rs;
  rs.input = 16;
  rs.channels = {3, 4, 32};
  Net1Spec n1;
  n1.input = 10;
  n1.widths = {4, 3, 1};
  AgentSpec ag;
  ag.input = 16;
  ag.channels = {3, 4, 5};
  ag.hidden = 6;
  for (const ModelSpec& spec : std::vector<ModelSpec>{rs, n1, ag}) {
    auto m = make_model<double>(spec, 21);
    // Non-zero biases so no unit sits exactly on a relu kink.
    for (auto& e : m.net.params())
      if (e.value.rank() == 1)
        for (auto& v : e.value.storage()) v = 0.05;
    const std::size_t n = m.net.input_shape()[0];
    EXPECT_LT(network_grad_error(m, random_image<double>(n, 22), 23), 1e-4) << model_kind(spec);
  }
}

TEST(Backprop, InputGradientMatchesFiniteDifferences) {
  AgentSpec ag;
  ag.input = 8;
  ag.channels = {2, 3, 4};
  ag.hidden = 5;
  const auto m = make_model<double>(ag, 31);
  auto x = random_image<double>(8, 32);
  std::mt19937_64 gen(33);
  const auto r = testing_support::uniform({3}, gen);
  const auto dx = m.net.backward(m.net.forward_trace(x), r, nullptr, true);
  const auto num = testing_support::central_diff(
      [&] { return testing_support::dot(r, m.net.forward(x)); }, x);
  EXPECT_LT(testing_support::worst_rel_err(dx, num), 1e-4);
}

TEST(Backprop, BatchedDenseGradientEqualsPerSampleSum) {
  AgentSpec ag;
  ag.input = 16;
  const auto m = make_model<double>(ag, 41);
  GradAccumulator<double> batched(m.net.params());
  std::vector<Tensor<double>> summed = m.net.params().zero_grads();
  std::mt19937_64 gen(42);
  for (int s = 0; s < 4; ++s) {
    const auto x = random_image<double>(16, 50 + s);
    const auto r = testing_support::uniform({3}, gen);
    const auto trace = m.net.forward_trace(x);
    m.net.backward(trace, r, &batched, false);
    GradAccumulator<double> one(m.net.params());
    m.net.backward(trace, r, &one, false);
    auto& g = one.finalize(1.0);
    for (std::size_t p = 0; p < g.size(); ++p)
      for (std::size_t i = 0; i < g[p].size(); ++i) summed[p][i] += g[p][i];
  }
  auto& got = batched.finalize(0.25);
  for (std::size_t p = 0; p < got.size(); ++p)
    for (std::size_t i = 0; i < got[p].size(); ++i)
      ASSERT_NEAR(got[p][i], summed[p][i] * 0.25, 1e-12);
}

TEST(NormalizeMap, ClampsAndScalesByMax) {
  const auto out = normalize_map(Tensor<double>::from({-1, 2, 4}));
  EXPECT_EQ(out, Tensor<double>::from({0, 0.5, 1}));
  const auto zero = normalize_map(Tensor<double>({4, 4}));
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
  const auto unit = Tensor<double>::from({0.25, 1.0, 0.0, 0.5});
  EXPECT_EQ(normalize_map(unit), unit);
}

TEST(UpsampleMap, ConstantAndIdentityCases) {
  const auto c = upsample_map(Tensor<double>({48, 48}, 0.3), 96);
  ASSERT_EQ(c.shape(), (Shape{96, 96, 1}));
  for (double v : c.values()) EXPECT_NEAR(v, 0.3, 1e-15);
  Rng rng(1);
  Tensor<double> m({48, 48});
  for (auto& v : m.storage()) v = rng.uniform();
  const auto same = upsample_map(m, 48);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(same[i], m[i]);
  EXPECT_THROW(upsample_map(m, 24), Error);
}

TEST(UpsampleMap, StaysWithinInputRange) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    Tensor<double> m({48, 48});
    for (auto& v : m.storage()) v = rng.uniform(-3, 5);
    const auto [lo, hi] = std::minmax_element(m.storage().begin(), m.storage().end());
    const auto up = upsample_map(m, 96);
    for (double v : up.values()) {
      ASSERT_GE(v, *lo);
      ASSERT_LE(v, *hi);
    }
  }
}

TEST(Incorporate, OnesZerosAndHalf) {
  const auto img = random_image<double>(8, 3);
  EXPECT_EQ(incorporate_saliency(img, Tensor<double>({8, 8}, 1.0)), img);
  const auto zero = incorporate_saliency(img, Tensor<double>({8, 8, 1}, 0.0));
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
  const auto half = incorporate_saliency(img, Tensor<double>({8, 8}, 0.5));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(half[i], img[i] * 0.5);
  EXPECT_THROW(incorporate_saliency(img, Tensor<double>({4, 4}, 1.0)), Error);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  testing_support::TempDir tmp;
  const auto m = make_model<float>(AgentSpec{}, 3);
  save_checkpoint(tmp.path() / "a", m, {3, "abc", {{"note", "x"}}});
  const auto back = load_checkpoint(tmp.path() / "a");
  EXPECT_EQ(back.model.kind(), "agent");
  EXPECT_TRUE(back.model.net.params().same_values(m.net.params()));
  EXPECT_EQ(back.meta.seed, 3u);
  EXPECT_EQ(back.meta.train_config_digest, "abc");
  save_checkpoint(tmp.path() / "b", back.model, back.meta);
  EXPECT_EQ(read_text(tmp.path() / "a" / "params.bin"), read_text(tmp.path() / "b" / "params.bin"));
  EXPECT_EQ(read_text(tmp.path() / "a" / "manifest.json"),
            read_text(tmp.path() / "b" / "manifest.json"));
}

TEST(Checkpoint, AllKindsRoundTrip) {
  testing_support::TempDir tmp;
  Net1Spec n1;
  n1.padding = Padding::periodic;
  for (const ModelSpec& spec : std::vector<ModelSpec>{RoadSalSpec{}, n1, AgentSpec{}}) {
    const auto m = make_model<float>(spec, 8);
    save_checkpoint(tmp.path() / m.kind(), m);
    const auto back = load_checkpoint(tmp.path() / m.kind());
    EXPECT_EQ(spec_to_json(back.model.spec), spec_to_json(spec));
    EXPECT_TRUE(back.model.net.params().same_values(m.net.params()));
  }
}

namespace {

ErrorKind load_error(const fs::path& dir) {
  try {
    load_checkpoint(dir);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "load succeeded";
  return ErrorKind::state;
}

}  // namespace

TEST(Checkpoint, TruncatedPayloadIsCorrupt) {
  testing_support::TempDir tmp;
  save_checkpoint(tmp.path(), make_model<float>(Net1Spec{}, 1));
  const auto bytes = read_text(tmp.path() / "params.bin");
  write_bytes(tmp.path() / "params.bin", bytes.substr(0, bytes.size() - 7));
  EXPECT_EQ(load_error(tmp.path()), ErrorKind::corrupt);
}

TEST(Checkpoint, EditedShapeIsLengthMismatch) {
  testing_support::TempDir tmp;
  save_checkpoint(tmp.path(), make_model<float>(Net1Spec{}, 1));
  Json j = read_json(tmp.path() / "manifest.json");
  j["params"][0]["shape"] = Shape{3, 3, 3, 17};
  write_json(tmp.path() / "manifest.json", j);
  try {
    load_checkpoint(tmp.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::corrupt);
    EXPECT_NE(std::string(e.what()).find("declares"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, BadMagicVersionAndFlippedByte) {
  testing_support::TempDir tmp;
  save_checkpoint(tmp.path(), make_model<float>(Net1Spec{}, 1));
  const Json good = read_json(tmp.path() / "manifest.json");
  Json j = good;
  j["version"] = 2;
  write_json(tmp.path() / "manifest.json", j);
  EXPECT_EQ(load_error(tmp.path()), ErrorKind::corrupt);
  j = good;
  j["magic"] = "nope";
  write_json(tmp.path() / "manifest.json", j);
  EXPECT_EQ(load_error(tmp.path()), ErrorKind::corrupt);
  write_json(tmp.path() / "manifest.json", good);
  auto bytes = read_text(tmp.path() / "params.bin");
  bytes[10] ^= 0x40;
  write_bytes(tmp.path() / "params.bin", bytes);
  EXPECT_EQ(load_error(tmp.path()), ErrorKind::corrupt);
  write_bytes(tmp.path() / "manifest.json", "{ not json");
  EXPECT_EQ(load_error(tmp.path()), ErrorKind::corrupt);
}

TEST(Checkpoint, LittleEndianFloat32Payload) {
  testing_support::TempDir tmp;
  auto m = make_zero_model<float>(Net1Spec{});
  m.net.params().value(0)[0] = 1.0f;  // 0x3f800000
  save_checkpoint(tmp.path(), m);
  const auto bytes = read_text(tmp.path() / "params.bin");
  EXPECT_EQ(static_cast<unsigned char>(bytes[0]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(bytes[2]), 0x80);
  EXPECT_EQ(static_cast<unsigned char>(bytes[3]), 0x3f);
}
