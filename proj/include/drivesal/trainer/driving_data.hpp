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

// (frame, action) pairs for the driving agents, plus the three input
// pipelines that turn a frame into agent input.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "drivesal/gazeprep/dataset.hpp"
#include "drivesal/nets/models.hpp"

namespace drivesal {

struct DrivingSet {
  std::size_t input = 96;
  std::vector<Image8> frames;  // input x input RGB
  std::vector<DrivingAction> actions;
  std::vector<std::size_t> train;
  std::vector<std::size_t> heldout;

  std::size_t size() const { return frames.size(); }

  std::string digest() const {
    Fnv1a h;
    h.update_value(std::uint64_t(input));
    for (std::size_t i = 0; i < frames.size(); ++i) {
      h.update(frames[i].pixels.data(), frames[i].pixels.size());
      for (double v : actions[i].as_array()) h.update_value(v);
    }
    return h.hex();
  }

  /// Same frames with a different train/held-out assignment.
  DrivingSet with_split(std::vector<std::size_t> tr, std::vector<std::size_t> ho) const {
    DrivingSet out = *this;
    out.train = std::move(tr);
    out.heldout = std::move(ho);
    return out;
  }
};

inline Tensor<float> action_tensor(const DrivingAction& a) {
  return Tensor<float>::from({float(a.steering), float(a.throttle), float(a.brake)});
}

/// Frames resized to `input`. Consecutive frames are nearly identical, so
/// the held-out split takes whole blocks of `block` frames rather than
/// single frames.
inline DrivingSet make_driving_set(const std::vector<SessionLog>& sessions, std::size_t input,
                                   double holdout_fraction, std::uint64_t seed,
                                   std::size_t block = 20) {
  require(input >= 8, ErrorKind::config, "driving input resolution must be >= 8");
  require(holdout_fraction >= 0.0 && holdout_fraction < 1.0, ErrorKind::config,
          "holdout fraction must lie in [0, 1)");
  require(block >= 1, ErrorKind::config, "split block must be >= 1");
  DrivingSet set;
  set.input = input;
  std::vector<std::size_t> group_of;
  std::size_t groups = 0;
  for (const auto& log : sessions) {
    validate_session(log);
    for (std::size_t i = 0; i < log.frames.size(); ++i) {
      if (i % block == 0) ++groups;
      group_of.push_back(groups - 1);
      set.frames.push_back(detail::resize_image(log.frames[i].image, input));
      set.actions.push_back(log.actions[i]);
    }
  }
  require(!set.frames.empty(), ErrorKind::domain, "no (frame, action) pairs in the sessions");
  if (holdout_fraction == 0.0) {
    for (std::size_t i = 0; i < set.size(); ++i) set.train.push_back(i);
    return set;
  }
  auto split = split_by_groups(group_of, groups, 1.0 - holdout_fraction, seed);
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  set.train = std::move(split.train);
  set.heldout = std::move(split.test);
  return set;
}

/// Mean-squared magnitude, per action, of the constant predictor that
/// outputs the mean of `ids`, evaluated on `eval_ids`.
inline double constant_baseline_mse(const DrivingSet& set, const std::vector<std::size_t>& ids,
                                    const std::vector<std::size_t>& eval_ids) {
  require(!ids.empty() && !eval_ids.empty(), ErrorKind::domain, "baseline needs samples");
  std::array<double, 3> mean{};
  for (auto i : ids) {
    const auto a = set.actions[i].as_array();
    for (int k = 0; k < 3; ++k) mean[k] += a[k] / double(ids.size());
  }
  double mse = 0.0;
  for (auto i : eval_ids) mse += action_mse(DrivingAction::from_array(mean), set.actions[i]);
  return mse / double(eval_ids.size());
}

enum class PipelineKind { raw, roadsal, net1 };

inline std::string to_string(PipelineKind k) {
  switch (k) {
    case PipelineKind::raw: return "raw";
    case PipelineKind::roadsal: return "roadsal";
    case PipelineKind::net1: return "net1";
  }
  return "?";
}

inline PipelineKind parse_pipeline(const std::string& s) {
  if (s == "raw") return PipelineKind::raw;
  if (s == "roadsal") return PipelineKind::roadsal;
  if (s == "net1") return PipelineKind::net1;
  fail(ErrorKind::config, "unknown pipeline '", s, "' (expected raw|roadsal|net1)");
}

/// Frame -> agent input. raw passes the frame through; roadsal multiplies by
/// the normalized, upsampled RoadSal map; net1 multiplies by the Net1 map.
class InputPipeline {
 public:
  InputPipeline() = default;

  static InputPipeline raw() { return {}; }

  static InputPipeline roadsal(Model<float> m) {
    require_kind(m, "roadsal");
    return InputPipeline(PipelineKind::roadsal, std::move(m));
  }

  static InputPipeline net1(Model<float> m) {
    require_kind(m, "net1");
    return InputPipeline(PipelineKind::net1, std::move(m));
  }

  PipelineKind kind() const { return kind_; }
  const std::optional<Model<float>>& attention() const { return attention_; }

  /// [n, n, 1] map for a frame of side n; nullopt for raw.
  std::optional<Tensor<float>> attention_map(const Image8& frame) const {
    if (kind_ == PipelineKind::raw) return std::nullopt;
    const std::size_t n = frame.width;
    if (kind_ == PipelineKind::roadsal) {
      const std::size_t in = attention_->net.input_shape()[0];
      const auto x = to_tensor<float>(detail::resize_image(frame, in));
      return upsample_map(normalize_map(roadsal_forward(*attention_, x)), n);
    }
    require(attention_->net.input_shape()[0] == n, ErrorKind::shape, "Net1 expects ",
            attention_->net.input_shape()[0], " px frames, agent input is ", n);
    return net1_forward(*attention_, to_tensor<float>(frame));
  }

  static Tensor<float> apply(const Image8& frame, const std::optional<Tensor<float>>& map) {
    auto x = to_tensor<float>(frame);
    return map ? incorporate_saliency(x, *map) : x;
  }

  Tensor<float> prepare(const Image8& frame) const { return apply(frame, attention_map(frame)); }

 private:
  InputPipeline(PipelineKind k, Model<float> m) : kind_(k), attention_(std::move(m)) {}

  PipelineKind kind_ = PipelineKind::raw;
  std::optional<Model<float>> attention_;
};

/// Attention maps computed once per frame of a set.
inline std::vector<std::optional<Tensor<float>>> precompute_maps(const InputPipeline& p,
                                                                 const DrivingSet& set) {
  std::vector<std::optional<Tensor<float>>> maps;
  maps.reserve(set.size());
  for (const auto& f : set.frames) maps.push_back(p.attention_map(f));
  return maps;
}

}  // namespace drivesal
