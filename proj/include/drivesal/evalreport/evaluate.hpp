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

#pragma once

#include <algorithm>
#include <array>
#include <sstream>
#include <string>
#include <vector>

#include "drivesal/image/codec.hpp"
#include "drivesal/trainer/driving_data.hpp"
#include "drivesal/trainer/train_config.hpp"

namespace drivesal {

struct MseTriple {
  std::array<double, 3> per_action{};  // steering, throttle, brake
  double combined = 0.0;               // mean of the three
};

struct EvalRow {
  std::string model;
  std::string pipeline;
  MseTriple clamped;  // predictions clamped to the action ranges (headline)
  MseTriple raw;      // unclamped network output
  std::size_t frames = 0;
  std::string digest;  // identity of the test data
};

namespace detail {

/// Accumulates per-action squared errors and, independently, the per-frame
/// three-action mean; the two routes must agree.
class MseAccumulator {
 public:
  void add(const DrivingAction& pred, const DrivingAction& truth) {
    const auto p = pred.as_array(), t = truth.as_array();
    for (int k = 0; k < 3; ++k) sums_[k] += (p[k] - t[k]) * (p[k] - t[k]);
    frame_mean_ += action_mse(pred, truth);
    ++n_;
  }

  MseTriple result() const {
    require(n_ > 0, ErrorKind::domain, "no frames to evaluate");
    MseTriple out;
    for (int k = 0; k < 3; ++k) out.per_action[k] = sums_[k] / double(n_);
    out.combined = (out.per_action[0] + out.per_action[1] + out.per_action[2]) / 3.0;
    const double via_frames = frame_mean_ / double(n_);
    require(std::abs(out.combined - via_frames) <= 1e-12 * std::max(1.0, via_frames),
            ErrorKind::numeric, "combined MSE ", out.combined,
            " disagrees with the per-frame mean ", via_frames);
    return out;
  }

 private:
  std::array<double, 3> sums_{};
  double frame_mean_ = 0.0;
  std::size_t n_ = 0;
};

}  // namespace detail

/// Runs every frame of `test` through `pipeline` and the agent, exactly as in
/// training, and compares with the oracle actions. Uses all frames of the
/// set regardless of its train/held-out split.
inline EvalRow evaluate_mse(const std::string& name, const Model<float>& agent,
                            const InputPipeline& pipeline, const DrivingSet& test) {
  require_kind(agent, "agent");
  require(agent.net.input_shape()[0] == test.input, ErrorKind::config, "agent expects ",
          agent.net.input_shape()[0], " px frames, test set has ", test.input);
  detail::MseAccumulator clamped, raw;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto pred = agent_forward(agent, pipeline.prepare(test.frames[i]));
    raw.add(pred, test.actions[i]);
    clamped.add(pred.clamped(), test.actions[i]);
  }
  return {name, to_string(pipeline.kind()), clamped.result(), raw.result(), test.size(),
          test.digest()};
}

/// Row for a predictor that always outputs `action`.
inline EvalRow evaluate_constant(const std::string& name, const DrivingAction& action,
                                 const DrivingSet& test) {
  detail::MseAccumulator acc;
  for (std::size_t i = 0; i < test.size(); ++i) acc.add(action, test.actions[i]);
  const auto r = acc.result();
  return {name, "constant", r, r, test.size(), test.digest()};
}

inline DrivingAction mean_action(const DrivingSet& set, const std::vector<std::size_t>& ids) {
  require(!ids.empty(), ErrorKind::domain, "mean action of an empty set");
  std::array<double, 3> m{};
  for (auto i : ids) {
    const auto a = set.actions[i].as_array();
    for (int k = 0; k < 3; ++k) m[k] += a[k];
  }
  for (auto& v : m) v /= double(ids.size());
  return DrivingAction::from_array(m);
}

enum class OrderingFlag { matches_paper, differs, indeterminate };

inline std::string to_string(OrderingFlag f) {
  switch (f) {
    case OrderingFlag::matches_paper: return "matches-paper";
    case OrderingFlag::differs: return "differs";
    case OrderingFlag::indeterminate: return "indeterminate";
  }
  return "?";
}

struct Comparison {
  std::array<EvalRow, 3> rows;  // model1, model2, model3
  std::string ordering;         // e.g. "model2 < model1 < model3"
  OrderingFlag flag = OrderingFlag::indeterminate;
};

/// Orders three rows by clamped combined MSE. The reference ordering
/// (model2 < model1 < model3) is reported as a flag only. Any exact tie
/// makes the flag indeterminate.
inline Comparison compare_models(const std::array<EvalRow, 3>& rows) {
  for (const auto& r : rows) {
    require(r.digest == rows[0].digest && r.frames == rows[0].frames, ErrorKind::domain,
            "rows were evaluated on different test data (", rows[0].model, ": ", rows[0].digest,
            ", ", r.model, ": ", r.digest, ")");
  }
  Comparison c{rows, "", OrderingFlag::indeterminate};
  std::array<std::size_t, 3> idx{0, 1, 2};
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return rows[a].clamped.combined < rows[b].clamped.combined;
  });
  bool tie = false;
  for (std::size_t k = 0; k < 3; ++k) {
    if (k) {
      const bool eq = rows[idx[k]].clamped.combined == rows[idx[k - 1]].clamped.combined;
      tie = tie || eq;
      c.ordering += eq ? " = " : " < ";
    }
    c.ordering += rows[idx[k]].model;
  }
  if (!tie) {
    const double m1 = rows[0].clamped.combined, m2 = rows[1].clamped.combined,
                 m3 = rows[2].clamped.combined;
    c.flag = (m2 < m1 && m1 < m3) ? OrderingFlag::matches_paper : OrderingFlag::differs;
  }
  return c;
}

inline std::string eval_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream out;
  out << "model,pipeline,frames,steering_mse,throttle_mse,brake_mse,combined_mse,"
         "raw_steering_mse,raw_throttle_mse,raw_brake_mse,raw_combined_mse,digest\n";
  for (const auto& r : rows) {
    out << r.model << ',' << r.pipeline << ',' << r.frames;
    for (const auto* t : {&r.clamped, &r.raw}) {
      for (double v : t->per_action) out << ',' << format_number(v);
      out << ',' << format_number(t->combined);
    }
    out << ',' << r.digest << '\n';
  }
  return out.str();
}

inline std::string eval_table(const std::vector<EvalRow>& rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %-9s %12s %12s %12s %12s %12s\n", "model", "pipeline",
                "steering", "throttle", "brake", "combined", "raw-combined");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-14s %-9s %12.6g %12.6g %12.6g %12.6g %12.6g\n",
                  r.model.c_str(), r.pipeline.c_str(), r.clamped.per_action[0],
                  r.clamped.per_action[1], r.clamped.per_action[2], r.clamped.combined,
                  r.raw.combined);
    out << line;
  }
  return out.str();
}

inline std::string comparison_text(const Comparison& c, const std::vector<EvalRow>& extra = {}) {
  std::vector<EvalRow> rows(c.rows.begin(), c.rows.end());
  rows.insert(rows.end(), extra.begin(), extra.end());
  std::ostringstream out;
  out << eval_table(rows) << "frames: " << c.rows[0].frames << "  test digest: " << c.rows[0].digest
      << '\n'
      << "ordering (clamped combined MSE): " << c.ordering << '\n'
      << "reference ordering model2 < model1 < model3: " << to_string(c.flag)
      << " (informational)\n";
  return out.str();
}

/// Side-by-side PNGs: original | map as grayscale | image * map, named
/// pair_NNNNNN.png. Every file is attempted; failures are collected and
/// reported together.
inline std::vector<fs::path> export_saliency_pairs(const std::vector<Image8>& images,
                                                   const std::vector<Tensor<float>>& maps,
                                                   const fs::path& dir) {
  require(images.size() == maps.size(), ErrorKind::domain, "export_saliency_pairs got ",
          images.size(), " images and ", maps.size(), " maps");
  ensure_directory(dir);
  std::vector<fs::path> written;
  std::vector<std::string> failures;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const fs::path path = dir / index_name("pair_", i, ".png");
    try {
      const Image8& img = images[i];
      require(img.channels == 3, ErrorKind::shape, "image ", i, " is not RGB");
      const Tensor<float> map = maps[i].reshaped({img.height, img.width});
      const Image8 gray = to_image(map);
      const Image8 mult = to_image(incorporate_saliency(to_tensor<float>(img), map));
      Image8 pair(img.width * 3, img.height, 3);
      for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
          for (std::size_t c = 0; c < 3; ++c) {
            pair.at(x, y, c) = img.at(x, y, c);
            pair.at(img.width + x, y, c) = gray.at(x, y, 0);
            pair.at(2 * img.width + x, y, c) = mult.at(x, y, c);
          }
      write_png(path, pair);
      written.push_back(path);
    } catch (const Error& e) {
      failures.push_back(path.string() + ": " + e.what());
    }
  }
  if (!failures.empty()) {
    std::string msg = detail::concat(failures.size(), " of ", images.size(), " exports failed");
    for (const auto& f : failures) msg += "; " + f;
    fail(ErrorKind::io, msg);
  }
  return written;
}

}  // namespace drivesal
