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

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "drivesal/common/files.hpp"
#include "drivesal/diffcore/losses.hpp"
#include "drivesal/diffcore/sgd.hpp"

namespace drivesal {

struct TrainConfig {
  SgdConfig sgd;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  double lambda1 = 0.1;  // sparsity weight, attention step only
  double lambda2 = 1.0;  // action weight, attention step only
  SparsityVariant sparsity = SparsityVariant::squared;
  double holdout_fraction = 0.2;  // driving sets only; saliency sets carry their own split

  // epochs == 0 is allowed and returns the initialization untouched.
  void validate() const {
    sgd.validate();
    require(lambda1 >= 0.0 && lambda2 >= 0.0, ErrorKind::config,
            "lambda1 and lambda2 must be nonnegative, got ", lambda1, ", ", lambda2);
    require(lambda1 > 0.0 || lambda2 > 0.0, ErrorKind::config,
            "lambda1 and lambda2 must not both be zero");
    require(holdout_fraction >= 0.0 && holdout_fraction < 1.0, ErrorKind::config,
            "holdout fraction must lie in [0, 1), got ", holdout_fraction);
  }

  std::string digest() const {
    Json j;
    to_json(j, *this);
    Fnv1a h;
    const std::string s = j.dump();
    h.update(s.data(), s.size());
    return h.hex();
  }

  friend void to_json(Json& j, const TrainConfig& c) {
    j = {{"learning_rate", c.sgd.learning_rate},
         {"momentum", c.sgd.momentum},
         {"decay", c.sgd.decay},
         {"batch_size", c.sgd.batch_size},
         {"epochs", c.epochs},
         {"seed", c.seed},
         {"lambda1", c.lambda1},
         {"lambda2", c.lambda2},
         {"sparsity", std::string(to_string(c.sparsity))},
         {"holdout_fraction", c.holdout_fraction}};
  }
};

struct TrainReport {
  std::string procedure;
  TrainConfig config;
  std::size_t batch_size_used = 0;
  std::size_t train_samples = 0;
  std::size_t heldout_samples = 0;
  double initial_heldout_loss = 0.0;  // before the first update
  std::vector<double> train_loss;     // mean over the epoch's minibatches
  std::vector<double> heldout_loss;   // evaluated after the epoch
  std::map<std::string, std::vector<double>> series;  // extra per-epoch columns
  std::vector<std::string> notes;
  std::string checkpoint;
  std::optional<std::string> aborted;  // set when training stopped on divergence
  double wall_seconds = 0.0;           // stderr only, never written to disk

  std::size_t epochs_run() const { return train_loss.size(); }
};

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string loss_curve_csv(const TrainReport& r) {
  std::ostringstream out;
  out << "epoch,train_loss,heldout_loss";
  for (const auto& [name, values] : r.series) out << ',' << name;
  out << '\n';
  for (std::size_t e = 0; e < r.train_loss.size(); ++e) {
    out << e + 1 << ',' << format_number(r.train_loss[e]) << ','
        << format_number(r.heldout_loss[e]);
    for (const auto& [name, values] : r.series) out << ',' << format_number(values[e]);
    out << '\n';
  }
  return out.str();
}

inline std::string report_text(const TrainReport& r) {
  std::ostringstream out;
  Json cfg;
  to_json(cfg, r.config);
  out << "procedure: " << r.procedure << '\n'
      << "status: " << (r.aborted ? "aborted: " + *r.aborted : std::string("completed")) << '\n'
      << "epochs run: " << r.epochs_run() << " of " << r.config.epochs << '\n'
      << "train samples: " << r.train_samples << '\n'
      << "held-out samples: " << r.heldout_samples << '\n'
      << "batch size used: " << r.batch_size_used << '\n'
      << "initial held-out loss: " << format_number(r.initial_heldout_loss) << '\n';
  if (!r.train_loss.empty())
    out << "final train loss: " << format_number(r.train_loss.back()) << '\n'
        << "final held-out loss: " << format_number(r.heldout_loss.back()) << '\n';
  for (const auto& [name, values] : r.series)
    if (!values.empty()) out << "final " << name << ": " << format_number(values.back()) << '\n';
  if (!r.checkpoint.empty()) out << "checkpoint: " << r.checkpoint << '\n';
  for (const auto& n : r.notes) out << "note: " << n << '\n';
  out << "config: " << cfg.dump() << '\n';
  return out.str();
}

/// Writes <prefix>loss_curve.csv and <prefix>report.txt into `dir`.
inline void write_train_report(const fs::path& dir, const TrainReport& r,
                               const std::string& prefix = "") {
  ensure_directory(dir);
  write_text_atomic(dir / (prefix + "loss_curve.csv"), loss_curve_csv(r));
  write_text_atomic(dir / (prefix + "report.txt"), report_text(r));
}

}  // namespace drivesal
