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

// The four training procedures: supervised RoadSal, driver cloning (Net2
// and the three agents), and the unsupervised attention step that trains
// Net1 through a frozen Net2.

#pragma once

#include <array>
#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "drivesal/gazeprep/dataset.hpp"
#include "drivesal/nets/checkpoint.hpp"
#include "drivesal/trainer/driving_data.hpp"
#include "drivesal/trainer/train_config.hpp"

namespace drivesal {

using TrainLog = std::function<void(const std::string&)>;

struct TrainOptions {
  TrainLog log;
  /// Checked after every epoch; returning true ends training early.
  std::function<bool(const TrainReport&)> stop_when;
};

namespace detail {

inline constexpr std::uint64_t kOrderStream = 0x5851f42d4c957f2dULL;

/// Shared minibatch loop. `sample(id, acc)` adds one sample's gradient and
/// returns its loss; `heldout(id)` returns a forward-only loss. Divergence
/// stops the loop and marks the report aborted; curves keep the completed
/// epochs only.
template <typename SampleFn, typename HeldoutFn>
void run_epochs(TrainReport& r, ParamSet<float>& params, const std::vector<std::size_t>& train,
                const std::vector<std::size_t>& heldout, const TrainConfig& cfg, SampleFn&& sample,
                HeldoutFn&& heldout_loss, const TrainOptions& opt,
                const std::function<void(TrainReport&)>& epoch_end = {}) {
  const TrainLog& log = opt.log;
  cfg.validate();
  require(!train.empty(), ErrorKind::domain, r.procedure, ": training set is empty");
  require(!heldout.empty(), ErrorKind::domain, r.procedure, ": held-out set is empty");
  const auto started = std::chrono::steady_clock::now();
  r.config = cfg;
  r.train_samples = train.size();
  r.heldout_samples = heldout.size();
  r.batch_size_used = std::min(cfg.sgd.batch_size, train.size());
  if (r.batch_size_used < cfg.sgd.batch_size) {
    r.notes.push_back(detail::concat("batch size ", cfg.sgd.batch_size, " clamped to ",
                                     r.batch_size_used, " (train set size)"));
    if (log) log(r.procedure + ": " + r.notes.back());
  }
  SgdConfig sgd = cfg.sgd;
  sgd.batch_size = r.batch_size_used;

  auto mean_heldout = [&] {
    double s = 0.0;
    for (auto id : heldout) s += heldout_loss(id);
    return s / double(heldout.size());
  };
  r.initial_heldout_loss = mean_heldout();

  Rng order_rng(cfg.seed ^ kOrderStream);
  std::vector<std::size_t> order = train;
  for (std::size_t epoch = 0; epoch < cfg.epochs && !r.aborted; ++epoch) {
    order_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size() && !r.aborted; start += sgd.batch_size) {
      const std::size_t end = std::min(order.size(), start + sgd.batch_size);
      GradAccumulator<float> acc(params);
      double batch = 0.0;
      for (std::size_t k = start; k < end; ++k) batch += sample(order[k], acc);
      if (!std::isfinite(batch)) {
        r.aborted = detail::concat("non-finite training loss in epoch ", epoch + 1);
        break;
      }
      total += batch;
      auto& grads = acc.finalize(1.0f / float(end - start));
      try {
        sgd_step(params, std::span<const Tensor<float>>(grads), sgd);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::numeric) throw;
        r.aborted = e.what();
      }
    }
    if (r.aborted) break;
    const double held = mean_heldout();
    if (!std::isfinite(held)) {
      r.aborted = detail::concat("non-finite held-out loss in epoch ", epoch + 1);
      break;
    }
    r.train_loss.push_back(total / double(order.size()));
    r.heldout_loss.push_back(held);
    if (epoch_end) epoch_end(r);
    if (log)
      log(detail::concat(r.procedure, ": epoch ", epoch + 1, "/", cfg.epochs,
                         " train=", format_number(r.train_loss.back()),
                         " heldout=", format_number(held)));
    if (opt.stop_when && opt.stop_when(r)) {
      r.notes.push_back(detail::concat("stopped after epoch ", epoch + 1, " by caller"));
      break;
    }
  }
  r.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (log) {
    log(detail::concat(r.procedure, ": wall time ", format_number(r.wall_seconds), " s"));
    if (r.aborted) log(r.procedure + ": aborted: " + *r.aborted);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Per-sample losses. Templated so the double instantiation can be checked
// against finite differences.

template <typename T>
double roadsal_sample(const Network<T>& net, const Tensor<T>& image, const Tensor<T>& target,
                      GradAccumulator<T>* acc) {
  if (!acc) return double(cosine_loss(net.forward(image), target).value);
  const auto trace = net.forward_trace(image);
  auto loss = cosine_loss(trace.output(), target);
  net.backward(trace, loss.grad.reshaped(trace.output().shape()), acc, false);
  return double(loss.value);
}

template <typename T>
double driver_sample(const Network<T>& net, const Tensor<T>& input, const Tensor<T>& truth,
                     GradAccumulator<T>* acc) {
  if (!acc) return double(action_mse(net.forward(input), truth).value);
  const auto trace = net.forward_trace(input);
  auto loss = action_mse(trace.output(), truth);
  net.backward(trace, loss.grad, acc, false);
  return double(loss.value);
}

struct AttentionTerms {
  double loss1 = 0.0;  // sparsity
  double loss2 = 0.0;  // action MSE through the frozen driver
  double total = 0.0;
  double mean_attention = 0.0;
};

/// image -> Net1 -> map -> image*map -> Net2 (frozen) -> action. Only Net1
/// receives gradients.
template <typename T>
AttentionTerms attention_sample(const Network<T>& net1, const Network<T>& net2,
                                const Tensor<T>& image, const Tensor<T>& truth,
                                const TrainConfig& cfg, GradAccumulator<T>* net1_acc) {
  const auto t1 = net1.forward_trace(image);
  const Tensor<T>& map = t1.output();
  const auto masked = incorporate_saliency(image, map);
  const auto t2 = net2.forward_trace(masked);
  auto l1 = attention_sparsity(map, cfg.sparsity);
  auto l2 = action_mse(t2.output(), truth);
  AttentionTerms terms;
  terms.loss1 = double(l1.value);
  terms.loss2 = double(l2.value);
  terms.total = total_loss(terms.loss1, terms.loss2, cfg.lambda1, cfg.lambda2);
  for (T v : map.values()) terms.mean_attention += double(v);
  terms.mean_attention /= double(map.size());
  if (!net1_acc) return terms;

  for (auto& g : l2.grad.storage()) g *= T(cfg.lambda2);
  const auto d_masked = net2.backward(t2, l2.grad, nullptr, true);
  auto d_map = elementwise_mul_backward(image, map, d_masked).b;
  for (std::size_t i = 0; i < d_map.size(); ++i) d_map[i] += T(cfg.lambda1) * l1.grad[i];
  net1.backward(t1, d_map, net1_acc, false);
  return terms;
}

// ---------------------------------------------------------------------------

struct TrainedModel {
  Model<float> model;
  TrainReport report;
};

/// Supervised saliency training with the cosine loss.
inline TrainedModel train_roadsal(const SaliencyDataset& ds, const RoadSalSpec& spec,
                                  const TrainConfig& cfg, const TrainOptions& opt = {}) {
  spec.validate();
  require(spec.input == ds.config.input_resolution, ErrorKind::config, "RoadSal input ",
          spec.input, " does not match dataset frames of ", ds.config.input_resolution, " px");
  require(spec.output() == ds.config.target_resolution, ErrorKind::config, "RoadSal output ",
          spec.output(), " does not match dataset targets of ", ds.config.target_resolution, " px");
  TrainedModel out{make_model<float>(spec, cfg.seed), {}};
  out.report.procedure = "train-roadsal";
  const std::size_t n = spec.output();
  auto sample = [&](std::size_t id, GradAccumulator<float>* acc) {
    const auto& s = ds.samples[id];
    return roadsal_sample(out.model.net, to_tensor<float>(s.frame),
                          target_tensor<float>(s, n).reshaped({n, n}), acc);
  };
  detail::run_epochs(
      out.report, out.model.net.params(), ds.train, ds.test, cfg,
      [&](std::size_t id, GradAccumulator<float>& acc) { return sample(id, &acc); },
      [&](std::size_t id) { return sample(id, nullptr); }, opt);
  return out;
}

namespace detail {

inline TrainedModel train_agent_on(const DrivingSet& set,
                                   const std::vector<std::optional<Tensor<float>>>& maps,
                                   const AgentSpec& spec, const TrainConfig& cfg,
                                   const std::string& procedure, const TrainOptions& opt) {
  spec.validate();
  require(spec.input == set.input, ErrorKind::config, "agent input ", spec.input,
          " does not match driving frames of ", set.input, " px");
  TrainedModel out{make_model<float>(spec, cfg.seed), {}};
  out.report.procedure = procedure;
  auto sample = [&](std::size_t id, GradAccumulator<float>* acc) {
    return driver_sample(out.model.net, InputPipeline::apply(set.frames[id], maps[id]),
                         action_tensor(set.actions[id]), acc);
  };
  run_epochs(
      out.report, out.model.net.params(), set.train, set.heldout, cfg,
      [&](std::size_t id, GradAccumulator<float>& acc) { return sample(id, &acc); },
      [&](std::size_t id) { return sample(id, nullptr); }, opt);
  return out;
}

}  // namespace detail

/// Behavioral cloning on raw frames (Net2, and Model1).
inline TrainedModel train_driver(const DrivingSet& set, const AgentSpec& spec,
                                 const TrainConfig& cfg, const TrainOptions& opt = {}) {
  const std::vector<std::optional<Tensor<float>>> none(set.size());
  return detail::train_agent_on(set, none, spec, cfg, "train-driver", opt);
}

/// Mean action MSE of an agent over `ids`, frames passed through `maps`.
inline double driver_loss(const Model<float>& agent, const DrivingSet& set,
                          const std::vector<std::size_t>& ids,
                          const std::vector<std::optional<Tensor<float>>>& maps) {
  double s = 0.0;
  for (auto id : ids)
    s += driver_sample<float>(agent.net, InputPipeline::apply(set.frames[id], maps[id]),
                              action_tensor(set.actions[id]), nullptr);
  return s / double(ids.size());
}

/// Trains Net1 against a frozen Net2 with lambda1 * sparsity + lambda2 * MSE.
/// Adds per-epoch series loss1, loss2 and mean_attention (train means).
inline TrainedModel train_attention_unsupervised(const Model<float>& net2, const DrivingSet& set,
                                                 Net1Spec spec, const TrainConfig& cfg,
                                                 const TrainOptions& opt = {}) {
  require_kind(net2, "agent");
  spec.validate();
  require(spec.input == set.input, ErrorKind::config, "Net1 input ", spec.input,
          " does not match driving frames of ", set.input, " px");
  require(net2.net.input_shape()[0] == set.input, ErrorKind::config, "Net2 expects ",
          net2.net.input_shape()[0], " px frames, driving set has ", set.input);
  TrainedModel out{make_model<float>(spec, cfg.seed), {}};
  out.report.procedure = "train-attn";
  double s1 = 0.0, s2 = 0.0, sa = 0.0;
  std::size_t count = 0;
  bool first_batch_checked = false;
  auto& series = out.report.series;
  detail::run_epochs(
      out.report, out.model.net.params(), set.train, set.heldout, cfg,
      [&](std::size_t id, GradAccumulator<float>& acc) {
        const auto t = attention_sample(out.model.net, net2.net, to_tensor<float>(set.frames[id]),
                                        action_tensor(set.actions[id]), cfg, &acc);
        s1 += t.loss1;
        s2 += t.loss2;
        sa += t.mean_attention;
        ++count;
        if (!first_batch_checked) {
          first_batch_checked = true;
          bool any = false;
          for (const auto& g : acc.grads())
            for (float v : g.values()) any = any || v != 0.0f;
          if (!any) out.report.notes.push_back("first sample produced an all-zero Net1 gradient");
        }
        return t.total;
      },
      [&](std::size_t id) {
        return attention_sample<float>(out.model.net, net2.net, to_tensor<float>(set.frames[id]),
                                       action_tensor(set.actions[id]), cfg, nullptr)
            .total;
      },
      opt,
      [&](TrainReport&) {
        series["loss1"].push_back(s1 / double(count));
        series["loss2"].push_back(s2 / double(count));
        series["mean_attention"].push_back(sa / double(count));
        s1 = s2 = sa = 0.0;
        count = 0;
      });
  return out;
}

struct TrainedAgents {
  std::array<TrainedModel, 3> models;  // Model1 raw, Model2 RoadSal, Model3 Net1
};

inline constexpr std::array<const char*, 3> kAgentNames{"model1", "model2", "model3"};
inline constexpr std::array<PipelineKind, 3> kAgentPipelines{
    PipelineKind::raw, PipelineKind::roadsal, PipelineKind::net1};

/// Model1/2/3 with identical architecture and seeds; attention maps are
/// computed once per frame before training.
inline TrainedAgents train_agents(const Model<float>& roadsal, const Model<float>& net1,
                                  const DrivingSet& set, const AgentSpec& spec,
                                  const TrainConfig& cfg, const TrainOptions& opt = {}) {
  const std::array<InputPipeline, 3> pipes{InputPipeline::raw(), InputPipeline::roadsal(roadsal),
                                           InputPipeline::net1(net1)};
  cfg.validate();
  spec.validate();
  // Shape problems surface here rather than after Model1 has trained.
  require(spec.input == set.input, ErrorKind::config, "agent input ", spec.input,
          " does not match driving frames of ", set.input, " px");
  require(net1.net.input_shape()[0] == set.input, ErrorKind::config, "Net1 expects ",
          net1.net.input_shape()[0], " px frames, driving set has ", set.input);
  require(std::get<RoadSalSpec>(roadsal.spec).output() <= set.input, ErrorKind::config,
          "RoadSal maps are larger than the agent input");
  TrainedAgents out{};
  for (std::size_t m = 0; m < 3; ++m) {
    const auto maps = precompute_maps(pipes[m], set);
    out.models[m] = detail::train_agent_on(set, maps, spec, cfg,
                                           std::string("train-agents/") + kAgentNames[m], opt);
  }
  return out;
}

}  // namespace drivesal
