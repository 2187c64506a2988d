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

#include <array>
#include <string>
#include <variant>
#include <vector>


#include "drivesal/common/action.hpp"
#include "drivesal/common/files.hpp"
#include "drivesal/diffcore/losses.hpp"
#include "drivesal/image/image.hpp"
#include "drivesal/nets/network.hpp"

namespace drivesal {

/// Supervised saliency network: three conv/relu/pool blocks, flatten,
/// pairwise max, one wide linear dense layer, reshape to a square map.
struct RoadSalSpec {
  std::size_t input = 96;
  std::array<std::size_t, 3> channels{16, 24, 32};
  std::array<std::size_t, 3> kernels{5, 3, 3};

  std::size_t output() const { return input / 2; }

  void validate() const {
    require(input >= 8 && input % 8 == 0, ErrorKind::config, "RoadSal input ", input,
            " must be a positive multiple of 8");
    // (input/8)^2 * c3 must equal 2 * (input/2)^2 for the pairwise max to
    // land exactly on the output map, which pins c3 to 32.
    require(channels[2] == 32, ErrorKind::config,
            "RoadSal third block must have 32 channels, got ", channels[2]);
    for (std::size_t i = 0; i < 3; ++i) {
      require(channels[i] >= 1, ErrorKind::config, "RoadSal channel widths must be positive");
      require(kernels[i] % 2 == 1, ErrorKind::config, "RoadSal kernel sizes must be odd, got ",
              kernels[i]);
    }
  }
};

/// Fully convolutional attention network with a sigmoid head.
struct Net1Spec {
  std::size_t input = 96;
  std::vector<std::size_t> widths{16, 16, 16, 1};
  std::size_t kernel = 3;
  Padding padding = Padding::same;

  void validate() const {
    require(input >= 1, ErrorKind::config, "Net1 input must be positive");
    require(!widths.empty() && widths.back() == 1, ErrorKind::config,
            "Net1 must end in a single-channel layer");
    for (auto w : widths) require(w >= 1, ErrorKind::config, "Net1 widths must be positive");
    require(kernel % 2 == 1, ErrorKind::config, "Net1 kernel must be odd, got ", kernel);
    require(padding != Padding::valid, ErrorKind::config,
            "Net1 must keep spatial size (same or periodic padding)");
  }
};

/// Driving agent shared by Net2 and Model1/2/3.
struct AgentSpec {
  std::size_t input = 96;
  std::array<std::size_t, 3> channels{8, 16, 32};
  std::array<std::size_t, 3> kernels{5, 3, 3};
  std::size_t hidden = 64;

  void validate() const {
    require(input >= 8 && input % 8 == 0, ErrorKind::config, "agent input ", input,
            " must be a positive multiple of 8");
    for (std::size_t i = 0; i < 3; ++i) {
      require(channels[i] >= 1, ErrorKind::config, "agent channel widths must be positive");
      require(kernels[i] % 2 == 1, ErrorKind::config, "agent kernel sizes must be odd");
    }
    require(hidden >= 1, ErrorKind::config, "agent hidden width must be positive");
  }
};

using ModelSpec = std::variant<RoadSalSpec, Net1Spec, AgentSpec>;

inline std::string model_kind(const ModelSpec& s) {
  switch (s.index()) {
    case 0: return "roadsal";
    case 1: return "net1";
    default: return "agent";
  }
}

inline std::string to_string(Padding p) {
  switch (p) {
    case Padding::valid: return "valid";
    case Padding::same: return "same";
    case Padding::periodic: return "periodic";
  }
  return "?";
}

inline Padding parse_padding(const std::string& s) {
  if (s == "valid") return Padding::valid;
  if (s == "same") return Padding::same;
  if (s == "periodic") return Padding::periodic;
  fail(ErrorKind::config, "unknown padding '", s, "'");
}

inline Json spec_to_json(const ModelSpec& spec) {
  return std::visit(
      [](const auto& s) -> Json {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, RoadSalSpec>) {
          return {{"input", s.input}, {"channels", s.channels}, {"kernels", s.kernels}};
        } else if constexpr (std::is_same_v<S, Net1Spec>) {
          return {{"input", s.input},
                  {"widths", s.widths},
                  {"kernel", s.kernel},
                  {"padding", to_string(s.padding)}};
        } else {
          return {{"input", s.input},
                  {"channels", s.channels},
                  {"kernels", s.kernels},
                  {"hidden", s.hidden}};
        }
      },
      spec);
}

inline ModelSpec spec_from_json(const std::string& kind, const Json& j) {
  try {
    if (kind == "roadsal") {
      RoadSalSpec s;
      s.input = j.at("input").get<std::size_t>();
      s.channels = j.at("channels").get<std::array<std::size_t, 3>>();
      s.kernels = j.at("kernels").get<std::array<std::size_t, 3>>();
      return s;
    }
    if (kind == "net1") {
      Net1Spec s;
      s.input = j.at("input").get<std::size_t>();
      s.widths = j.at("widths").get<std::vector<std::size_t>>();
      s.kernel = j.at("kernel").get<std::size_t>();
      s.padding = parse_padding(j.at("padding").get<std::string>());
      return s;
    }
    if (kind == "agent") {
      AgentSpec s;
      s.input = j.at("input").get<std::size_t>();
      s.channels = j.at("channels").get<std::array<std::size_t, 3>>();
      s.kernels = j.at("kernels").get<std::array<std::size_t, 3>>();
      s.hidden = j.at("hidden").get<std::size_t>();
      return s;
    }
  } catch (const Json::exception& e) {
    fail(ErrorKind::corrupt, "bad ", kind, " spec: ", e.what());
  }
  fail(ErrorKind::corrupt, "unknown model kind '", kind, "'");
}

namespace detail {

inline constexpr double kHeGain = 6.0;     // layer followed by relu
inline constexpr double kLeCunGain = 3.0;  // linear or sigmoid head
// The action head starts close to zero. With a LeCun-scaled head the first
// predictions are O(1) against targets of O(0.1), and the early updates
// tend to kill ReLUs in the trunk.
inline constexpr double kActionHeadGain = 0.03;

template <typename T>
Network<T> build(const RoadSalSpec& s, Rng* rng) {
  s.validate();
  NetworkBuilder<T> b({s.input, s.input, 3}, rng);
  for (std::size_t i = 0; i < 3; ++i)
    b.conv("conv" + std::to_string(i + 1), s.kernels[i], s.channels[i], Padding::same, kHeGain)
        .activation(Activation::relu)
        .maxpool();
  const std::size_t n = s.output() * s.output();
  b.reshape({shape_product(b.shape())}).pairwise_max().dense("dense", n, kLeCunGain).reshape(
      {s.output(), s.output()});
  return std::move(b).build();
}

template <typename T>
Network<T> build(const Net1Spec& s, Rng* rng) {
  s.validate();
  NetworkBuilder<T> b({s.input, s.input, 3}, rng);
  for (std::size_t i = 0; i < s.widths.size(); ++i) {
    const bool last = i + 1 == s.widths.size();
    b.conv("conv" + std::to_string(i + 1), s.kernel, s.widths[i], s.padding,
           last ? kLeCunGain : kHeGain)
        .activation(last ? Activation::sigmoid : Activation::relu);
  }
  return std::move(b).build();
}

template <typename T>
Network<T> build(const AgentSpec& s, Rng* rng) {
  s.validate();
  NetworkBuilder<T> b({s.input, s.input, 3}, rng);
  for (std::size_t i = 0; i < 3; ++i)
    b.conv("conv" + std::to_string(i + 1), s.kernels[i], s.channels[i], Padding::same, kHeGain)
        .activation(Activation::relu)
        .maxpool();
  b.dense("fc1", s.hidden, kHeGain).activation(Activation::relu).dense("fc2", 3, kActionHeadGain);
  return std::move(b).build();
}

}  // namespace detail

/// A network paired with the architecture description that built it.
template <typename T = float>
struct Model {
  ModelSpec spec;
  Network<T> net;

  std::string kind() const { return model_kind(spec); }
};

/// Fresh model; parameters drawn from `seed` (weights uniform, biases zero).
template <typename T = float>
Model<T> make_model(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  return {spec, std::visit([&](const auto& s) { return detail::build<T>(s, &rng); }, spec)};
}

/// Same architecture with every parameter zero.
template <typename T = float>
Model<T> make_zero_model(const ModelSpec& spec) {
  return {spec, std::visit([](const auto& s) { return detail::build<T>(s, nullptr); }, spec)};
}

template <typename T>
void require_kind(const Model<T>& m, const std::string& kind) {
  require(m.kind() == kind, ErrorKind::config, "expected a ", kind, " model, got ", m.kind());
}

/// Raw RoadSal output, [n, n] unbounded.
template <typename T>
Tensor<T> roadsal_forward(const Model<T>& m, const Tensor<T>& image) {
  require_kind(m, "roadsal");
  return m.net.forward(image);
}

/// Net1 attention map, [H, W, 1] in (0, 1).
template <typename T>
Tensor<T> net1_forward(const Model<T>& m, const Tensor<T>& image) {
  require_kind(m, "net1");
  return m.net.forward(image);
}

/// Unclamped (steering, throttle, brake).
template <typename T>
DrivingAction agent_forward(const Model<T>& m, const Tensor<T>& image) {
  require_kind(m, "agent");
  const auto out = m.net.forward(image);
  return {double(out[0]), double(out[1]), double(out[2])};
}

/// Negatives clamped to 0, then divided by max(max, 1e-6).
template <typename T>
Tensor<T> normalize_map(const Tensor<T>& raw) {
  Tensor<T> out = raw;
  T peak = T(0);
  for (auto& v : out.storage()) {
    v = std::max(v, T(0));
    peak = std::max(peak, v);
  }
  const T denom = std::max(peak, T(1e-6));
  for (auto& v : out.storage()) v /= denom;
  return out;
}

/// Bilinear resize of an [h, w] or [h, w, 1] map to [n, n, 1].
template <typename T>
Tensor<T> upsample_map(const Tensor<T>& map, std::size_t n) {
  require(map.rank() == 2 || (map.rank() == 3 && map.dim(2) == 1), ErrorKind::shape,
          "upsample_map needs a single-channel map, got ", shape_string(map.shape()));
  require(n >= map.dim(0) && n >= map.dim(1), ErrorKind::domain, "cannot upsample ",
          shape_string(map.shape()), " down to ", n, "x", n);
  const Tensor<T> flat = map.reshaped({map.dim(0), map.dim(1)});
  return resize_bilinear(flat, n, n).reshaped({n, n, 1});
}

/// Channel-wise product of an HxWx3 image with an HxW (or HxWx1) map.
template <typename T>
Tensor<T> incorporate_saliency(const Tensor<T>& image, const Tensor<T>& map) {
  return elementwise_mul(image, map);
}

/// RoadSal map ready for incorporation: normalize, then upsample.
template <typename T>
Tensor<T> roadsal_attention(const Model<T>& roadsal, const Tensor<T>& image) {
  return upsample_map(normalize_map(roadsal_forward(roadsal, image)), image.dim(0));
}

}  // namespace drivesal
