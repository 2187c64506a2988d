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

// Flat key = value run configuration. Every tunable has one key; the CLI
// exposes each key as --<key>. Paths are command arguments, not keys, so
// the echoed config of two runs that differ only in output location is
// byte-identical.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "drivesal/common/files.hpp"

namespace drivesal {

enum class KeyType { uint, real, boolean, text, uint_list };

struct KeyInfo {
  std::string key;
  KeyType type;
  std::string default_value;
  std::string help;
  std::vector<std::string> choices;  // text keys only; empty means free-form
};

inline const std::vector<KeyInfo>& config_keys() {
  using K = KeyType;
  static const std::vector<KeyInfo> keys = {
      {"seed", K::uint, "1", "seed for every random choice of the command", {}},

      {"sim.frames", K::uint, "100", "frames per simulated session", {}},
      {"sim.track", K::text, "default", "track layout", {"default", "straight"}},
      {"sim.resolution", K::uint, "227", "camera frame side in pixels", {}},
      {"sim.frame_rate_hz", K::real, "10", "frame rate", {}},
      {"sim.gaze_rate_hz", K::real, "50", "synthetic gaze sample rate", {}},
      {"sim.synth_gaze", K::boolean, "true", "record a synthetic gaze stream", {}},
      {"sim.gaze_noise_px", K::real, "4", "gaze noise standard deviation in pixels", {}},
      {"sim.saccade_probability", K::real, "0.1", "chance a gaze sample jumps to an obstacle", {}},

      {"prep.sigma", K::real, "20", "saliency sigma in px at width 227 (scaled with width)", {}},
      {"prep.crop_margin_sigmas", K::real, "4", "corner crop side is W - margin * sigma", {}},
      {"prep.augment", K::boolean, "true", "add corner crops for central-gaze frames", {}},
      {"prep.input_resolution", K::uint, "96", "dataset frame side", {}},
      {"prep.target_resolution", K::uint, "48", "dataset target map side", {}},
      {"prep.train_fraction", K::real, "0.8", "train share of the saliency dataset", {}},

      {"roadsal.channels", K::uint_list, "16,24,32", "RoadSal conv widths (last must be 32)", {}},
      {"roadsal.kernels", K::uint_list, "5,3,3", "RoadSal conv kernel sizes", {}},
      {"roadsal.lr", K::real, "0.001", "RoadSal learning rate", {}},
      {"roadsal.momentum", K::real, "0.9", "RoadSal momentum", {}},
      {"roadsal.decay", K::real, "0.005", "RoadSal L2 decay", {}},
      {"roadsal.batch", K::uint, "300", "RoadSal minibatch size", {}},
      {"roadsal.epochs", K::uint, "10", "RoadSal epochs", {}},

      {"agent.input", K::uint, "96", "driving frame side for Net2, Net1 and Model1/2/3", {}},
      {"agent.channels", K::uint_list, "8,16,32", "agent conv widths", {}},
      {"agent.kernels", K::uint_list, "5,3,3", "agent conv kernel sizes", {}},
      {"agent.hidden", K::uint, "64", "agent hidden dense width", {}},

      {"driver.lr", K::real, "0.01", "Net2 learning rate", {}},
      {"driver.momentum", K::real, "0.9", "Net2 momentum", {}},
      {"driver.decay", K::real, "0.005", "Net2 L2 decay", {}},
      {"driver.batch", K::uint, "32", "Net2 minibatch size", {}},
      {"driver.epochs", K::uint, "10", "Net2 epochs", {}},

      {"net1.widths", K::uint_list, "16,16,16,1", "Net1 conv widths (last must be 1)", {}},
      {"net1.kernel", K::uint, "3", "Net1 kernel size", {}},
      {"net1.padding", K::text, "same", "Net1 padding", {"same", "periodic"}},

      {"attn.lr", K::real, "0.05", "Net1 learning rate", {}},
      {"attn.momentum", K::real, "0.9", "Net1 momentum", {}},
      {"attn.decay", K::real, "0", "Net1 L2 decay", {}},
      {"attn.batch", K::uint, "16", "Net1 minibatch size", {}},
      {"attn.epochs", K::uint, "10", "Net1 epochs", {}},
      {"attn.lambda1", K::real, "0.1", "weight of the attention sparsity term", {}},
      {"attn.lambda2", K::real, "1", "weight of the action term", {}},
      {"attn.sparsity", K::text, "squared", "sparsity form", {"squared", "linear"}},

      {"agents.lr", K::real, "0.01", "Model1/2/3 learning rate", {}},
      {"agents.momentum", K::real, "0.9", "Model1/2/3 momentum", {}},
      {"agents.decay", K::real, "0.005", "Model1/2/3 L2 decay", {}},
      {"agents.batch", K::uint, "32", "Model1/2/3 minibatch size", {}},
      {"agents.epochs", K::uint, "10", "Model1/2/3 epochs", {}},

      {"train.holdout_fraction", K::real, "0.2", "held-out share of driving frames", {}},

      {"export.count", K::uint, "16", "frames to export (0 = all)", {}},

      {"gradcheck.instances", K::uint, "10", "random instances per operator", {}},
      {"gradcheck.step", K::real, "1e-05", "central difference step", {}},
      {"gradcheck.tolerance", K::real, "0.0001", "max relative error", {}},

      {"serve.host", K::text, "127.0.0.1", "listen address", {}},
      {"serve.port", K::uint, "8080", "listen port", {}},
  };
  return keys;
}

inline std::string type_name(KeyType t) {
  switch (t) {
    case KeyType::uint: return "UINT";
    case KeyType::real: return "REAL";
    case KeyType::boolean: return "BOOL";
    case KeyType::text: return "TEXT";
    case KeyType::uint_list: return "UINT,...";
  }
  return "TEXT";
}

inline const KeyInfo* find_key(const std::string& key) {
  for (const auto& k : config_keys())
    if (k.key == key) return &k;
  return nullptr;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_u64(const std::string& s, std::uint64_t& out) {
  if (s.empty()) return false;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

/// Shortest text that reads back to the same double.
inline std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// Parses `raw` as `info.type`; returns the canonical spelling.
inline std::string canonical_value(const KeyInfo& info, const std::string& raw) {
  const std::string v = trim(raw);
  auto bad = [&](const char* what) -> std::string {
    fail(ErrorKind::config, "key '", info.key, "' expects ", what, ", got '", v, "'");
  };
  switch (info.type) {
    case KeyType::uint: {
      std::uint64_t u = 0;
      if (!parse_u64(v, u)) return bad("a nonnegative integer");
      return std::to_string(u);
    }
    case KeyType::real: {
      double d = 0.0;
      const auto r = std::from_chars(v.data(), v.data() + v.size(), d);
      if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(d))
        return bad("a finite number");
      return shortest(d);
    }
    case KeyType::boolean:
      if (v == "true" || v == "1" || v == "yes" || v == "on") return "true";
      if (v == "false" || v == "0" || v == "no" || v == "off") return "false";
      return bad("true or false");
    case KeyType::text:
      if (v.empty()) return bad("a value");
      if (!info.choices.empty() &&
          std::find(info.choices.begin(), info.choices.end(), v) == info.choices.end()) {
        std::string all;
        for (const auto& c : info.choices) all += (all.empty() ? "" : "|") + c;
        fail(ErrorKind::config, "key '", info.key, "' must be one of ", all, ", got '", v, "'");
      }
      return v;
    case KeyType::uint_list: {
      std::string out, item;
      std::stringstream in(v);
      while (std::getline(in, item, ',')) {
        std::uint64_t u = 0;
        if (!parse_u64(trim(item), u)) return bad("a comma-separated list of integers");
        out += (out.empty() ? "" : ",") + std::to_string(u);
      }
      if (out.empty()) return bad("a comma-separated list of integers");
      return out;
    }
  }
  return v;
}

}  // namespace detail

/// Effective configuration: defaults, then a config file, then flags.
class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_keys()) values_[k.key] = detail::canonical_value(k, k.default_value);
  }

  void set(const std::string& key, const std::string& value) {
    const KeyInfo* info = find_key(key);
    require(info != nullptr, ErrorKind::config, "unknown config key '", key, "'");
    values_[key] = detail::canonical_value(*info, value);
  }

  /// `key = value` lines; blank lines and lines starting with # are skipped.
  /// Unknown and repeated keys are errors.
  void load_text(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    std::map<std::string, std::size_t> seen;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
      const std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto eq = t.find('=');
      require(eq != std::string::npos, ErrorKind::config, source, ":", n,
              ": expected 'key = value', got '", t, "'");
      const std::string key = detail::trim(t.substr(0, eq));
      require(find_key(key) != nullptr, ErrorKind::config, source, ":", n,
              ": unknown config key '", key, "'");
      if (const auto prev = seen.find(key); prev != seen.end())
        fail(ErrorKind::config, source, ":", n, ": key '", key, "' already set on line ",
             prev->second);
      seen[key] = n;
      try {
        set(key, t.substr(eq + 1));
      } catch (const Error& e) {
        fail(ErrorKind::config, source, ":", n, ": ", e.what());
      }
    }
  }

  void load_file(const fs::path& path) { load_text(read_text(path), path.string()); }

  const std::string& text(const std::string& key) const {
    const auto it = values_.find(key);
    require(it != values_.end(), ErrorKind::config, "unknown config key '", key, "'");
    return it->second;
  }

  std::uint64_t u64(const std::string& key) const {
    std::uint64_t v = 0;
    detail::parse_u64(text(key), v);
    return v;
  }
  std::size_t size(const std::string& key) const { return std::size_t(u64(key)); }
  double real(const std::string& key) const { return std::stod(text(key)); }
  bool flag(const std::string& key) const { return text(key) == "true"; }

  std::vector<std::size_t> list(const std::string& key) const {
    std::vector<std::size_t> out;
    std::stringstream in(text(key));
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(std::stoull(item));
    return out;
  }

  /// Every key in table order. Reloading the echo reproduces the config.
  std::string echo(const std::string& command) const {
    std::ostringstream out;
    out << "# drivesal effective config, command: " << command << '\n';
    for (const auto& k : config_keys()) out << k.key << " = " << values_.at(k.key) << '\n';
    return out.str();
  }

  void write_echo(const fs::path& dir, const std::string& command) const {
    ensure_directory(dir);
    write_text_atomic(dir / "config.txt", echo(command));
  }

 private:
  std::map<std::string, std::string> values_;
};

/// Key prefixes each command reads; drives per-command --help and flags.
inline std::vector<std::string> command_key_prefixes(const std::string& command) {
  if (command == "simulate") return {"seed", "sim."};
  if (command == "gaze-prep") return {"seed", "prep."};
  if (command == "train-roadsal") return {"seed", "roadsal."};
  if (command == "train-driver") return {"seed", "agent.", "driver.", "train."};
  if (command == "train-attn") return {"seed", "net1.", "attn.", "train."};
  if (command == "train-agents") return {"seed", "agent.", "agents.", "train."};
  if (command == "evaluate") return {};
  if (command == "export-pairs") return {"export."};
  if (command == "gradcheck") return {"seed", "gradcheck."};
  if (command == "serve") return {"seed", "sim.", "serve."};
  fail(ErrorKind::config, "unknown command '", command, "'");
}

inline std::vector<const KeyInfo*> command_keys(const std::string& command) {
  std::vector<const KeyInfo*> out;
  for (const auto& k : config_keys())
    for (const auto& p : command_key_prefixes(command))
      if (k.key == p || (p.back() == '.' && k.key.rfind(p, 0) == 0)) {
        out.push_back(&k);
        break;
      }
  return out;
}

}  // namespace drivesal
