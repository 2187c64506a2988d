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

// Checkpoint directory:
//
//   manifest.json  magic, version, kind, spec, ordered parameter names and
//                  shapes, payload size and digest, seed, free-form meta
//   params.bin     float32 little-endian, parameters concatenated in
//                  manifest order

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>

#include "drivesal/common/files.hpp"
#include "drivesal/nets/models.hpp"

namespace drivesal {

inline constexpr const char* kCheckpointMagic = "drivesal-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string train_config_digest;
  Json extra = Json::object();
};

struct LoadedCheckpoint {
  Model<float> model;
  CheckpointMeta meta;
};

namespace detail {

inline std::string encode_params(const ParamSet<float>& params) {
  std::string bytes;
  bytes.reserve(params.scalar_count() * 4);
  for (const auto& e : params)
    for (float v : e.value.values()) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
    }
  return bytes;
}

inline float decode_float(const char* p) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= std::uint32_t(static_cast<unsigned char>(p[k])) << (8 * k);
  return std::bit_cast<float>(bits);
}

}  // namespace detail

inline Json checkpoint_manifest(const Model<float>& m, const CheckpointMeta& meta,
                                const std::string& payload) {
  Json params = Json::array();
  for (const auto& e : m.net.params()) params.push_back({{"name", e.name}, {"shape", e.value.shape()}});
  Fnv1a h;
  h.update(payload.data(), payload.size());
  return {{"magic", kCheckpointMagic},
          {"version", kCheckpointVersion},
          {"kind", m.kind()},
          {"spec", spec_to_json(m.spec)},
          {"params", params},
          {"payload_bytes", payload.size()},
          {"payload_fnv1a", h.hex()},
          {"seed", meta.seed},
          {"train_config_digest", meta.train_config_digest},
          {"meta", meta.extra}};
}

/// Writes params.bin then manifest.json, each through a temp file + rename.
inline void save_checkpoint(const fs::path& dir, const Model<float>& m,
                            const CheckpointMeta& meta = {}) {
  for (const auto& e : m.net.params())
    require(e.value.all_finite(), ErrorKind::numeric, "refusing to save non-finite parameter '",
            e.name, "'");
  ensure_directory(dir);
  const std::string payload = detail::encode_params(m.net.params());
  write_text_atomic(dir / "params.bin", payload);
  write_json(dir / "manifest.json", checkpoint_manifest(m, meta, payload));
}

inline LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorKind::io, "checkpoint directory ", dir.string(),
          " does not exist");
  const Json j = read_json(dir / "manifest.json");
  const std::string where = dir.string();
  try {
    require(j.is_object() && j.value("magic", std::string()) == kCheckpointMagic,
            ErrorKind::corrupt, where, ": bad checkpoint magic");
    const int version = j.at("version").get<int>();
    require(version == kCheckpointVersion, ErrorKind::corrupt, where,
            ": unsupported checkpoint version ", version, " (this build reads ",
            kCheckpointVersion, ")");
    const std::string kind = j.at("kind").get<std::string>();
    const std::string payload = read_text(dir / "params.bin");

    std::size_t declared = 0;
    for (const auto& p : j.at("params")) declared += shape_product(p.at("shape").get<Shape>());
    require(payload.size() == declared * 4, ErrorKind::corrupt, where, ": params.bin holds ",
            payload.size(), " bytes but the manifest declares ", declared, " float32 values (",
            declared * 4, " bytes)");
    require(j.at("payload_bytes").get<std::size_t>() == payload.size(), ErrorKind::corrupt, where,
            ": payload_bytes disagrees with params.bin length");
    Fnv1a h;
    h.update(payload.data(), payload.size());
    require(j.at("payload_fnv1a").get<std::string>() == h.hex(), ErrorKind::corrupt, where,
            ": params.bin digest mismatch");

    LoadedCheckpoint out{make_zero_model<float>(spec_from_json(kind, j.at("spec"))), {}};
    auto& params = out.model.net.params();
    const auto& listed = j.at("params");
    require(listed.size() == params.size(), ErrorKind::corrupt, where, ": manifest lists ",
            listed.size(), " parameters, the ", kind, " spec builds ", params.size());
    std::size_t offset = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto name = listed[i].at("name").get<std::string>();
      const auto shape = listed[i].at("shape").get<Shape>();
      require(name == params[i].name && shape == params[i].value.shape(), ErrorKind::corrupt,
              where, ": parameter ", i, " is '", name, "' ", shape_string(shape), ", spec expects '",
              params[i].name, "' ", shape_string(params[i].value.shape()));
      for (auto& v : params[i].value.storage()) {
        v = detail::decode_float(payload.data() + offset);
        offset += 4;
      }
    }
    out.meta.seed = j.at("seed").get<std::uint64_t>();
    out.meta.train_config_digest = j.at("train_config_digest").get<std::string>();
    out.meta.extra = j.at("meta");
    return out;
  } catch (const Json::exception& e) {
    fail(ErrorKind::corrupt, where, ": malformed manifest: ", e.what());
  }
}

}  // namespace drivesal
