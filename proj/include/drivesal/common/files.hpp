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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "drivesal/common/error.hpp"

namespace drivesal {

namespace fs = std::filesystem;
using Json = nlohmann::json;

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorKind::io, "cannot open ", path.string());
  std::ostringstream oss;
  oss << in.rdbuf();
  return oss.str();
}

inline std::vector<char> read_bytes(const fs::path& path) {
  const std::string s = read_text(path);
  return {s.begin(), s.end()};
}

inline void write_bytes(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(bool(out), ErrorKind::io, "cannot open ", path.string(), " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  require(bool(out), ErrorKind::io, "short write to ", path.string());
}

/// Writes through a sibling temp file and renames it into place.
inline void write_text_atomic(const fs::path& path, std::string_view text) {
  fs::path tmp = path;
  tmp += ".tmp";
  write_bytes(tmp, text);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  require(!ec, ErrorKind::io, "cannot rename ", tmp.string(), " to ", path.string(), ": ",
          ec.message());
}

inline Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::exception& e) {
    fail(ErrorKind::corrupt, "malformed JSON in ", path.string(), ": ", e.what());
  }
}

inline void write_json(const fs::path& path, const Json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

/// One JSON object per line.
inline std::vector<Json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  require(bool(in), ErrorKind::io, "cannot open ", path.string());
  std::vector<Json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::exception& e) {
      fail(ErrorKind::corrupt, path.string(), ":", lineno, ": ", e.what());
    }
  }
  return rows;
}

inline void write_jsonl(const fs::path& path, const std::vector<Json>& rows) {
  std::string text;
  for (const auto& r : rows) text += r.dump() + "\n";
  write_text_atomic(path, text);
}

inline void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::io, "cannot create directory ", dir.string(), ": ", ec.message());
}

/// Zero-padded six-digit index used in every on-disk file name.
inline std::string index_name(std::string_view prefix, std::size_t index,
                              std::string_view ext) {
  std::ostringstream oss;
  oss << prefix << std::setw(6) << std::setfill('0') << index << ext;
  return oss.str();
}

/// 64-bit FNV-1a, used for dataset identity digests.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void update_value(const T& v) {
    update(&v, sizeof(T));
  }
  std::uint64_t value() const { return hash_; }
  std::string hex() const {
    std::ostringstream oss;
    oss << std::hex << std::setw(16) << std::setfill('0') << hash_;
    return oss.str();
  }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace drivesal
