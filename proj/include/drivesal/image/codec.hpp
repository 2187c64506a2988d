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

// PNG (via libpng's simplified API) and binary PGM (8/16-bit) codecs.

#pragma once

#include <png.h>

#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "drivesal/image/image.hpp"

namespace drivesal {

inline void write_png(const std::filesystem::path& path, const Image8& img) {
  require(img.channels == 1 || img.channels == 3, ErrorKind::shape,
          "PNG export supports 1 or 3 channels, got ", img.channels);
  png_image desc;
  std::memset(&desc, 0, sizeof(desc));
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(img.width);
  desc.height = static_cast<png_uint_32>(img.height);
  desc.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const auto ok = png_image_write_to_file(&desc, path.string().c_str(), 0, img.pixels.data(),
                                          0, nullptr);
  if (!ok) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    fail(ErrorKind::io, "cannot write PNG ", path.string(), ": ", msg);
  }
}

/// PNG file contents in memory (for HTTP responses).
inline std::string encode_png(const Image8& img) {
  require(img.channels == 1 || img.channels == 3, ErrorKind::shape,
          "PNG export supports 1 or 3 channels, got ", img.channels);
  png_image desc;
  std::memset(&desc, 0, sizeof(desc));
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(img.width);
  desc.height = static_cast<png_uint_32>(img.height);
  desc.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&desc, nullptr, &size, 0, img.pixels.data(), 0, nullptr))
    fail(ErrorKind::io, "cannot size PNG: ", desc.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&desc, out.data(), &size, 0, img.pixels.data(), 0, nullptr))
    fail(ErrorKind::io, "cannot encode PNG: ", desc.message);
  out.resize(size);
  return out;
}

inline Image8 decode_png(const std::string& bytes, std::size_t channels = 3) {
  png_image desc;
  std::memset(&desc, 0, sizeof(desc));
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&desc, bytes.data(), bytes.size())) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    fail(ErrorKind::corrupt, "cannot read PNG bytes: ", msg);
  }
  desc.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 img(desc.width, desc.height, channels == 1 ? 1 : 3);
  if (!png_image_finish_read(&desc, nullptr, img.pixels.data(), 0, nullptr)) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    fail(ErrorKind::corrupt, "cannot decode PNG bytes: ", msg);
  }
  return img;
}

/// Reads any PNG, converting to RGB (channels=3) or gray (channels=1).
inline Image8 read_png(const std::filesystem::path& path, std::size_t channels = 3) {
  png_image desc;
  std::memset(&desc, 0, sizeof(desc));
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&desc, path.string().c_str())) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    fail(ErrorKind::io, "cannot read PNG ", path.string(), ": ", msg);
  }
  desc.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 img(desc.width, desc.height, channels == 1 ? 1 : 3);
  if (!png_image_finish_read(&desc, nullptr, img.pixels.data(), 0, nullptr)) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    fail(ErrorKind::corrupt, "cannot decode PNG ", path.string(), ": ", msg);
  }
  return img;
}

/// Single-channel image with 8- or 16-bit samples.
struct GrayImage16 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::uint16_t maxval = 65535;
  std::vector<std::uint16_t> samples;
};

inline void write_pgm(const std::filesystem::path& path, const GrayImage16& img) {
  require(img.maxval >= 1, ErrorKind::domain, "PGM maxval must be positive");
  require(img.samples.size() == img.width * img.height, ErrorKind::shape,
          "PGM sample count mismatch");
  std::ofstream out(path, std::ios::binary);
  require(bool(out), ErrorKind::io, "cannot open ", path.string(), " for writing");
  out << "P5\n" << img.width << " " << img.height << "\n" << img.maxval << "\n";
  const bool wide = img.maxval > 255;
  std::vector<char> bytes;
  bytes.reserve(img.samples.size() * (wide ? 2 : 1));
  for (auto s : img.samples) {
    if (wide) bytes.push_back(static_cast<char>(s >> 8));  // big-endian per netpbm
    bytes.push_back(static_cast<char>(s & 0xFF));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(bool(out), ErrorKind::io, "short write to ", path.string());
}

inline GrayImage16 read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorKind::io, "cannot open ", path.string());
  auto next_token = [&]() {
    std::string tok;
    while (in) {
      const int ch = in.get();
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(ch)) {
        if (!tok.empty()) break;
        continue;
      }
      if (ch == EOF) break;
      tok.push_back(static_cast<char>(ch));
    }
    return tok;
  };
  require(next_token() == "P5", ErrorKind::corrupt, path.string(), " is not a binary PGM");
  GrayImage16 img;
  try {
    img.width = std::stoul(next_token());
    img.height = std::stoul(next_token());
    img.maxval = static_cast<std::uint16_t>(std::stoul(next_token()));
  } catch (const std::exception&) {
    fail(ErrorKind::corrupt, "malformed PGM header in ", path.string());
  }
  const bool wide = img.maxval > 255;
  std::vector<unsigned char> bytes(img.width * img.height * (wide ? 2 : 1));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(in.gcount() == static_cast<std::streamsize>(bytes.size()), ErrorKind::corrupt,
          "truncated PGM payload in ", path.string());
  img.samples.resize(img.width * img.height);
  for (std::size_t i = 0; i < img.samples.size(); ++i)
    img.samples[i] = wide ? static_cast<std::uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1])
                          : bytes[i];
  return img;
}

}  // namespace drivesal
