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

// Saliency dataset assembly and its on-disk layout:
//
//   dataset.json            config, counts, split seed, per-sample records
//   frame_NNNNNN.png        input frame, RGB
//   target_NNNNNN.pgm       16-bit grayscale, value = round(65535 * saliency)
//   train.txt / test.txt    sample ids, one per line
//
// Targets are quantized to 16 bits in memory as well, so a dataset read back
// from disk is identical to the one that was written.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drivesal/common/files.hpp"
#include "drivesal/gazeprep/saliency.hpp"
#include "drivesal/image/codec.hpp"
#include "drivesal/simworld/session.hpp"

namespace drivesal {

struct DatasetConfig {
  double sigma_ref = kReferenceSigma;  // px at width 227, scaled with the source width
  double crop_margin_sigmas = 4.0;
  bool augment = true;
  std::size_t input_resolution = 96;
  std::size_t target_resolution = 48;
  double train_fraction = 0.8;
  std::uint64_t seed = 1;

  double sigma_px(std::size_t width) const { return sigma_ref * double(width) / kReferenceWidth; }

  void validate() const {
    require(sigma_ref > 0, ErrorKind::config, "sigma must be > 0");
    require(crop_margin_sigmas > 0, ErrorKind::config, "crop margin must be > 0");
    require(input_resolution >= 8 && target_resolution >= 2, ErrorKind::config,
            "input resolution must be >= 8 and target resolution >= 2");
    require(train_fraction > 0 && train_fraction < 1, ErrorKind::config,
            "train fraction must be in (0, 1), got ", train_fraction);
  }
};

inline void to_json(Json& j, const DatasetConfig& c) {
  j = {{"sigma_ref", c.sigma_ref},
       {"crop_margin_sigmas", c.crop_margin_sigmas},
       {"augment", c.augment},
       {"input_resolution", c.input_resolution},
       {"target_resolution", c.target_resolution},
       {"train_fraction", c.train_fraction},
       {"seed", c.seed}};
}

inline void from_json(const Json& j, DatasetConfig& c) {
  c.sigma_ref = j.at("sigma_ref").get<double>();
  c.crop_margin_sigmas = j.at("crop_margin_sigmas").get<double>();
  c.augment = j.at("augment").get<bool>();
  c.input_resolution = j.at("input_resolution").get<std::size_t>();
  c.target_resolution = j.at("target_resolution").get<std::size_t>();
  c.train_fraction = j.at("train_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

struct SaliencySample {
  Image8 frame;                         // input_resolution^2, RGB
  std::vector<std::uint16_t> target;    // target_resolution^2, row-major
  std::string provenance = "original";  // or crop-corner-k
  std::size_t group = 0;                // source frame; crops share it
  std::size_t session = 0;
  std::size_t frame_idx = 0;
  double gaze_x = 0.0;                  // peak position on the target grid
  double gaze_y = 0.0;
};

template <typename T = float>
Tensor<T> target_tensor(const SaliencySample& s, std::size_t resolution) {
  require(s.target.size() == resolution * resolution, ErrorKind::shape, "target has ",
          s.target.size(), " values, expected ", resolution, "^2");
  Tensor<T> t({resolution, resolution, 1});
  for (std::size_t i = 0; i < s.target.size(); ++i) t[i] = T(s.target[i]) / T(65535);
  return t;
}

struct DatasetCounts {
  std::size_t sessions = 0;
  std::size_t frames_seen = 0;
  std::size_t frames_dropped = 0;  // no gaze at or before the frame
  std::size_t central_frames = 0;
  std::size_t crops = 0;
};

struct SaliencyDataset {
  DatasetConfig config;
  DatasetCounts counts;
  std::vector<SaliencySample> samples;
  std::vector<std::size_t> train;  // sample ids
  std::vector<std::size_t> test;

  std::string digest() const {
    Fnv1a h;
    for (const auto& s : samples) {
      h.update(s.frame.pixels.data(), s.frame.pixels.size());
      h.update(s.target.data(), s.target.size() * sizeof(std::uint16_t));
    }
    for (auto i : train) h.update_value(std::uint64_t(i));
    h.update_value(std::uint64_t(~0ULL));
    for (auto i : test) h.update_value(std::uint64_t(i));
    return h.hex();
  }
};

namespace detail {

inline Image8 resize_image(const Image8& img, std::size_t n) {
  if (img.width == n && img.height == n) return img;
  return to_image(resize_bilinear(to_tensor<float>(img), n, n));
}

inline std::vector<std::uint16_t> quantized_target(double gx, double gy, double sigma_src,
                                                   std::size_t src_width, std::size_t n) {
  const double scale = double(n) / double(src_width);
  const auto map = gaussian_saliency_map<double>(gx * scale, gy * scale, sigma_src * scale, n, n);
  std::vector<std::uint16_t> q(map.size());
  for (std::size_t i = 0; i < q.size(); ++i)
    q[i] = static_cast<std::uint16_t>(std::lround(65535.0 * map[i]));
  return q;
}

}  // namespace detail

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Groups are shuffled with the seed and assigned to train until it reaches
/// round(fraction * samples); a group that would overshoot goes to test, so
/// members of a group never straddle the split.
inline Split split_by_groups(const std::vector<std::size_t>& group_of, std::size_t n_groups,
                             double fraction, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> groups(n_groups);
  for (std::size_t i = 0; i < group_of.size(); ++i) {
    require(group_of[i] < n_groups, ErrorKind::domain, "sample ", i, " has group ", group_of[i],
            " >= ", n_groups);
    groups[group_of[i]].push_back(i);
  }
  std::vector<std::size_t> order(n_groups);
  for (std::size_t i = 0; i < n_groups; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto target = static_cast<std::size_t>(std::llround(fraction * double(group_of.size())));
  Split out;
  for (auto g : order) {
    auto& side = out.train.size() + groups[g].size() <= target ? out.train : out.test;
    side.insert(side.end(), groups[g].begin(), groups[g].end());
  }
  return out;
}

/// Accumulates sessions one at a time, then shuffles and splits.
class DatasetBuilder {
 public:
  explicit DatasetBuilder(DatasetConfig cfg) {
    cfg.validate();
    ds_.config = cfg;
  }

  void add_session(const SessionLog& log) {
    const auto& cfg = ds_.config;
    const std::size_t w = log.meta.resolution;
    const double sigma = cfg.sigma_px(w);
    const std::size_t session = ds_.counts.sessions++;
    for (std::size_t k = 0; k < log.frames.size(); ++k) {
      ++ds_.counts.frames_seen;
      const auto aligned = align_gaze_to_frame(log.frames[k].t_ms, log.gaze, w);
      if (!aligned) {
        ++ds_.counts.frames_dropped;
        continue;
      }
      const std::size_t group = next_group_++;
      push(log.frames[k].image, aligned->x, aligned->y, sigma, w, "original", group, session, k);
      if (!cfg.augment || !is_central(aligned->x, aligned->y, sigma, w, w)) continue;
      ++ds_.counts.central_frames;
      for (const auto& a : central_bias_augment(log.frames[k].image, aligned->x, aligned->y, sigma,
                                                cfg.crop_margin_sigmas)) {
        push(a.frame, a.x, a.y, sigma, w, provenance_tag(a.corner), group, session, k);
        ++ds_.counts.crops;
      }
    }
  }

  SaliencyDataset finish() && {
    require(!ds_.samples.empty(), ErrorKind::domain,
            "no usable frames: every frame lacked a preceding gaze sample");
    std::vector<std::size_t> group_of(ds_.samples.size());
    for (std::size_t i = 0; i < group_of.size(); ++i) group_of[i] = ds_.samples[i].group;
    auto split = split_by_groups(group_of, next_group_, ds_.config.train_fraction, ds_.config.seed);
    ds_.train = std::move(split.train);
    ds_.test = std::move(split.test);
    return std::move(ds_);
  }

 private:
  void push(const Image8& frame, double gx, double gy, double sigma, std::size_t w,
            std::string provenance, std::size_t group, std::size_t session, std::size_t k) {
    const auto& cfg = ds_.config;
    const double scale = double(cfg.target_resolution) / double(w);
    ds_.samples.push_back({detail::resize_image(frame, cfg.input_resolution),
                           detail::quantized_target(gx, gy, sigma, w, cfg.target_resolution),
                           std::move(provenance), group, session, k, gx * scale, gy * scale});
  }

  SaliencyDataset ds_;
  std::size_t next_group_ = 0;
};

inline SaliencyDataset build_dataset(const std::vector<SessionLog>& sessions,
                                     const DatasetConfig& cfg) {
  require(!sessions.empty(), ErrorKind::domain, "build_dataset needs at least one session");
  DatasetBuilder b(cfg);
  for (const auto& s : sessions) b.add_session(s);
  return std::move(b).finish();
}

namespace detail {

inline void write_ids(const fs::path& path, const std::vector<std::size_t>& ids) {
  std::string text;
  for (auto i : ids) text += std::to_string(i) + "\n";
  write_text_atomic(path, text);
}

inline std::vector<std::size_t> read_ids(const fs::path& path, std::size_t limit) {
  std::istringstream in(read_text(path));
  std::vector<std::size_t> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(line, &used);
    } catch (const std::exception&) {
      fail(ErrorKind::corrupt, path.string(), ": bad sample id '", line, "'");
    }
    require(used == line.size() && v < limit, ErrorKind::corrupt, path.string(),
            ": bad sample id '", line, "'");
    ids.push_back(std::size_t(v));
  }
  return ids;
}

}  // namespace detail

inline void write_dataset(const fs::path& dir, const SaliencyDataset& ds) {
  ensure_directory(dir);
  const std::size_t n = ds.config.target_resolution;
  Json records = Json::array();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    write_png(dir / index_name("frame_", i, ".png"), s.frame);
    write_pgm(dir / index_name("target_", i, ".pgm"), GrayImage16{n, n, 65535, s.target});
    records.push_back({{"id", i},
                       {"provenance", s.provenance},
                       {"group", s.group},
                       {"session", s.session},
                       {"frame_idx", s.frame_idx},
                       {"gaze_x", s.gaze_x},
                       {"gaze_y", s.gaze_y}});
  }
  detail::write_ids(dir / "train.txt", ds.train);
  detail::write_ids(dir / "test.txt", ds.test);
  write_json(dir / "dataset.json",
             {{"format", "drivesal-dataset"},
              {"version", 1},
              {"config", ds.config},
              {"split_seed", ds.config.seed},
              {"counts",
               {{"samples", ds.samples.size()},
                {"train", ds.train.size()},
                {"test", ds.test.size()},
                {"sessions", ds.counts.sessions},
                {"frames_seen", ds.counts.frames_seen},
                {"frames_dropped", ds.counts.frames_dropped},
                {"central_frames", ds.counts.central_frames},
                {"crops", ds.counts.crops}}},
              {"digest", ds.digest()},
              {"samples", records}});
}

inline SaliencyDataset read_dataset(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorKind::io, "dataset directory ", dir.string(),
          " does not exist");
  const Json j = read_json(dir / "dataset.json");
  SaliencyDataset ds;
  try {
    require(j.at("format") == "drivesal-dataset", ErrorKind::corrupt, dir.string(),
            " is not a drivesal dataset");
    require(j.at("version") == 1, ErrorKind::corrupt, "unsupported dataset version");
    ds.config = j.at("config").get<DatasetConfig>();
    const auto& c = j.at("counts");
    ds.counts = {c.at("sessions").get<std::size_t>(), c.at("frames_seen").get<std::size_t>(),
                 c.at("frames_dropped").get<std::size_t>(),
                 c.at("central_frames").get<std::size_t>(), c.at("crops").get<std::size_t>()};
    const std::size_t n = ds.config.target_resolution, in = ds.config.input_resolution;
    const auto& records = j.at("samples");
    require(records.size() == c.at("samples").get<std::size_t>(), ErrorKind::corrupt,
            "dataset.json sample count disagrees with its records");
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      require(r.at("id").get<std::size_t>() == i, ErrorKind::corrupt, "sample record ", i,
              " out of order");
      SaliencySample s;
      s.frame = read_png(dir / index_name("frame_", i, ".png"), 3);
      require(s.frame.width == in && s.frame.height == in, ErrorKind::corrupt, "frame ", i,
              " is ", s.frame.width, "x", s.frame.height, ", expected ", in);
      const GrayImage16 t = read_pgm(dir / index_name("target_", i, ".pgm"));
      require(t.width == n && t.height == n && t.maxval == 65535, ErrorKind::corrupt, "target ",
              i, " has the wrong geometry");
      s.target = t.samples;
      s.provenance = r.at("provenance").get<std::string>();
      s.group = r.at("group").get<std::size_t>();
      s.session = r.at("session").get<std::size_t>();
      s.frame_idx = r.at("frame_idx").get<std::size_t>();
      s.gaze_x = r.at("gaze_x").get<double>();
      s.gaze_y = r.at("gaze_y").get<double>();
      ds.samples.push_back(std::move(s));
    }
  } catch (const Json::exception& e) {
    fail(ErrorKind::corrupt, "bad dataset.json in ", dir.string(), ": ", e.what());
  }
  ds.train = detail::read_ids(dir / "train.txt", ds.samples.size());
  ds.test = detail::read_ids(dir / "test.txt", ds.samples.size());
  std::vector<int> seen(ds.samples.size(), 0);
  for (auto i : ds.train) ++seen[i];
  for (auto i : ds.test) ++seen[i];
  for (std::size_t i = 0; i < seen.size(); ++i)
    require(seen[i] == 1, ErrorKind::corrupt, "sample ", i, " appears ", seen[i],
            " times across train.txt and test.txt");
  const std::string want = j.value("digest", std::string());
  require(want.empty() || want == ds.digest(), ErrorKind::corrupt, "dataset digest mismatch in ",
          dir.string());
  return ds;
}

}  // namespace drivesal
