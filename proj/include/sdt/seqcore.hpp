// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Recordings, segmentations, feature sequences and their on-disk formats.

#pragma once

#include "sdt/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace sdt {

using ClassId = std::int32_t;

/// Per-frame class ids.
using FrameLabels = std::vector<ClassId>;

/// Half-open frame interval [start, end) carrying one label.
struct Segment {
  std::int64_t start = 0;
  std::int64_t end = 0;
  ClassId label = 0;

  std::int64_t length() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

/// Canonical run-length segmentation of a whole timeline.
class Segmentation {
 public:
  Segmentation() = default;

  /// Validates the canonical-form invariants; throws InvalidArgument.
  Segmentation(std::vector<Segment> segments, std::int64_t num_frames)
      : segments_(std::move(segments)), num_frames_(num_frames) {
    SDT_REQUIRE(num_frames_ >= 1, "segmentation must cover at least one frame");
    SDT_REQUIRE(!segments_.empty(), "segmentation has no segments");
    SDT_REQUIRE(segments_.front().start == 0, "first segment must start at frame 0");
    SDT_REQUIRE(segments_.back().end == num_frames_, "last segment must end at num_frames");
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const Segment& s = segments_[i];
      SDT_REQUIRE(s.start < s.end, "segment with start >= end");
      SDT_REQUIRE(s.label >= 0, "negative label");
      if (i > 0) {
        SDT_REQUIRE(segments_[i - 1].end == s.start, "segments are not contiguous");
        SDT_REQUIRE(segments_[i - 1].label != s.label,
                    "adjacent segments share a label (not canonical)");
      }
    }
  }

  const std::vector<Segment>& segments() const { return segments_; }
  std::int64_t num_frames() const { return num_frames_; }
  std::size_t size() const { return segments_.size(); }

  bool operator==(const Segmentation&) const = default;

 private:
  std::vector<Segment> segments_;
  std::int64_t num_frames_ = 0;
};

/// Run-length encoding of frame labels into canonical form.
inline Segmentation segments_from_frames(std::span<const ClassId> frames) {
  SDT_REQUIRE(!frames.empty(), "segments_from_frames: empty frame labels");
  std::vector<Segment> out;
  std::int64_t start = 0;
  for (std::size_t t = 1; t <= frames.size(); ++t) {
    if (t == frames.size() || frames[t] != frames[start]) {
      out.push_back({start, static_cast<std::int64_t>(t), frames[start]});
      start = static_cast<std::int64_t>(t);
    }
  }
  return Segmentation(std::move(out), static_cast<std::int64_t>(frames.size()));
}

inline FrameLabels frames_from_segments(const Segmentation& seg) {
  FrameLabels out(static_cast<std::size_t>(seg.num_frames()));
  for (const Segment& s : seg.segments())
    std::fill(out.begin() + s.start, out.begin() + s.end, s.label);
  return out;
}

/// T x D matrix of per-frame features.
struct FeatureSequence {
  MatF data;
  double frame_rate = 0.0;

  std::int64_t frames() const { return data.rows(); }
  std::int64_t dim() const { return data.cols(); }

  void validate() const {
    SDT_REQUIRE(data.rows() >= 1, "feature sequence has no frames");
    SDT_REQUIRE(data.cols() >= 1, "feature sequence has zero dimension");
    SDT_REQUIRE(data.allFinite(), "feature sequence contains non-finite values");
  }
};

struct Recording {
  std::string id;
  FeatureSequence features;
  std::optional<Segmentation> labels;

  void validate() const {
    features.validate();
    if (labels)
      SDT_REQUIRE(labels->num_frames() == features.frames(),
                  "recording " + id + ": label length differs from feature length");
  }
};

/// Strips a trailing view marker ("_exo"/"_ego") from a recording id.
inline std::string base_key(std::string_view id) {
  for (std::string_view suffix : {"_exo", "_ego"})
    if (id.size() > suffix.size() && id.substr(id.size() - suffix.size()) == suffix)
      return std::string(id.substr(0, id.size() - suffix.size()));
  return std::string(id);
}

/// Time-synchronized exocentric/egocentric recordings of one activity.
struct PairedRecording {
  Recording exo;
  Recording ego;

  void validate() const {
    exo.validate();
    ego.validate();
    SDT_REQUIRE(exo.features.frames() == ego.features.frames(),
                "pair " + exo.id + "/" + ego.id + " is not synchronized: " +
                    std::to_string(exo.features.frames()) + " vs " +
                    std::to_string(ego.features.frames()) + " frames");
    SDT_REQUIRE(base_key(exo.id) == base_key(ego.id),
                "pair ids do not share a base key: " + exo.id + ", " + ego.id);
  }
};

// ---------------------------------------------------------------------------
// FTSQ feature files

namespace detail {

inline constexpr std::array<char, 4> kFtsqMagic = {'F', 'T', 'S', 'Q'};
inline constexpr std::uint32_t kFtsqVersion = 1;

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace detail

inline std::string encode_features(const MatF& data) {
  std::string out(detail::kFtsqMagic.begin(), detail::kFtsqMagic.end());
  detail::put_u32(out, detail::kFtsqVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(data.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(data.cols()));
  out.reserve(out.size() + 4 * static_cast<std::size_t>(data.size()));
  for (Eigen::Index i = 0; i < data.size(); ++i)
    detail::put_u32(out, std::bit_cast<std::uint32_t>(data.data()[i]));
  return out;
}

inline FeatureSequence decode_features(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 4) throw FormatError("truncated FTSQ magic", bytes.size());
  if (std::memcmp(p, detail::kFtsqMagic.data(), 4) != 0) throw FormatError("bad FTSQ magic", 0);
  if (bytes.size() < 16) throw FormatError("truncated FTSQ header", bytes.size());
  const std::uint32_t version = detail::get_u32(p + 4);
  if (version != detail::kFtsqVersion)
    throw FormatError("unsupported FTSQ version " + std::to_string(version), 4);
  const std::uint32_t t = detail::get_u32(p + 8);
  const std::uint32_t d = detail::get_u32(p + 12);
  if (t == 0) throw FormatError("FTSQ header declares T=0", 8);
  if (d == 0) throw FormatError("FTSQ header declares D=0", 12);
  const std::uint64_t need = 16 + 4ULL * t * d;
  if (bytes.size() < need) throw FormatError("truncated FTSQ payload", bytes.size());
  if (bytes.size() > need) throw FormatError("trailing bytes after FTSQ payload", need);
  FeatureSequence seq;
  seq.data.resize(t, d);
  for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(t) * d; ++i) {
    const float v = std::bit_cast<float>(detail::get_u32(p + 16 + 4 * i));
    if (!std::isfinite(v)) throw FormatError("non-finite feature value", 16 + 4 * i);
    seq.data.data()[i] = v;
  }
  return seq;
}

inline FeatureSequence load_features(const std::filesystem::path& path) {
  return decode_features(detail::read_file(path));
}

inline void save_features(const FeatureSequence& seq, const std::filesystem::path& path) {
  seq.validate();
  detail::write_file(path, encode_features(seq.data));
}

/// Reads only the FTSQ header and returns (T, D).
inline std::pair<std::uint32_t, std::uint32_t> peek_feature_shape(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  unsigned char hdr[16];
  in.read(reinterpret_cast<char*>(hdr), 16);
  const auto got = static_cast<std::uint64_t>(in.gcount());
  if (got < 4 || std::memcmp(hdr, detail::kFtsqMagic.data(), 4) != 0)
    throw FormatError("bad FTSQ magic in " + path.string(), 0);
  if (got < 16) throw FormatError("truncated FTSQ header in " + path.string(), got);
  if (detail::get_u32(hdr + 4) != detail::kFtsqVersion)
    throw FormatError("unsupported FTSQ version in " + path.string(), 4);
  return {detail::get_u32(hdr + 8), detail::get_u32(hdr + 12)};
}

// ---------------------------------------------------------------------------
// Label files

inline std::string encode_labels_csv(const Segmentation& seg) {
  std::string out = "start,end,label\n";
  for (const Segment& s : seg.segments())
    out += std::to_string(s.start) + "," + std::to_string(s.end) + "," + std::to_string(s.label) + "\n";
  return out;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::int64_t parse_int(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw InvalidArgument(where + ": not an integer: '" + s + "'");
  }
  if (used != s.size()) throw InvalidArgument(where + ": not an integer: '" + s + "'");
  return v;
}

}  // namespace detail

/// Parses either `start,end,label` CSV or one label per line.
inline Segmentation decode_labels(std::string_view text) {
  std::vector<std::string> lines;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    std::string t = detail::trim(line);
    if (!t.empty()) lines.push_back(std::move(t));
  }
  SDT_REQUIRE(!lines.empty(), "label file is empty");
  if (lines.front() == "start,end,label") {
    std::vector<Segment> segs;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      std::array<std::string, 3> cols;
      std::istringstream row(lines[i]);
      for (auto& c : cols)
        if (!std::getline(row, c, ',')) throw InvalidArgument("label csv line " + std::to_string(i + 1) + ": expected 3 columns");
      const std::string where = "label csv line " + std::to_string(i + 1);
      Segment s{detail::parse_int(detail::trim(cols[0]), where), detail::parse_int(detail::trim(cols[1]), where),
                static_cast<ClassId>(detail::parse_int(detail::trim(cols[2]), where))};
      if (!segs.empty() && segs.back().label == s.label && segs.back().end == s.start)
        segs.back().end = s.end;
      else
        segs.push_back(s);
    }
    SDT_REQUIRE(!segs.empty(), "label csv has no segments");
    const std::int64_t n = segs.back().end;
    return Segmentation(std::move(segs), n);
  }
  FrameLabels frames;
  frames.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i)
    frames.push_back(static_cast<ClassId>(detail::parse_int(lines[i], "label line " + std::to_string(i + 1))));
  return segments_from_frames(frames);
}

inline Segmentation load_labels(const std::filesystem::path& path) {
  return decode_labels(detail::read_file(path));
}

inline void save_labels(const Segmentation& seg, const std::filesystem::path& path) {
  detail::write_file(path, encode_labels_csv(seg));
}

// ---------------------------------------------------------------------------
// Corpus manifests

enum class Role { TrainSource, AdaptPair, TestTarget, TestSource };

inline std::string_view role_name(Role r) {
  switch (r) {
    case Role::TrainSource: return "train_source";
    case Role::AdaptPair: return "adapt_pair";
    case Role::TestTarget: return "test_target";
    case Role::TestSource: return "test_source";
  }
  return "?";
}

inline Role parse_role(std::string_view s) {
  for (Role r : {Role::TrainSource, Role::AdaptPair, Role::TestTarget, Role::TestSource})
    if (role_name(r) == s) return r;
  throw InvalidArgument("unknown role '" + std::string(s) +
                        "' (expected train_source, adapt_pair, test_target or test_source)");
}

/// One manifest line. `features` is the primary view (exo for train_source,
/// test_source and adapt_pair; ego for test_target). `features_ego` is the
/// egocentric companion of adapt_pair entries; on train_source entries it is
/// the synchronized ego view that only the ego-oracle may train on.
struct ManifestEntry {
  Role role = Role::TrainSource;
  std::filesystem::path features;
  std::optional<std::filesystem::path> features_ego;
  std::optional<std::filesystem::path> labels;
  std::string id;
};

struct CorpusManifest {
  int num_classes = 0;
  std::optional<ClassId> background_label;
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;

  std::vector<const ManifestEntry*> with_role(Role r) const {
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
      if (e.role == r) out.push_back(&e);
    return out;
  }
};

inline nlohmann::json manifest_to_json(const CorpusManifest& m) {
  nlohmann::json j;
  j["num_classes"] = m.num_classes;
  if (m.background_label) j["background_label"] = *m.background_label;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json je;
    je["role"] = std::string(role_name(e.role));
    if (!e.id.empty()) je["id"] = e.id;
    je["features"] = e.features.generic_string();
    if (e.features_ego) je["features_ego"] = e.features_ego->generic_string();
    if (e.labels) je["labels"] = e.labels->generic_string();
    j["entries"].push_back(std::move(je));
  }
  return j;
}

/// Parses a manifest document; relative paths resolve against `root`.
/// Checks that referenced files exist and that adapt_pair entries are synchronized.
inline CorpusManifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  CorpusManifest m;
  m.root = root;
  SDT_REQUIRE(j.is_object(), "manifest: top level must be an object");
  SDT_REQUIRE(j.contains("num_classes") && j["num_classes"].is_number_integer(),
              "manifest: missing integer num_classes");
  m.num_classes = j["num_classes"].get<int>();
  SDT_REQUIRE(m.num_classes >= 1, "manifest: num_classes must be >= 1");
  if (j.contains("background_label") && !j["background_label"].is_null()) {
    const int bg = j["background_label"].get<int>();
    SDT_REQUIRE(bg >= 0 && bg < m.num_classes, "manifest: background_label is not a valid class id");
    m.background_label = bg;
  }
  SDT_REQUIRE(j.contains("entries") && j["entries"].is_array(), "manifest: missing entries array");
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : root / path;
  };
  std::size_t index = 0;
  for (const auto& je : j["entries"]) {
    const std::string where = "manifest entry " + std::to_string(index++);
    SDT_REQUIRE(je.contains("role") && je["role"].is_string(), where + ": missing role");
    SDT_REQUIRE(je.contains("features") && je["features"].is_string(), where + ": missing features");
    ManifestEntry e;
    try {
      e.role = parse_role(je["role"].get<std::string>());
    } catch (const InvalidArgument& err) {
      throw InvalidArgument(where + ": " + err.what());
    }
    e.features = resolve(je["features"].get<std::string>());
    if (je.contains("features_ego")) e.features_ego = resolve(je["features_ego"].get<std::string>());
    if (je.contains("labels")) e.labels = resolve(je["labels"].get<std::string>());
    e.id = je.value("id", e.features.stem().string());
    for (const fs::path* p : {&e.features, e.features_ego ? &*e.features_ego : nullptr, e.labels ? &*e.labels : nullptr})
      if (p && !fs::exists(*p)) throw InvalidArgument(where + ": missing file " + p->string());
    if (e.role == Role::AdaptPair) {
      SDT_REQUIRE(e.features_ego.has_value(), where + ": adapt_pair needs features_ego");
      const auto exo = peek_feature_shape(e.features);
      const auto ego = peek_feature_shape(*e.features_ego);
      SDT_REQUIRE(exo.first == ego.first, where + ": unsynchronized pair lengths " +
                                              std::to_string(exo.first) + " vs " + std::to_string(ego.first));
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline CorpusManifest load_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), e.byte);
  }
  return parse_manifest(j, path.parent_path());
}

inline void save_manifest(const CorpusManifest& m, const std::filesystem::path& path) {
  detail::write_file(path, manifest_to_json(m).dump(2) + "\n");
}

/// Loaded corpus split by role. The adapt pairs never carry labels.
struct Corpus {
  int num_classes = 0;
  std::optional<ClassId> background_label;
  std::vector<Recording> train_source;
  std::vector<Recording> train_source_ego;  // companion views; ego-oracle only
  std::vector<PairedRecording> adapt_pairs;
  std::vector<Recording> test_target;
  std::vector<Recording> test_source;
};

/// Entry paths are used as stored; load_manifest has already resolved them.
inline Corpus load_corpus(const CorpusManifest& m) {
  Corpus c;
  c.num_classes = m.num_classes;
  c.background_label = m.background_label;
  for (const auto& e : m.entries) {
    Recording r;
    r.id = e.id;
    r.features = load_features(e.features);
    if (e.labels && e.role != Role::AdaptPair) {
      r.labels = load_labels(*e.labels);
      for (const Segment& s : r.labels->segments())
        SDT_REQUIRE(s.label < m.num_classes, "label " + std::to_string(s.label) + " out of range in " + e.labels->string());
    }
    switch (e.role) {
      case Role::TrainSource:
        if (e.features_ego) {
          Recording ego;
          ego.id = base_key(e.id) + "_ego";
          ego.features = load_features(*e.features_ego);
          ego.labels = r.labels;
          ego.validate();
          c.train_source_ego.push_back(std::move(ego));
        }
        r.validate();
        c.train_source.push_back(std::move(r));
        break;
      case Role::AdaptPair: {
        PairedRecording p;
        p.exo = std::move(r);
        p.exo.labels.reset();
        p.ego.id = base_key(p.exo.id) + "_ego";
        p.exo.id = base_key(p.exo.id) + "_exo";
        p.ego.features = load_features(*e.features_ego);
        p.validate();
        c.adapt_pairs.push_back(std::move(p));
        break;
      }
      case Role::TestTarget:
        r.validate();
        c.test_target.push_back(std::move(r));
        break;
      case Role::TestSource:
        r.validate();
        c.test_source.push_back(std::move(r));
        break;
    }
  }
  return c;
}

}  // namespace sdt
