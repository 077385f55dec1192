// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic paired-view corpora and synchronization faults.
//
// A recording is an action script (class sequence with durations). Each frame
// has a latent vector = class embedding + smooth AR(1) drift. The exo view is
// A_exo * latent + noise; the ego view is nonlin(A_ego * latent) + noise.

#pragma once

#include "sdt/seqcore.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

namespace sdt {

enum class EgoNonlinearity { Identity, Tanh };

struct GeneratorConfig {
  int num_classes = 6;
  int latent_dim = 8;
  int feature_dim = 16;
  int min_duration = 25;
  int max_duration = 55;
  int min_actions = 6;
  int max_actions = 10;
  int min_frames = 200;
  int max_frames = 400;
  double class_scale = 1.0;   // std of class embeddings
  double drift_std = 0.3;     // stationary std of the latent drift
  double drift_corr = 0.95;   // AR(1) coefficient of the drift
  double exo_noise = 0.1;
  double ego_noise = 0.1;
  // 0 makes A_ego equal A_exo, 1 draws it independently.
  double view_gap = 1.0;
  EgoNonlinearity ego_nonlinearity = EgoNonlinearity::Tanh;
  std::uint64_t seed = 7;

  void validate() const {
    SDT_REQUIRE(num_classes >= 2, "generator: num_classes must be >= 2");
    SDT_REQUIRE(latent_dim >= 1 && feature_dim >= 1, "generator: dimensions must be >= 1");
    SDT_REQUIRE(min_duration >= 1 && max_duration >= min_duration, "generator: invalid duration range");
    SDT_REQUIRE(min_actions >= 1 && max_actions >= min_actions, "generator: invalid action-count range");
    SDT_REQUIRE(min_frames >= 1 && max_frames >= min_frames, "generator: invalid frame range");
    SDT_REQUIRE(static_cast<long>(min_actions) * min_duration <= max_frames &&
                    static_cast<long>(max_actions) * max_duration >= min_frames,
                "generator: duration and action ranges cannot produce a length in [min_frames, max_frames]");
    SDT_REQUIRE(exo_noise >= 0 && ego_noise >= 0 && drift_std >= 0 && class_scale >= 0,
                "generator: standard deviations must be >= 0");
    SDT_REQUIRE(drift_corr >= 0 && drift_corr < 1, "generator: drift_corr must be in [0, 1)");
    SDT_REQUIRE(view_gap >= 0 && view_gap <= 1, "generator: view_gap must be in [0, 1]");
  }

  /// Lower-noise and higher-noise presets.
  static GeneratorConfig preset(std::string_view name) {
    GeneratorConfig c;
    if (name == "clean") return c;
    if (name == "hard") {
      c.exo_noise = 0.3;
      c.ego_noise = 0.5;
      c.drift_std = 0.5;
      return c;
    }
    throw InvalidArgument("unknown generator preset '" + std::string(name) + "'");
  }
};

inline void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"num_classes", c.num_classes},   {"latent_dim", c.latent_dim},   {"feature_dim", c.feature_dim},
       {"min_duration", c.min_duration}, {"max_duration", c.max_duration}, {"min_actions", c.min_actions},
       {"max_actions", c.max_actions},   {"min_frames", c.min_frames},   {"max_frames", c.max_frames},
       {"class_scale", c.class_scale},   {"drift_std", c.drift_std},     {"drift_corr", c.drift_corr},
       {"exo_noise", c.exo_noise},       {"ego_noise", c.ego_noise},     {"view_gap", c.view_gap},
       {"ego_nonlinearity", c.ego_nonlinearity == EgoNonlinearity::Tanh ? "tanh" : "identity"},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  if (j.contains("preset")) c = GeneratorConfig::preset(j["preset"].get<std::string>());
#define SDT_GET(field) c.field = j.value(#field, c.field)
  SDT_GET(num_classes);
  SDT_GET(latent_dim);
  SDT_GET(feature_dim);
  SDT_GET(min_duration);
  SDT_GET(max_duration);
  SDT_GET(min_actions);
  SDT_GET(max_actions);
  SDT_GET(min_frames);
  SDT_GET(max_frames);
  SDT_GET(class_scale);
  SDT_GET(drift_std);
  SDT_GET(drift_corr);
  SDT_GET(exo_noise);
  SDT_GET(ego_noise);
  SDT_GET(view_gap);
  SDT_GET(seed);
#undef SDT_GET
  if (j.contains("ego_nonlinearity")) {
    const auto s = j["ego_nonlinearity"].get<std::string>();
    SDT_REQUIRE(s == "tanh" || s == "identity", "ego_nonlinearity must be 'tanh' or 'identity'");
    c.ego_nonlinearity = s == "tanh" ? EgoNonlinearity::Tanh : EgoNonlinearity::Identity;
  }
}

/// Class embeddings and view maps shared by every recording of a corpus.
struct WorldModel {
  MatD class_embeddings;  // C x k
  MatD exo_map;           // k x D (row-major: feature = latent * map)
  MatD ego_map;
};

inline WorldModel make_world(const GeneratorConfig& cfg) {
  cfg.validate();
  Rng rng(child_seed(cfg.seed, 0xC0FFEE));
  std::normal_distribution<double> n01(0.0, 1.0);
  WorldModel w;
  w.class_embeddings.resize(cfg.num_classes, cfg.latent_dim);
  for (Eigen::Index i = 0; i < w.class_embeddings.size(); ++i) w.class_embeddings.data()[i] = cfg.class_scale * n01(rng);
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
  w.exo_map.resize(cfg.latent_dim, cfg.feature_dim);
  MatD indep(cfg.latent_dim, cfg.feature_dim);
  for (Eigen::Index i = 0; i < w.exo_map.size(); ++i) w.exo_map.data()[i] = s * n01(rng);
  for (Eigen::Index i = 0; i < indep.size(); ++i) indep.data()[i] = s * n01(rng);
  const double g = cfg.view_gap;
  w.ego_map = std::sqrt(1.0 - g * g) * w.exo_map + g * indep;
  return w;
}

struct ActionScript {
  std::vector<ClassId> classes;
  std::vector<int> durations;
};

/// Class sequence without immediate repeats.
inline std::vector<ClassId> draw_classes(const GeneratorConfig& cfg, Rng& rng) {
  std::uniform_int_distribution<int> count(cfg.min_actions, cfg.max_actions);
  const int n = count(rng);
  std::vector<ClassId> out;
  std::uniform_int_distribution<int> first(0, cfg.num_classes - 1);
  std::uniform_int_distribution<int> other(0, cfg.num_classes - 2);
  for (int i = 0; i < n; ++i) {
    if (out.empty()) {
      out.push_back(first(rng));
    } else {
      int c = other(rng);
      if (c >= out.back()) ++c;
      out.push_back(c);
    }
  }
  return out;
}

/// Durations for a fixed class sequence, redrawn until the length fits.
inline std::vector<int> draw_durations(const GeneratorConfig& cfg, std::size_t actions, Rng& rng) {
  const long lo = static_cast<long>(actions) * cfg.min_duration, hi = static_cast<long>(actions) * cfg.max_duration;
  SDT_REQUIRE(lo <= cfg.max_frames && hi >= cfg.min_frames,
              "generator: " + std::to_string(actions) + " actions cannot fit the frame range");
  std::uniform_int_distribution<int> dur(cfg.min_duration, cfg.max_duration);
  std::vector<int> out(actions);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    for (auto& d : out) d = dur(rng);
    const long total = std::accumulate(out.begin(), out.end(), 0L);
    if (total >= cfg.min_frames && total <= cfg.max_frames) return out;
  }
  throw InvalidArgument("generator: could not draw durations within the frame range");
}

inline ActionScript draw_script(const GeneratorConfig& cfg, Rng& rng) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    auto classes = draw_classes(cfg, rng);
    const long n = static_cast<long>(classes.size());
    if (n * cfg.min_duration > cfg.max_frames || n * cfg.max_duration < cfg.min_frames) continue;
    auto durations = draw_durations(cfg, classes.size(), rng);
    return {std::move(classes), std::move(durations)};
  }
  throw InvalidArgument("generator: could not draw an action script within the frame range");
}

inline Segmentation script_segmentation(const ActionScript& s) {
  std::vector<Segment> segs;
  std::int64_t t = 0;
  for (std::size_t i = 0; i < s.classes.size(); ++i) {
    segs.push_back({t, t + s.durations[i], s.classes[i]});
    t += s.durations[i];
  }
  return Segmentation(std::move(segs), t);
}

/// Both synchronized views of one realisation of a script.
inline PairedRecording render_pair(const GeneratorConfig& cfg, const WorldModel& world, const ActionScript& script,
                                   const std::string& base_id, std::uint64_t seed) {
  Segmentation seg = script_segmentation(script);
  const FrameLabels frames = frames_from_segments(seg);
  const auto T = static_cast<Eigen::Index>(frames.size());
  Rng rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  MatD latent(T, cfg.latent_dim);
  RowVec<double> drift = RowVec<double>::Zero(cfg.latent_dim);
  for (Eigen::Index k = 0; k < drift.size(); ++k) drift(k) = cfg.drift_std * n01(rng);
  const double innov = cfg.drift_std * std::sqrt(1.0 - cfg.drift_corr * cfg.drift_corr);
  for (Eigen::Index t = 0; t < T; ++t) {
    if (t > 0)
      for (Eigen::Index k = 0; k < drift.size(); ++k) drift(k) = cfg.drift_corr * drift(k) + innov * n01(rng);
    latent.row(t) = world.class_embeddings.row(frames[static_cast<std::size_t>(t)]) + drift;
  }
  MatD exo = latent * world.exo_map;
  MatD ego = latent * world.ego_map;
  if (cfg.ego_nonlinearity == EgoNonlinearity::Tanh) ego = ego.array().tanh().matrix();
  for (Eigen::Index i = 0; i < exo.size(); ++i) exo.data()[i] += cfg.exo_noise * n01(rng);
  for (Eigen::Index i = 0; i < ego.size(); ++i) ego.data()[i] += cfg.ego_noise * n01(rng);
  PairedRecording p;
  p.exo.id = base_id + "_exo";
  p.ego.id = base_id + "_ego";
  p.exo.features.data = exo.cast<float>();
  p.ego.features.data = ego.cast<float>();
  p.exo.labels = seg;
  p.ego.labels = std::move(seg);
  return p;
}

struct CorpusCounts {
  int train_source = 40;
  int adapt_pair = 20;
  int test_target = 20;

  void validate() const {
    SDT_REQUIRE(train_source >= 1 && adapt_pair >= 1 && test_target >= 1, "corpus counts must be positive");
  }
};

inline void to_json(nlohmann::json& j, const CorpusCounts& c) {
  j = {{"train_source", c.train_source}, {"adapt_pair", c.adapt_pair}, {"test_target", c.test_target}};
}
inline void from_json(const nlohmann::json& j, CorpusCounts& c) {
  c.train_source = j.value("train_source", c.train_source);
  c.adapt_pair = j.value("adapt_pair", c.adapt_pair);
  c.test_target = j.value("test_target", c.test_target);
}

/// In-memory corpus with both views of every recording and its ground truth.
struct SyntheticCorpus {
  std::vector<PairedRecording> train;
  std::vector<PairedRecording> adapt;
  std::vector<PairedRecording> test;
};

/// Recording i of the corpus is rendered from child_seed(seed, i), so any
/// subset can be regenerated independently of the others.
inline SyntheticCorpus generate_synthetic(const GeneratorConfig& cfg, const CorpusCounts& counts) {
  cfg.validate();
  counts.validate();
  const WorldModel world = make_world(cfg);
  SyntheticCorpus out;
  std::uint64_t index = 0;
  auto make = [&](const std::string& prefix, int i) {
    const std::uint64_t s = child_seed(cfg.seed, ++index);
    Rng script_rng(child_seed(s, 1));
    const ActionScript script = draw_script(cfg, script_rng);
    char id[64];
    std::snprintf(id, sizeof id, "%s%03d", prefix.c_str(), i);
    return render_pair(cfg, world, script, id, child_seed(s, 2));
  };
  for (int i = 0; i < counts.train_source; ++i) out.train.push_back(make("train", i));
  for (int i = 0; i < counts.adapt_pair; ++i) out.adapt.push_back(make("adapt", i));
  for (int i = 0; i < counts.test_target; ++i) out.test.push_back(make("test", i));
  return out;
}

/// Writes FTSQ/CSV files plus manifest.json into `dir`; returns the manifest.
/// adapt_pair entries carry no labels.
inline CorpusManifest write_corpus(const SyntheticCorpus& corpus, int num_classes, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "features");
  fs::create_directories(dir / "labels");
  CorpusManifest m;
  m.num_classes = num_classes;
  m.root = dir;
  auto feat = [&](const Recording& r) {
    const fs::path rel = fs::path("features") / (r.id + ".ftsq");
    save_features(r.features, dir / rel);
    return rel;
  };
  auto lab = [&](const Recording& r) {
    const fs::path rel = fs::path("labels") / (base_key(r.id) + ".csv");
    save_labels(*r.labels, dir / rel);
    return rel;
  };
  for (const auto& p : corpus.train)
    m.entries.push_back({Role::TrainSource, feat(p.exo), feat(p.ego), lab(p.exo), p.exo.id});
  for (const auto& p : corpus.adapt)
    m.entries.push_back({Role::AdaptPair, feat(p.exo), feat(p.ego), std::nullopt, p.exo.id});
  for (const auto& p : corpus.test) {
    const fs::path l = lab(p.exo);
    m.entries.push_back({Role::TestSource, feat(p.exo), std::nullopt, l, p.exo.id});
    m.entries.push_back({Role::TestTarget, feat(p.ego), std::nullopt, l, p.ego.id});
  }
  save_manifest(m, dir / "manifest.json");
  return load_manifest(dir / "manifest.json");
}

inline CorpusManifest generate_corpus(const GeneratorConfig& cfg, const CorpusCounts& counts,
                                      const std::filesystem::path& dir) {
  return write_corpus(generate_synthetic(cfg, counts), cfg.num_classes, dir);
}

/// Same in-memory view of a synthetic corpus as load_corpus would give.
inline Corpus to_corpus(const SyntheticCorpus& s, int num_classes) {
  Corpus c;
  c.num_classes = num_classes;
  for (const auto& p : s.train) {
    c.train_source.push_back(p.exo);
    c.train_source_ego.push_back(p.ego);
  }
  for (const auto& p : s.adapt) {
    PairedRecording q = p;
    q.exo.labels.reset();
    q.ego.labels.reset();
    c.adapt_pairs.push_back(std::move(q));
  }
  for (const auto& p : s.test) {
    c.test_source.push_back(p.exo);
    c.test_target.push_back(p.ego);
  }
  return c;
}

/// Exo view of one realisation and ego view of another realisation of the
/// same script. Durations, drift and noise are independent, so the two are
/// not frame-synchronized.
struct SameProcedurePair {
  Recording exo;
  Recording ego;
};

inline SameProcedurePair generate_same_procedure_pair(const GeneratorConfig& cfg, std::uint64_t script_seed) {
  const WorldModel world = make_world(cfg);
  Rng rng(child_seed(script_seed, 0));
  const auto classes = draw_classes(cfg, rng);
  Rng ra(child_seed(script_seed, 1)), rb(child_seed(script_seed, 2));
  const ActionScript sa{classes, draw_durations(cfg, classes.size(), ra)};
  const ActionScript sb{classes, draw_durations(cfg, classes.size(), rb)};
  const std::string id = "proc" + std::to_string(script_seed);
  PairedRecording a = render_pair(cfg, world, sa, id + "a", child_seed(script_seed, 3));
  PairedRecording b = render_pair(cfg, world, sb, id + "b", child_seed(script_seed, 4));
  return {std::move(a.exo), std::move(b.ego)};
}

struct DropConfig {
  double rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    SDT_REQUIRE(rate >= 0.0 && rate <= 0.1, "drop rate must lie in [0, 0.1]");
  }
};

namespace detail {

inline Recording keep_frames(const Recording& r, const std::vector<Eigen::Index>& kept, Eigen::Index length) {
  Recording out;
  out.id = r.id;
  out.features.frame_rate = r.features.frame_rate;
  out.features.data.resize(length, r.features.data.cols());
  for (Eigen::Index t = 0; t < length; ++t) out.features.data.row(t) = r.features.data.row(kept[t]);
  if (r.labels) {
    const FrameLabels all = frames_from_segments(*r.labels);
    FrameLabels sub(static_cast<std::size_t>(length));
    for (Eigen::Index t = 0; t < length; ++t) sub[static_cast<std::size_t>(t)] = all[static_cast<std::size_t>(kept[t])];
    out.labels = segments_from_frames(sub);
  }
  return out;
}

}  // namespace detail

/// Independently drops each view's frames with probability `rate`, then
/// truncates both streams to the shorter one.
inline PairedRecording apply_frame_drops(const PairedRecording& pair, const DropConfig& cfg) {
  cfg.validate();
  if (cfg.rate == 0.0) return pair;
  auto survivors = [&](Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    std::bernoulli_distribution drop(cfg.rate);
    std::vector<Eigen::Index> kept;
    for (Eigen::Index t = 0; t < n; ++t)
      if (!drop(rng)) kept.push_back(t);
    return kept;
  };
  const auto exo_kept = survivors(pair.exo.features.frames(), child_seed(cfg.seed, 0));
  const auto ego_kept = survivors(pair.ego.features.frames(), child_seed(cfg.seed, 1));
  const auto length = static_cast<Eigen::Index>(std::min(exo_kept.size(), ego_kept.size()));
  SDT_REQUIRE(length > 0, "apply_frame_drops: no frames left after dropping");
  return {detail::keep_frames(pair.exo, exo_kept, length), detail::keep_frames(pair.ego, ego_kept, length)};
}

/// First ceil(fraction * m) entries of one seeded shuffle, returned in the
/// original order. Smaller fractions give subsets of larger ones.
template <typename Item>
std::vector<Item> subset_pairs(const std::vector<Item>& pairs, double fraction, std::uint64_t seed) {
  SDT_REQUIRE(fraction > 0.0 && fraction <= 1.0, "subset_pairs: fraction must lie in (0, 1]");
  const auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(pairs.size()) - 1e-9));
  SDT_REQUIRE(count >= 1, "subset_pairs: empty subset");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(count);
  std::sort(order.begin(), order.end());
  std::vector<Item> out;
  out.reserve(count);
  for (std::size_t i : order) out.push_back(pairs[i]);
  return out;
}

}  // namespace sdt
