// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration: oracles, the no-adaptation baseline, distillation
// and competitor adaptation runs, the three ablations, the segment retrieval
// probe, and report files.
//
// Every run is repeated over a list of seeds. A seed fixes the teacher's
// initialisation and data order and every random choice downstream of it, so
// (corpus, config, seed) determines all outputs.

#pragma once

#include "sdt/baselines.hpp"
#include "sdt/checkpoint.hpp"
#include "sdt/distill.hpp"
#include "sdt/metrics.hpp"
#include "sdt/synthgen.hpp"
#include "sdt/tasmodel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace sdt {

using Scalar = float;  // precision of all experiment runs

enum class Task { OracleSource, OracleTarget, NoAdaptation, Distill, BaselineAdapt };

inline std::string_view task_name(Task t) {
  switch (t) {
    case Task::OracleSource: return "oracle_source";
    case Task::OracleTarget: return "oracle_target";
    case Task::NoAdaptation: return "no_adaptation";
    case Task::Distill: return "distill";
    case Task::BaselineAdapt: return "baseline_adapt";
  }
  return "?";
}

inline Task parse_task(std::string_view s) {
  for (Task t : {Task::OracleSource, Task::OracleTarget, Task::NoAdaptation, Task::Distill, Task::BaselineAdapt})
    if (task_name(t) == s) return t;
  throw InvalidArgument("unknown task '" + std::string(s) + "'");
}

inline const std::vector<double> kDefaultFractions = {0.1, 0.15, 0.2, 0.25, 0.5, 0.75, 1.0};
inline const std::vector<double> kDefaultDropRates = {0.0, 0.005, 0.015, 0.02, 0.025, 0.03};
inline const std::vector<std::vector<int>> kDefaultLayerSets = {{1}, {1, 2}, {1, 2, 3}, {1, 2, 3, 4}, {1, 2, 3, 4, 5}};

struct ExperimentConfig {
  // Corpus: a manifest, or an in-memory synthetic corpus from `generator`.
  // The generator also supplies same_procedure pairs when a manifest is used.
  std::filesystem::path manifest;
  std::optional<GeneratorConfig> generator;
  CorpusCounts counts;

  Task task = Task::Distill;
  TcnConfig model;  // input_dim, num_classes and seed are filled in per run
  TrainConfig train;
  DistillConfig distill;
  AdaptLossConfig adapt;
  std::vector<std::uint64_t> seeds = {1, 2, 3};

  // Directory searched for teacher_seed<n>.sdtc before training a teacher.
  std::filesystem::path teacher_dir;

  std::vector<double> fractions = kDefaultFractions;
  std::vector<double> drop_rates = kDefaultDropRates;
  std::vector<std::vector<int>> layer_sets = kDefaultLayerSets;
  int retrieval_k = 5;

  void validate() const {
    SDT_REQUIRE(!seeds.empty(), "config: seeds must not be empty");
    SDT_REQUIRE(!manifest.empty() || generator, "config: need a manifest or a generator section");
    if (generator) generator->validate();
    counts.validate();
    train.validate();
    distill.adapter.validate();
    distill.tas.validate();
    adapt.validate();
    if (task == Task::BaselineAdapt && adapt.pairing == Pairing::SameProcedure)
      SDT_REQUIRE(generator.has_value(), "config: same_procedure pairing needs a generator section");
    SDT_REQUIRE(retrieval_k >= 1, "config: retrieval_k must be >= 1");
    for (double f : fractions) SDT_REQUIRE(f >= 0.0 && f <= 1.0, "config: pair fractions must lie in [0, 1]");
    for (double r : drop_rates) DropConfig{r, 0}.validate();
  }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"task", std::string(task_name(c.task))},
       {"counts", c.counts},
       {"model", c.model},
       {"train", c.train},
       {"distill", c.distill},
       {"adapt", c.adapt},
       {"seeds", c.seeds},
       {"fractions", c.fractions},
       {"drop_rates", c.drop_rates},
       {"layer_sets", c.layer_sets},
       {"retrieval_k", c.retrieval_k}};
  j["manifest"] = c.manifest.generic_string();
  j["generator"] = c.generator ? nlohmann::json(*c.generator) : nlohmann::json(nullptr);
  j["teacher_dir"] = c.teacher_dir.generic_string();
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  SDT_REQUIRE(j.is_object(), "config: top level must be an object");
  if (j.contains("manifest")) c.manifest = j["manifest"].get<std::string>();
  if (j.contains("generator") && !j["generator"].is_null()) c.generator = j["generator"].get<GeneratorConfig>();
  if (j.contains("counts")) c.counts = j["counts"].get<CorpusCounts>();
  if (j.contains("task")) c.task = parse_task(j["task"].get<std::string>());
  if (j.contains("model")) c.model = j["model"].get<TcnConfig>();
  if (j.contains("train")) c.train = j["train"].get<TrainConfig>();
  if (j.contains("distill")) c.distill = j["distill"].get<DistillConfig>();
  if (j.contains("adapt")) c.adapt = j["adapt"].get<AdaptLossConfig>();
  c.seeds = j.value("seeds", c.seeds);
  if (j.contains("teacher_dir")) c.teacher_dir = j["teacher_dir"].get<std::string>();
  c.fractions = j.value("fractions", c.fractions);
  c.drop_rates = j.value("drop_rates", c.drop_rates);
  c.layer_sets = j.value("layer_sets", c.layer_sets);
  c.retrieval_k = j.value("retrieval_k", c.retrieval_k);
}

/// Reads a config file; relative manifest and teacher paths resolve against
/// the file's directory.
inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("config " + path.string() + ": " + e.what(), e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  ExperimentConfig c;
  try {
    c = j.get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("config " + path.string() + ": " + e.what());
  }
  const auto base = path.parent_path();
  if (!c.manifest.empty() && c.manifest.is_relative()) c.manifest = base / c.manifest;
  if (!c.teacher_dir.empty() && c.teacher_dir.is_relative()) c.teacher_dir = base / c.teacher_dir;
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Results

inline void to_json(nlohmann::json& j, const MetricReport& r) {
  j = {{"edit", r.edit}, {"mof", r.mof}};
  for (const auto& [k, v] : r.f1) {
    char key[16];
    std::snprintf(key, sizeof key, "f1_%02d", static_cast<int>(std::lround(k * 100)));
    j[key] = v;
  }
}

inline void from_json(const nlohmann::json& j, MetricReport& r) {
  r.edit = j.at("edit").get<double>();
  r.mof = j.at("mof").get<double>();
  r.f1.clear();
  for (double k : kF1Thresholds) {
    char key[16];
    std::snprintf(key, sizeof key, "f1_%02d", static_cast<int>(std::lround(k * 100)));
    r.f1[k] = j.at(key).get<double>();
  }
}

/// Metric values in table column order: Edit, F1@10, F1@25, F1@50, MoF.
inline std::vector<double> metric_columns(const MetricReport& r) {
  std::vector<double> out{r.edit};
  for (double k : kF1Thresholds) out.push_back(r.f1.at(k));
  out.push_back(r.mof);
  return out;
}

inline MetricReport metrics_from_columns(const std::vector<double>& v) {
  MetricReport r;
  r.edit = v[0];
  for (std::size_t k = 0; k < kF1Thresholds.size(); ++k) r.f1[kF1Thresholds[k]] = v[k + 1];
  r.mof = v.back();
  return r;
}

/// Mean and sample standard deviation (0 for a single value).
inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  SDT_REQUIRE(!xs.empty(), "mean_std: no values");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

struct ExperimentResult {
  std::string label;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricReport> per_seed;
  MetricReport mean;
  MetricReport stddev;
  nlohmann::json config;
  // Kept out of result.json so reruns stay byte-identical.
  double wall_clock_seconds = 0.0;

  /// Recomputes mean and stddev from per_seed.
  void aggregate() {
    SDT_REQUIRE(!per_seed.empty() && per_seed.size() == seeds.size(), "ExperimentResult: seed count mismatch");
    const std::size_t n = metric_columns(per_seed.front()).size();
    std::vector<double> m(n), s(n);
    for (std::size_t c = 0; c < n; ++c) {
      std::vector<double> xs;
      for (const auto& r : per_seed) xs.push_back(metric_columns(r)[c]);
      std::tie(m[c], s[c]) = mean_std(xs);
    }
    mean = metrics_from_columns(m);
    stddev = metrics_from_columns(s);
  }

  bool operator==(const ExperimentResult& o) const {
    return label == o.label && seeds == o.seeds && per_seed == o.per_seed && mean == o.mean && stddev == o.stddev &&
           config == o.config;
  }
};

inline void to_json(nlohmann::json& j, const ExperimentResult& r) {
  j = {{"label", r.label}, {"seeds", r.seeds}, {"per_seed", r.per_seed},
       {"mean", r.mean},   {"std", r.stddev},  {"config", r.config}};
}

inline void from_json(const nlohmann::json& j, ExperimentResult& r) {
  r.label = j.at("label").get<std::string>();
  r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  r.per_seed = j.at("per_seed").get<std::vector<MetricReport>>();
  r.mean = j.at("mean").get<MetricReport>();
  r.stddev = j.at("std").get<MetricReport>();
  r.config = j.value("config", nlohmann::json());
}

/// Hit rate of the retrieval probe; one row per ego feature map.
struct RetrievalResult {
  std::string label;
  std::vector<std::uint64_t> seeds;
  std::vector<double> per_seed;
  double mean = 0.0;
  double stddev = 0.0;

  void aggregate() { std::tie(mean, stddev) = mean_std(per_seed); }
  bool operator==(const RetrievalResult&) const = default;
};

inline void to_json(nlohmann::json& j, const RetrievalResult& r) {
  j = {{"label", r.label}, {"seeds", r.seeds}, {"per_seed", r.per_seed}, {"mean", r.mean}, {"std", r.stddev}};
}

inline void from_json(const nlohmann::json& j, RetrievalResult& r) {
  r.label = j.at("label").get<std::string>();
  r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  r.per_seed = j.at("per_seed").get<std::vector<double>>();
  r.mean = j.at("mean").get<double>();
  r.stddev = j.at("std").get<double>();
}

// ---------------------------------------------------------------------------
// Retrieval probe

struct SegmentFeature {
  ClassId label = 0;
  RowVec<double> mean;
};

/// Mean feature vector of every ground-truth segment of `labels`.
inline std::vector<SegmentFeature> segment_features(const MatD& features, const Segmentation& labels) {
  SDT_REQUIRE(features.rows() == labels.num_frames(), "segment_features: feature and label lengths differ");
  std::vector<SegmentFeature> out;
  for (const auto& s : labels.segments())
    out.push_back({s.label, features.middleRows(s.start, s.end - s.start).colwise().mean()});
  return out;
}

/// Percentage of queries whose k nearest candidates (Euclidean) contain one
/// of the same class. Distance ties go to the earlier candidate.
inline double retrieval_hit_rate(const std::vector<SegmentFeature>& queries,
                                 const std::vector<SegmentFeature>& candidates, int k) {
  SDT_REQUIRE(k >= 1, "retrieval: k must be >= 1");
  SDT_REQUIRE(!queries.empty(), "retrieval: no query segments");
  SDT_REQUIRE(candidates.size() >= static_cast<std::size_t>(k),
              "retrieval: " + std::to_string(candidates.size()) + " candidate segments, need at least " +
                  std::to_string(k));
  std::size_t hits = 0;
  std::vector<std::pair<double, std::size_t>> dist(candidates.size());
  for (const auto& q : queries) {
    SDT_REQUIRE(q.mean.size() == candidates.front().mean.size(), "retrieval: feature dimensions differ");
    for (std::size_t i = 0; i < candidates.size(); ++i) dist[i] = {(candidates[i].mean - q.mean).squaredNorm(), i};
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    for (int n = 0; n < k; ++n)
      if (candidates[dist[n].second].label == q.label) {
        ++hits;
        break;
      }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(queries.size());
}

using EgoFeatureFn = std::function<MatD(const MatD&)>;

/// Exo test segments (raw features) query ego test segments mapped by `ego_fn`.
inline double retrieval_correspondence(std::span<const Recording> exo_test, std::span<const Recording> ego_test,
                                       const EgoFeatureFn& ego_fn, int k = 5) {
  std::vector<SegmentFeature> queries, candidates;
  for (const auto& r : exo_test) {
    SDT_REQUIRE(r.labels.has_value(), "retrieval: exo recording " + r.id + " has no labels");
    const auto segs = segment_features(r.features.data.cast<double>(), *r.labels);
    queries.insert(queries.end(), segs.begin(), segs.end());
  }
  for (const auto& r : ego_test) {
    SDT_REQUIRE(r.labels.has_value(), "retrieval: ego recording " + r.id + " has no labels");
    const MatD mapped = ego_fn ? ego_fn(r.features.data.cast<double>()) : r.features.data.cast<double>();
    const auto segs = segment_features(mapped, *r.labels);
    candidates.insert(candidates.end(), segs.begin(), segs.end());
  }
  return retrieval_hit_rate(queries, candidates, k);
}

// ---------------------------------------------------------------------------
// Evaluation helpers

template <typename T>
MetricReport evaluate_model(const TcnModel<T>& model, std::span<const Recording> test,
                            const std::type_identity_t<ResidualAdapter<T>>* adapter = nullptr,
                            const MetricConfig& mc = {}) {
  SDT_REQUIRE(!test.empty(), "evaluate_model: empty test split");
  std::vector<FrameLabels> preds, gts;
  for (const auto& r : test) {
    SDT_REQUIRE(r.labels.has_value(), "evaluate_model: test recording " + r.id + " has no labels");
    Mat<T> x = r.features.data.cast<T>();
    if (adapter) x = adapter->apply(x);
    preds.push_back(predict_labels(forward(model, x)));
    gts.push_back(frames_from_segments(*r.labels));
  }
  return evaluate_corpus(preds, gts, mc);
}

/// Pairs exo of recording perm[i] with ego of recording i, perm a seeded
/// derangement, so no pair shows the same recording.
template <typename T>
std::vector<FeaturePair<T>> random_video_pairs(std::span<const FeaturePair<T>> pairs, std::uint64_t seed) {
  SDT_REQUIRE(pairs.size() >= 2, "random_videos pairing needs at least two adaptation pairs");
  std::vector<std::size_t> perm(pairs.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  // Sattolo's algorithm yields a single cycle, hence no fixed points.
  for (std::size_t i = perm.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i], perm[pick(rng)]);
  }
  std::vector<FeaturePair<T>> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) out.push_back({pairs[perm[i]].exo, pairs[i].ego});
  return out;
}

template <typename T>
std::vector<FeaturePair<T>> same_procedure_pairs(const GeneratorConfig& gen, std::size_t count) {
  std::vector<FeaturePair<T>> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto p = generate_same_procedure_pair(gen, child_seed(gen.seed, 1000 + i));
    out.push_back({p.exo.features.data.cast<T>(), p.ego.features.data.cast<T>()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lab

/// Holds the corpus and the per-seed teacher cache for one configuration.
/// Runs over seeds execute on up to worker_threads() threads; every seed
/// works on its own state and results are collected in seed order.
class Lab {
 public:
  explicit Lab(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (!cfg_.manifest.empty()) {
      corpus_ = load_corpus(load_manifest(cfg_.manifest));
    } else {
      corpus_ = to_corpus(generate_synthetic(*cfg_.generator, cfg_.counts), cfg_.generator->num_classes);
    }
    SDT_REQUIRE(!corpus_.train_source.empty(), "corpus has no train_source recordings");
    SDT_REQUIRE(!corpus_.test_target.empty(), "corpus has no test_target recordings");
    metric_cfg_.background_label = corpus_.background_label;
  }

  Lab(ExperimentConfig cfg, Corpus corpus) : cfg_(std::move(cfg)), corpus_(std::move(corpus)) {
    SDT_REQUIRE(!cfg_.seeds.empty(), "config: seeds must not be empty");
    metric_cfg_.background_label = corpus_.background_label;
  }

  const ExperimentConfig& config() const { return cfg_; }
  const Corpus& corpus() const { return corpus_; }

  /// Checkpoints of every teacher, student and adapter are written here when set.
  void set_checkpoint_dir(std::filesystem::path dir) { checkpoint_dir_ = std::move(dir); }

  /// Lines of log.jsonl produced so far, in deterministic order.
  const std::vector<nlohmann::json>& log() const { return log_; }

  TcnConfig model_config(std::uint64_t seed) const {
    TcnConfig m = cfg_.model;
    m.input_dim = static_cast<int>(corpus_.train_source.front().features.dim());
    m.num_classes = corpus_.num_classes;
    m.seed = seed;
    return m;
  }

  /// Teacher trained on labeled exo recordings, cached per seed.
  const TcnModel<Scalar>& teacher(std::uint64_t seed, std::vector<nlohmann::json>* log = nullptr) {
    std::shared_ptr<TeacherSlot> slot;
    {
      std::lock_guard lock(mu_);
      auto& s = teachers_[seed];
      if (!s) s = std::make_shared<TeacherSlot>();
      slot = s;
    }
    std::call_once(slot->once, [&] {
      const TcnConfig mc = model_config(seed);
      const auto file = "teacher_seed" + std::to_string(seed) + ".sdtc";
      if (!cfg_.teacher_dir.empty() && std::filesystem::exists(cfg_.teacher_dir / file)) {
        slot->model = load_tcn_checkpoint<Scalar>(cfg_.teacher_dir / file);
        SDT_REQUIRE(slot->model.config() == mc, "teacher checkpoint " + file + " does not match the model config");
      } else {
        TrainConfig tc = cfg_.train;
        tc.seed = seed;
        TrainLog tl;
        slot->model = train_supervised(labeled_sequences<Scalar>(corpus_.train_source), mc, tc, &tl);
        append_log(log, "teacher", "", seed, tl);
      }
      if (!checkpoint_dir_.empty()) save_checkpoint(slot->model, checkpoint_dir_ / file);
    });
    return slot->model;
  }

  ExperimentResult run(Task task) {
    switch (task) {
      case Task::OracleSource: return run_oracle(false);
      case Task::OracleTarget: return run_oracle(true);
      case Task::NoAdaptation: return run_no_adaptation();
      case Task::Distill: return run_distillation(cfg_.distill);
      case Task::BaselineAdapt: return run_baseline_adaptation(cfg_.adapt);
    }
    throw InvalidArgument("unknown task");
  }

  /// Source oracle: teacher on test_source. Target oracle: a model trained on
  /// the ego views of the training recordings, evaluated on test_target.
  ExperimentResult run_oracle(bool target) {
    const std::string label = target ? "oracle_target" : "oracle_source";
    if (!target) {
      SDT_REQUIRE(!corpus_.test_source.empty(), "oracle_source: corpus has no test_source recordings");
      return over_seeds(label, [&](std::uint64_t seed, Log& log) {
        return evaluate_model(teacher(seed, &log), corpus_.test_source, nullptr, metric_cfg_);
      });
    }
    SDT_REQUIRE(corpus_.train_source_ego.size() == corpus_.train_source.size() && !corpus_.train_source_ego.empty(),
                "oracle_target: training recordings lack labeled ego views");
    return over_seeds(label, [&](std::uint64_t seed, Log& log) {
      TrainConfig tc = cfg_.train;
      tc.seed = seed;
      TrainLog tl;
      const auto model = train_supervised(labeled_sequences<Scalar>(corpus_.train_source_ego), model_config(seed), tc, &tl);
      append_log(&log, "ego_oracle", label, seed, tl);
      return evaluate_model(model, corpus_.test_target, nullptr, metric_cfg_);
    });
  }

  ExperimentResult run_no_adaptation() {
    return over_seeds("no_adaptation", [&](std::uint64_t seed, Log& log) {
      return evaluate_model(teacher(seed, &log), corpus_.test_target, nullptr, metric_cfg_);
    });
  }

  /// Distills with `dcfg` on the corpus's synchronized pairs, or on the pairs
  /// built per seed by `pairs_for_seed` when given.
  ExperimentResult run_distillation(const DistillConfig& dcfg, const std::string& label = "distill",
                                    const std::function<std::vector<FeaturePair<Scalar>>(std::uint64_t)>&
                                        pairs_for_seed = {}) {
    auto res = over_seeds(label, [&](std::uint64_t seed, Log& log) {
      return distill_one(dcfg, label, seed, log, pairs_for_seed ? pairs_for_seed(seed) : sync_pairs());
    });
    res.config = dcfg;
    return res;
  }

  ExperimentResult run_baseline_adaptation(const AdaptLossConfig& acfg) {
    const std::string label(loss_kind_name(acfg.kind));
    auto res = over_seeds(label, [&](std::uint64_t seed, Log& log) {
      std::vector<FeaturePair<Scalar>> pairs;
      switch (acfg.pairing) {
        case Pairing::Synchronized: pairs = sync_pairs(); break;
        case Pairing::RandomVideos: {
          const auto sp = sync_pairs();
          pairs = random_video_pairs<Scalar>(sp, child_seed(seed, 21));
          break;
        }
        case Pairing::SameProcedure:
          SDT_REQUIRE(cfg_.generator.has_value(), "same_procedure pairing needs a generator section");
          pairs = same_procedure_pairs<Scalar>(*cfg_.generator, corpus_.adapt_pairs.size());
          break;
      }
      TrainLog tl;
      const auto student = adapt_with_loss<Scalar>(teacher(seed, &log), pairs, acfg, cfg_.distill.tas, seed, &tl);
      append_log(&log, "student", label, seed, tl);
      save_model(student, "student_" + label, seed);
      return evaluate_model(student, corpus_.test_target, nullptr, metric_cfg_);
    });
    res.config = acfg;
    return res;
  }

  /// One distillation row per fraction of the adaptation pairs; subsets are
  /// nested. Fraction 0 performs no update and reports the teacher.
  std::vector<ExperimentResult> ablate_pair_amounts(const std::vector<double>& fractions) {
    std::vector<ExperimentResult> rows;
    for (double f : fractions) {
      SDT_REQUIRE(f >= 0.0 && f <= 1.0, "pair fraction must lie in [0, 1]");
      const std::string label = "fraction=" + format_number(f);
      if (f == 0.0) {
        auto r = run_no_adaptation();
        r.label = label;
        rows.push_back(std::move(r));
        continue;
      }
      rows.push_back(run_distillation(cfg_.distill, label, [&](std::uint64_t seed) {
        return subset_pairs(sync_pairs(), f, child_seed(seed, 31));
      }));
    }
    return rows;
  }

  /// One distillation row per frame-drop rate applied to the adaptation pairs.
  std::vector<ExperimentResult> ablate_drop_rates(const std::vector<double>& rates) {
    std::vector<ExperimentResult> rows;
    for (double rate : rates) {
      DropConfig{rate, 0}.validate();
      rows.push_back(run_distillation(cfg_.distill, "drop_rate=" + format_number(rate), [&](std::uint64_t seed) {
        std::vector<PairedRecording> dropped;
        for (std::size_t i = 0; i < corpus_.adapt_pairs.size(); ++i)
          dropped.push_back(apply_frame_drops(corpus_.adapt_pairs[i], {rate, child_seed(child_seed(seed, 41), i)}));
        return feature_pairs<Scalar>(dropped);
      }));
    }
    return rows;
  }

  /// One distillation row per decoder layer set.
  std::vector<ExperimentResult> ablate_layer_sets(const std::vector<std::vector<int>>& sets) {
    std::vector<ExperimentResult> rows;
    for (const auto& set : sets) {
      SDT_REQUIRE(!set.empty(), "layer set must not be empty");
      DistillConfig d = cfg_.distill;
      d.layer_set = set;
      std::string label = "layers={";
      for (std::size_t i = 0; i < set.size(); ++i) label += (i ? "," : "") + std::to_string(set[i]);
      rows.push_back(run_distillation(d, label + "}"));
    }
    return rows;
  }

  /// Hit rate with raw ego features and with ego features mapped by the
  /// adapter of feature distillation (trained on synchronized pairs per seed).
  std::vector<RetrievalResult> retrieval(int k) {
    SDT_REQUIRE(!corpus_.test_source.empty(), "retrieval: corpus has no test_source recordings");
    RetrievalResult raw{"raw_ego", cfg_.seeds, {}, 0, 0};
    RetrievalResult adapted{"adapted_ego", cfg_.seeds, {}, 0, 0};
    const double raw_rate = retrieval_correspondence(corpus_.test_source, corpus_.test_target, {}, k);
    std::vector<double> rates(cfg_.seeds.size());
    std::vector<Log> logs(cfg_.seeds.size());
    parallel_for(cfg_.seeds.size(), [&](std::size_t i) {
      const std::uint64_t seed = cfg_.seeds[i];
      TrainLog tl;
      const auto pairs = sync_pairs();
      const auto adapter = train_adapter<Scalar>(pairs, cfg_.distill.adapter, child_seed(seed, 11), &tl);
      append_log(&logs[i], "adapter", "adapted_ego", seed, tl);
      save_model(adapter, "adapter", seed);
      rates[i] = retrieval_correspondence(corpus_.test_source, corpus_.test_target, [&](const MatD& x) {
        return adapter.apply(x.cast<Scalar>()).template cast<double>().eval();
      }, k);
    });
    for (auto& l : logs) log_.insert(log_.end(), l.begin(), l.end());
    raw.per_seed.assign(cfg_.seeds.size(), raw_rate);
    adapted.per_seed = rates;
    raw.aggregate();
    adapted.aggregate();
    return {raw, adapted};
  }

 private:
  using Log = std::vector<nlohmann::json>;

  struct TeacherSlot {
    std::once_flag once;
    TcnModel<Scalar> model;
  };

  std::vector<FeaturePair<Scalar>> sync_pairs() const {
    SDT_REQUIRE(!corpus_.adapt_pairs.empty(), "corpus has no adapt_pair recordings");
    return feature_pairs<Scalar>(corpus_.adapt_pairs);
  }

  MetricReport distill_one(const DistillConfig& dcfg, const std::string& label, std::uint64_t seed, Log& log,
                           const std::vector<FeaturePair<Scalar>>& pairs) {
    DistillConfig d = dcfg;
    d.seed = seed;
    const auto res = distill_student<Scalar>(teacher(seed, &log), pairs, d);
    if (res.adapter) append_log(&log, "adapter", label, seed, res.adapter_log);
    if (d.stage != DistillStage::FeatureOnly) append_log(&log, "student", label, seed, res.tas_log);
    save_model(res.student, "student_" + label, seed);
    if (res.adapter) save_model(*res.adapter, "adapter_" + label, seed);
    return evaluate_model(res.student, corpus_.test_target, res.adapter ? &*res.adapter : nullptr, metric_cfg_);
  }

  template <typename Model>
  void save_model(const Model& m, const std::string& name, std::uint64_t seed) const {
    if (checkpoint_dir_.empty()) return;
    std::string file;
    for (char c : name) file += std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' ? c : '_';
    save_checkpoint(m, checkpoint_dir_ / (file + "_seed" + std::to_string(seed) + ".sdtc"));
  }

  static void append_log(Log* log, const std::string& stage, const std::string& row, std::uint64_t seed,
                         const TrainLog& tl) {
    if (!log) return;
    for (std::size_t e = 0; e < tl.epoch_loss.size(); ++e) {
      nlohmann::json j = {{"stage", stage}, {"seed", seed}, {"epoch", e}};
      j["loss"] = std::isfinite(tl.epoch_loss[e]) ? nlohmann::json(tl.epoch_loss[e]) : nlohmann::json(nullptr);
      if (!row.empty()) j["row"] = row;
      log->push_back(std::move(j));
    }
  }

  static void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(worker_threads(), n);
    if (workers <= 1) {
      for (std::size_t i = 0; i < n; ++i) fn(i);
      return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  ExperimentResult over_seeds(const std::string& label, const std::function<MetricReport(std::uint64_t, Log&)>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentResult res;
    res.label = label;
    res.seeds = cfg_.seeds;
    res.per_seed.resize(cfg_.seeds.size());
    std::vector<Log> logs(cfg_.seeds.size());
    parallel_for(cfg_.seeds.size(), [&](std::size_t i) { res.per_seed[i] = fn(cfg_.seeds[i], logs[i]); });
    for (auto& l : logs) log_.insert(log_.end(), l.begin(), l.end());
    res.aggregate();
    res.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  }

  static std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
  }

  ExperimentConfig cfg_;
  Corpus corpus_;
  MetricConfig metric_cfg_;
  std::filesystem::path checkpoint_dir_;
  std::mutex mu_;
  std::map<std::uint64_t, std::shared_ptr<TeacherSlot>> teachers_;
  std::vector<nlohmann::json> log_;
};

// ---------------------------------------------------------------------------
// Report files

/// Fixed-point text with `digits` decimals; exact binary ties round to even.
inline std::string format_fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

inline std::string metric_table_csv(const std::vector<ExperimentResult>& rows) {
  std::string out = "row,Edit,F1_10,F1_25,F1_50,MoF\n";
  for (const auto& r : rows) {
    out += r.label;
    for (double v : metric_columns(r.mean)) out += "," + format_fixed(v);
    out += "\n";
  }
  return out;
}

inline std::string retrieval_table_csv(const std::vector<RetrievalResult>& rows) {
  std::string out = "row,hit_rate\n";
  for (const auto& r : rows) out += r.label + "," + format_fixed(r.mean) + "\n";
  return out;
}

inline std::string jsonl(const std::vector<nlohmann::json>& lines) {
  std::string out;
  for (const auto& l : lines) out += l.dump() + "\n";
  return out;
}

/// Writes result.json (sorted keys, full double precision), table.csv and
/// log.jsonl into `dir`.
inline void emit_report(const std::string& command, const nlohmann::json& config,
                        const std::vector<ExperimentResult>& rows, const std::vector<nlohmann::json>& log,
                        const std::filesystem::path& dir) {
  SDT_REQUIRE(!rows.empty(), "emit_report: no results");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  nlohmann::json j = {{"command", command}, {"config", config}, {"rows", rows}};
  detail::write_file(dir / "result.json", j.dump(2) + "\n");
  detail::write_file(dir / "table.csv", metric_table_csv(rows));
  detail::write_file(dir / "log.jsonl", jsonl(log));
}

inline void emit_retrieval_report(const nlohmann::json& config, const std::vector<RetrievalResult>& rows,
                                  const std::vector<nlohmann::json>& log, const std::filesystem::path& dir) {
  SDT_REQUIRE(!rows.empty(), "emit_report: no results");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  nlohmann::json j = {{"command", "retrieve"}, {"config", config}, {"rows", rows}};
  detail::write_file(dir / "result.json", j.dump(2) + "\n");
  detail::write_file(dir / "table.csv", retrieval_table_csv(rows));
  detail::write_file(dir / "log.jsonl", jsonl(log));
}

/// Rows of a metric result.json written by emit_report.
inline std::vector<ExperimentResult> load_result_rows(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
    return j.at("rows").get<std::vector<ExperimentResult>>();
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("result " + path.string() + ": " + e.what(), e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("result " + path.string() + ": " + e.what());
  }
}

}  // namespace sdt
