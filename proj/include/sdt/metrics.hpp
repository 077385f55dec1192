// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Segment- and frame-level temporal action segmentation measures.

#pragma once

#include "sdt/seqcore.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace sdt {

inline constexpr std::array<double, 3> kF1Thresholds = {0.10, 0.25, 0.50};

struct MetricReport {
  double edit = 0.0;
  std::map<double, double> f1;  // threshold -> percent
  double mof = 0.0;

  bool operator==(const MetricReport&) const = default;
};

struct MetricConfig {
  std::optional<ClassId> background_label;
};

/// Levenshtein distance between two label sequences (two-row DP).
inline std::size_t levenshtein(std::span<const ClassId> a, std::span<const ClassId> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline std::vector<ClassId> segment_labels(std::span<const Segment> segs) {
  std::vector<ClassId> out;
  out.reserve(segs.size());
  for (const Segment& s : segs) out.push_back(s.label);
  return out;
}

inline double edit_score(std::span<const Segment> pred, std::span<const Segment> gt) {
  const std::size_t n = std::max(pred.size(), gt.size());
  if (n == 0) return 100.0;
  const auto a = segment_labels(pred);
  const auto b = segment_labels(gt);
  const double dist = static_cast<double>(levenshtein(a, b));
  return std::clamp(100.0 * (1.0 - dist / static_cast<double>(n)), 0.0, 100.0);
}

inline double edit_score(const Segmentation& pred, const Segmentation& gt) {
  return edit_score(pred.segments(), gt.segments());
}

/// True/false positive and false negative counts of segmental F1 at one IoU threshold.
struct F1Counts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  double percent() const {
    // 2PR/(P+R) reduces to 2tp/(2tp+fp+fn); evaluated as one rational.
    const std::int64_t denom = 2 * tp + fp + fn;
    if (tp == 0 || denom == 0) return 0.0;
    return 100.0 * static_cast<double>(2 * tp) / static_cast<double>(denom);
  }
};

inline F1Counts f1_counts(std::span<const Segment> pred, std::span<const Segment> gt, double k) {
  SDT_REQUIRE(k > 0.0 && k < 1.0, "F1 threshold must lie in (0, 1)");
  F1Counts c;
  std::vector<bool> matched(gt.size(), false);
  for (const Segment& p : pred) {
    double best_iou = -1.0;
    std::size_t best = gt.size();
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (gt[g].label != p.label) continue;
      const std::int64_t inter = std::max<std::int64_t>(0, std::min(p.end, gt[g].end) - std::max(p.start, gt[g].start));
      const std::int64_t uni = std::max(p.end, gt[g].end) - std::min(p.start, gt[g].start);
      const double iou = static_cast<double>(inter) / static_cast<double>(uni);
      if (iou > best_iou) {
        best_iou = iou;
        best = g;
      }
    }
    if (best < gt.size() && best_iou >= k && !matched[best]) {
      ++c.tp;
      matched[best] = true;
    } else {
      ++c.fp;
    }
  }
  c.fn = static_cast<std::int64_t>(std::count(matched.begin(), matched.end(), false));
  return c;
}

inline double f1_at_k(std::span<const Segment> pred, std::span<const Segment> gt, double k) {
  return f1_counts(pred, gt, k).percent();
}

inline double f1_at_k(const Segmentation& pred, const Segmentation& gt, double k) {
  return f1_at_k(pred.segments(), gt.segments(), k);
}

/// Frame accuracy, skipping frames whose ground truth is the background label.
inline double mof(std::span<const ClassId> pred, std::span<const ClassId> gt,
                  std::optional<ClassId> background = std::nullopt) {
  SDT_REQUIRE(pred.size() == gt.size(), "mof: prediction and ground truth lengths differ");
  std::int64_t correct = 0, total = 0;
  for (std::size_t t = 0; t < gt.size(); ++t) {
    if (background && gt[t] == *background) continue;
    ++total;
    if (pred[t] == gt[t]) ++correct;
  }
  SDT_REQUIRE(total > 0, "mof: no frames left to evaluate");
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

/// Segments of `labels` restricted to frames where `keep` holds. Removed
/// frames are spliced out of the timeline; runs on either side of a removed
/// stretch stay separate even when they share a label.
inline std::vector<Segment> spliced_segments(std::span<const ClassId> labels, const std::vector<bool>& keep) {
  std::vector<Segment> out;
  std::int64_t pos = 0;
  bool gap = true;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (!keep[t]) {
      gap = true;
      continue;
    }
    if (!gap && !out.empty() && out.back().label == labels[t]) {
      ++out.back().end;
    } else {
      out.push_back({pos, pos + 1, labels[t]});
    }
    gap = false;
    ++pos;
  }
  return out;
}

inline MetricReport report_all(std::span<const ClassId> pred, std::span<const ClassId> gt,
                               const MetricConfig& cfg = {}) {
  SDT_REQUIRE(pred.size() == gt.size(), "report_all: prediction and ground truth lengths differ");
  SDT_REQUIRE(!gt.empty(), "report_all: empty input");
  std::vector<bool> keep(gt.size(), true);
  if (cfg.background_label)
    for (std::size_t t = 0; t < gt.size(); ++t) keep[t] = gt[t] != *cfg.background_label;
  MetricReport r;
  r.mof = mof(pred, gt, cfg.background_label);
  const auto ps = spliced_segments(pred, keep);
  const auto gs = spliced_segments(gt, keep);
  r.edit = edit_score(ps, gs);
  for (double k : kF1Thresholds) r.f1[k] = f1_at_k(ps, gs, k);
  return r;
}

/// Corpus-level report: edit averaged over recordings, F1 from pooled
/// tp/fp/fn counts, MoF over all evaluated frames.
inline MetricReport evaluate_corpus(const std::vector<FrameLabels>& preds, const std::vector<FrameLabels>& gts,
                                    const MetricConfig& cfg = {}) {
  SDT_REQUIRE(preds.size() == gts.size(), "evaluate_corpus: prediction count differs from ground truth count");
  SDT_REQUIRE(!gts.empty(), "evaluate_corpus: no recordings");
  std::array<F1Counts, kF1Thresholds.size()> counts{};
  double edit_sum = 0.0;
  std::int64_t correct = 0, total = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto& p = preds[i];
    const auto& g = gts[i];
    SDT_REQUIRE(p.size() == g.size(), "evaluate_corpus: length mismatch in recording " + std::to_string(i));
    std::vector<bool> keep(g.size(), true);
    for (std::size_t t = 0; t < g.size(); ++t) {
      if (cfg.background_label && g[t] == *cfg.background_label) {
        keep[t] = false;
        continue;
      }
      ++total;
      if (p[t] == g[t]) ++correct;
    }
    const auto ps = spliced_segments(p, keep);
    const auto gs = spliced_segments(g, keep);
    edit_sum += edit_score(ps, gs);
    for (std::size_t k = 0; k < kF1Thresholds.size(); ++k) {
      const F1Counts c = f1_counts(ps, gs, kF1Thresholds[k]);
      counts[k].tp += c.tp;
      counts[k].fp += c.fp;
      counts[k].fn += c.fn;
    }
  }
  SDT_REQUIRE(total > 0, "evaluate_corpus: no frames left to evaluate");
  MetricReport r;
  r.edit = edit_sum / static_cast<double>(gts.size());
  r.mof = 100.0 * static_cast<double>(correct) / static_cast<double>(total);
  for (std::size_t k = 0; k < kF1Thresholds.size(); ++k) r.f1[kF1Thresholds[k]] = counts[k].percent();
  return r;
}

}  // namespace sdt
