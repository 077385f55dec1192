// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exo-to-ego knowledge distillation on synchronized, unlabeled pairs.
//
// Two mechanisms, usable separately or in sequence:
//  * feature distillation: a residual adapter maps ego features towards the
//    synchronized exo features (squared L2 over clip windows);
//  * TAS model distillation: a student copy of the teacher is trained so its
//    decoder feature maps on ego input match the frozen teacher's on exo input,
//    summed over a configurable set of decoder levels.

#pragma once

#include "sdt/tasmodel.hpp"

#include <algorithm>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

namespace sdt {

/// Label-free view of a synchronized pair; the only thing distillation sees.
template <typename T>
struct FeaturePair {
  Mat<T> exo;
  Mat<T> ego;
};

template <typename T>
std::vector<FeaturePair<T>> feature_pairs(std::span<const PairedRecording> pairs) {
  std::vector<FeaturePair<T>> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.exo.features.data.cast<T>(), p.ego.features.data.cast<T>()});
  return out;
}

// ---------------------------------------------------------------------------
// Residual adapter

struct AdapterConfig {
  int dim = 16;
  int hidden = 64;
  int blocks = 2;
  std::uint64_t seed = 0;

  void validate() const {
    SDT_REQUIRE(dim >= 1 && hidden >= 1 && blocks >= 1, "AdapterConfig: sizes must be >= 1");
  }
  bool operator==(const AdapterConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const AdapterConfig& c) {
  j = {{"dim", c.dim}, {"hidden", c.hidden}, {"blocks", c.blocks}, {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, AdapterConfig& c) {
  c.dim = j.value("dim", c.dim);
  c.hidden = j.value("hidden", c.hidden);
  c.blocks = j.value("blocks", c.blocks);
  c.seed = j.value("seed", c.seed);
}

/// x_{n+1} = x_n + relu(x_n W1 + b1) W2 + b2, applied frame-wise.
/// The output projection starts at zero, so a fresh adapter is the identity.
template <typename T>
class ResidualAdapter {
 public:
  ResidualAdapter() = default;
  explicit ResidualAdapter(const AdapterConfig& cfg) : ResidualAdapter(cfg, true) {}
  static ResidualAdapter zeros(const AdapterConfig& cfg) { return ResidualAdapter(cfg, false); }

  const AdapterConfig& config() const { return cfg_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

  struct Trace {
    std::vector<Mat<T>> inputs;  // x_n per block
    std::vector<Mat<T>> hidden;  // relu activations per block
    Mat<T> output;
  };

  Trace trace(const Mat<T>& x) const {
    SDT_REQUIRE(x.cols() == cfg_.dim, "adapter: input dimension mismatch");
    Trace tr;
    Mat<T> cur = x;
    for (int n = 0; n < cfg_.blocks; ++n) {
      Mat<T> h = cur * params_.view(slot(n, 0));
      h.rowwise() += params_.view(slot(n, 1)).row(0);
      h = h.cwiseMax(T(0));
      Mat<T> next = cur + h * params_.view(slot(n, 2));
      next.rowwise() += params_.view(slot(n, 3)).row(0);
      tr.inputs.push_back(std::move(cur));
      tr.hidden.push_back(std::move(h));
      cur = std::move(next);
    }
    tr.output = std::move(cur);
    return tr;
  }

  Mat<T> apply(const Mat<T>& x) const { return trace(x).output; }

  /// Accumulates parameter gradients into `grad`; returns dLoss/dInput.
  Mat<T> backward(const Trace& tr, const Mat<T>& dout, Buffer<T>& grad) const {
    Mat<T> g = dout;
    for (int n = cfg_.blocks - 1; n >= 0; --n) {
      const Mat<T>& h = tr.hidden[n];
      params_.view_in(grad, slot(n, 2)).noalias() += h.transpose() * g;
      params_.view_in(grad, slot(n, 3)) += g.colwise().sum();
      const Mat<T> gh = (g * params_.view(slot(n, 2)).transpose())
                            .cwiseProduct((h.array() > T(0)).matrix().template cast<T>());
      params_.view_in(grad, slot(n, 0)).noalias() += tr.inputs[n].transpose() * gh;
      params_.view_in(grad, slot(n, 1)) += gh.colwise().sum();
      g += gh * params_.view(slot(n, 0)).transpose();
    }
    return g;
  }

 private:
  ResidualAdapter(const AdapterConfig& cfg, bool random) : cfg_(cfg) {
    cfg_.validate();
    for (int n = 0; n < cfg_.blocks; ++n) {
      const std::string p = "block" + std::to_string(n + 1);
      params_.add(p + ".w1", cfg_.dim, cfg_.hidden);
      params_.add(p + ".b1", 1, cfg_.hidden);
      params_.add(p + ".w2", cfg_.hidden, cfg_.dim);
      params_.add(p + ".b2", 1, cfg_.dim);
    }
    if (!random) return;
    Rng rng(cfg_.seed);
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(double(cfg_.dim)), 1.0 / std::sqrt(double(cfg_.dim)));
    for (int n = 0; n < cfg_.blocks; ++n) {
      for (std::size_t s : {slot(n, 0), slot(n, 1)}) {
        const auto& sl = params_.slots()[s];
        for (std::size_t k = 0; k < sl.size(); ++k) params_.values()[sl.offset + k] = static_cast<T>(dist(rng));
      }
    }
  }

  static std::size_t slot(int block, int k) { return static_cast<std::size_t>(4 * block + k); }

  AdapterConfig cfg_;
  ParamSet<T> params_;
};

/// ||a - b||^2 over all entries; optional gradient w.r.t. `a`.
template <typename T>
T squared_error(const Mat<T>& a, const Mat<T>& b, Mat<T>* grad_a = nullptr) {
  SDT_REQUIRE(a.rows() == b.rows() && a.cols() == b.cols(), "squared_error: shape mismatch");
  const Mat<T> diff = a - b;
  if (grad_a) *grad_a = T(2) * diff;
  return diff.squaredNorm();
}

template <typename T>
struct FeatureDistillLoss {
  T value = 0;
  Buffer<T> grad;           // w.r.t. adapter parameters
  std::vector<Mat<T>> output_grad;  // w.r.t. each adapted clip
};

/// (1/M) sum_j ||adapter(ego_j) - exo_j||^2. The exo side is a constant target.
template <typename T>
FeatureDistillLoss<T> feature_distill_loss(const ResidualAdapter<T>& adapter, std::span<const Mat<T>> ego_clips,
                                           std::span<const Mat<T>> exo_clips) {
  SDT_REQUIRE(ego_clips.size() == exo_clips.size() && !ego_clips.empty(),
              "feature_distill_loss: need equally many non-zero ego and exo clips");
  FeatureDistillLoss<T> out;
  out.grad = adapter.params().zeros_like();
  const T inv_m = T(1) / static_cast<T>(ego_clips.size());
  for (std::size_t j = 0; j < ego_clips.size(); ++j) {
    SDT_REQUIRE(ego_clips[j].rows() == exo_clips[j].rows() && ego_clips[j].cols() == exo_clips[j].cols(),
                "feature_distill_loss: clip " + std::to_string(j) + " shape mismatch");
    const auto tr = adapter.trace(ego_clips[j]);
    Mat<T> g;
    out.value += inv_m * squared_error(tr.output, exo_clips[j], &g);
    g *= inv_m;
    adapter.backward(tr, g, out.grad);
    out.output_grad.push_back(std::move(g));
  }
  return out;
}

struct AdapterTrainConfig {
  int blocks = 2;
  int hidden = 64;
  double lr = 1e-2;  // plain SGD
  int epochs = 50;
  int patience = 10;
  int batch = 8;
  int window = 32;
  int stride = 16;
  // Global gradient-norm cap for each SGD step; 0 disables clipping.
  double clip_norm = 1.0;

  void validate() const {
    SDT_REQUIRE(clip_norm >= 0, "adapter: clip_norm must be >= 0");
    SDT_REQUIRE(blocks >= 1 && hidden >= 1, "adapter: sizes must be >= 1");
    SDT_REQUIRE(lr > 0 && epochs >= 1 && patience >= 0 && batch >= 1, "adapter: invalid optimizer settings");
    SDT_REQUIRE(window >= 1 && stride >= 1, "adapter: window and stride must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const AdapterTrainConfig& c) {
  j = {{"blocks", c.blocks}, {"hidden", c.hidden}, {"lr", c.lr},         {"epochs", c.epochs},
       {"patience", c.patience}, {"batch", c.batch}, {"window", c.window}, {"stride", c.stride},
       {"clip_norm", c.clip_norm}};
}
inline void from_json(const nlohmann::json& j, AdapterTrainConfig& c) {
  c.blocks = j.value("blocks", c.blocks);
  c.hidden = j.value("hidden", c.hidden);
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.patience = j.value("patience", c.patience);
  c.batch = j.value("batch", c.batch);
  c.window = j.value("window", c.window);
  c.stride = j.value("stride", c.stride);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
}

/// Start frames of the clip windows of a sequence of `frames` frames.
inline std::vector<std::int64_t> clip_starts(std::int64_t frames, int window, int stride) {
  std::vector<std::int64_t> out;
  if (frames <= window) return {0};
  for (std::int64_t s = 0; s + window <= frames; s += stride) out.push_back(s);
  return out;
}

template <typename T>
ResidualAdapter<T> train_adapter(std::span<const FeaturePair<T>> pairs, const AdapterTrainConfig& cfg,
                                 std::uint64_t seed, TrainLog* log = nullptr) {
  SDT_REQUIRE(!pairs.empty(), "train_adapter: empty pair corpus");
  cfg.validate();
  const int dim = static_cast<int>(pairs.front().ego.cols());
  std::vector<Mat<T>> ego, exo;
  for (const auto& p : pairs) {
    SDT_REQUIRE(p.ego.rows() == p.exo.rows() && p.ego.cols() == dim && p.exo.cols() == dim,
                "train_adapter: pairs must be synchronized and share one feature dimension");
    for (std::int64_t s : clip_starts(p.ego.rows(), cfg.window, cfg.stride)) {
      const std::int64_t n = std::min<std::int64_t>(cfg.window, p.ego.rows() - s);
      ego.push_back(p.ego.middleRows(s, n));
      exo.push_back(p.exo.middleRows(s, n));
    }
  }
  ResidualAdapter<T> adapter(AdapterConfig{dim, cfg.hidden, cfg.blocks, child_seed(seed, 0)});
  Rng rng(child_seed(seed, 1));
  std::vector<std::size_t> order(ego.size());
  std::iota(order.begin(), order.end(), 0);
  EarlyStopper stopper(cfg.patience, 0.0);
  Buffer<T> best = adapter.params().values();
  TrainLog local;
  std::vector<Mat<T>> bego, bexo;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch)) {
      bego.clear();
      bexo.clear();
      for (std::size_t k = b; k < std::min(order.size(), b + cfg.batch); ++k) {
        bego.push_back(ego[order[k]]);
        bexo.push_back(exo[order[k]]);
      }
      const auto loss = feature_distill_loss<T>(adapter, bego, bexo);
      sum += static_cast<double>(loss.value);
      ++batches;
      sgd_step(adapter.params().values(), clip_by_norm(loss.grad, cfg.clip_norm), cfg.lr);
    }
    const double epoch_loss = sum / static_cast<double>(batches);
    local.epoch_loss.push_back(epoch_loss);
    if (!std::isfinite(epoch_loss)) break;
    if (stopper.update(epoch_loss)) {
      best = adapter.params().values();
      local.best_epoch = epoch;
      local.best_loss = epoch_loss;
    }
    if (stopper.should_stop()) break;
  }
  adapter.params().values() = std::move(best);
  if (log) *log = std::move(local);
  return adapter;
}

// ---------------------------------------------------------------------------
// TAS model distillation

/// Decoder levels 1..L when `layer_set` is empty, otherwise the validated set.
inline std::vector<int> resolve_layer_set(std::span<const int> layer_set, int num_levels) {
  std::vector<int> out(layer_set.begin(), layer_set.end());
  if (out.empty()) {
    out.resize(static_cast<std::size_t>(num_levels));
    std::iota(out.begin(), out.end(), 1);
  }
  std::sort(out.begin(), out.end());
  SDT_REQUIRE(std::adjacent_find(out.begin(), out.end()) == out.end(), "layer set has duplicates");
  for (int l : out)
    SDT_REQUIRE(l >= 1 && l <= num_levels, "layer " + std::to_string(l) + " outside 1.." + std::to_string(num_levels));
  return out;
}

/// sum_{l in layers} ||student_l - teacher_l||^2 with gradients w.r.t. the student maps.
template <typename T>
T layer_mse(const LayerActivations<T>& student, const LayerActivations<T>& teacher, std::span<const int> layers,
            ActivationGrads<T>* grad = nullptr) {
  SDT_REQUIRE(student.features.size() == teacher.features.size(), "layer_mse: level count mismatch");
  if (grad) grad->features.assign(student.features.size(), Mat<T>());
  T total = 0;
  for (int l : layers) {
    const auto& s = student.features[l - 1];
    const auto& t = teacher.features[l - 1];
    SDT_REQUIRE(s.rows() == t.rows() && s.cols() == t.cols(),
                "layer_mse: level " + std::to_string(l) + " shapes differ between student and teacher");
    total += squared_error(s, t, grad ? &grad->features[l - 1] : nullptr);
  }
  return total;
}

template <typename T>
struct TasDistillLoss {
  T value = 0;
  Buffer<T> grad;  // w.r.t. student parameters
};

/// (1/M) sum_j sum_{l in layers} ||student_l(ego_j) - teacher_l(exo_j)||^2.
template <typename T>
TasDistillLoss<T> tas_distill_loss(const TcnModel<T>& student, const TcnModel<T>& teacher,
                                   std::span<const Mat<T>> ego, std::span<const Mat<T>> exo,
                                   std::span<const int> layer_set) {
  SDT_REQUIRE(student.same_architecture(teacher), "tas_distill_loss: student and teacher architectures differ");
  SDT_REQUIRE(ego.size() == exo.size() && !ego.empty(), "tas_distill_loss: need equally many ego and exo inputs");
  const auto layers = resolve_layer_set(layer_set, student.config().num_levels);
  TasDistillLoss<T> out;
  out.grad = student.params().zeros_like();
  const T inv_m = T(1) / static_cast<T>(ego.size());
  for (std::size_t j = 0; j < ego.size(); ++j) {
    SDT_REQUIRE(ego[j].rows() == exo[j].rows(), "tas_distill_loss: pair " + std::to_string(j) + " not synchronized");
    const auto st = forward_trace(student, ego[j]);
    const auto ta = forward(teacher, exo[j]);
    ActivationGrads<T> g;
    out.value += inv_m * layer_mse(st.acts, ta, layers, &g);
    for (auto& f : g.features)
      if (f.size() > 0) f *= inv_m;
    const auto pg = backward(student, st, g);
    for (std::size_t k = 0; k < pg.size(); ++k) out.grad[k] += pg[k];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generic unsupervised student adaptation

/// One adaptation example: the student's input and the frozen teacher's
/// activations on the paired exo recording.
template <typename T>
struct AdaptItem {
  Mat<T> input;
  LayerActivations<T> teacher;
};

/// Loss on (student activations, teacher activations). Implementations may
/// keep and update auxiliary parameters (e.g. a domain classifier).
template <typename T>
class AdaptObjective {
 public:
  virtual ~AdaptObjective() = default;
  virtual T evaluate(const LayerActivations<T>& student, const LayerActivations<T>& teacher,
                     ActivationGrads<T>& grad, Rng& rng) = 0;
  /// False for adversarial objectives whose value is not a progress measure;
  /// training then runs for max_epochs and keeps the final parameters.
  virtual bool monitors_progress() const { return true; }
};

/// Layer-wise squared error between student and teacher maps on synchronized pairs.
template <typename T>
class LayerMseObjective : public AdaptObjective<T> {
 public:
  explicit LayerMseObjective(std::vector<int> layers) : layers_(std::move(layers)) {}
  T evaluate(const LayerActivations<T>& s, const LayerActivations<T>& t, ActivationGrads<T>& g, Rng&) override {
    return layer_mse(s, t, layers_, &g);
  }

 private:
  std::vector<int> layers_;
};

template <typename T>
std::vector<AdaptItem<T>> make_adapt_items(const TcnModel<T>& teacher, std::span<const FeaturePair<T>> pairs,
                                           const ResidualAdapter<T>* adapter) {
  std::vector<AdaptItem<T>> items;
  items.reserve(pairs.size());
  for (const auto& p : pairs)
    items.push_back({adapter ? adapter->apply(p.ego) : p.ego, forward(teacher, p.exo)});
  return items;
}

/// Trains a student initialised from the teacher with Adam, one item per
/// step. Parameters the objective cannot reach (the heads, under a feature
/// loss) keep their teacher values. The teacher is only read through the
/// precomputed activations.
template <typename T>
TcnModel<T> adapt_student(const TcnModel<T>& teacher, const std::vector<AdaptItem<T>>& items,
                          AdaptObjective<T>& objective, const TrainConfig& cfg, TrainLog* log = nullptr) {
  SDT_REQUIRE(!items.empty(), "adapt_student: no adaptation items");
  cfg.validate();
  TcnModel<T> student = teacher;
  Adam<T> opt(student.params().size(), cfg.adam);
  Rng order_rng(child_seed(cfg.seed, 0));
  Rng loss_rng(child_seed(cfg.seed, 1));
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  const bool monitor = objective.monitors_progress();
  EarlyStopper stopper(cfg.patience, cfg.min_rel_improvement);
  Buffer<T> best = student.params().values();
  TrainLog local;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double sum = 0.0;
    for (std::size_t idx : order) {
      const auto tr = forward_trace(student, items[idx].input);
      ActivationGrads<T> g;
      sum += static_cast<double>(objective.evaluate(tr.acts, items[idx].teacher, g, loss_rng));
      const auto reached = reached_params(student, g);
      opt.step(student.params().values(), backward(student, tr, g), &reached);
    }
    const double epoch_loss = sum / static_cast<double>(items.size());
    local.epoch_loss.push_back(epoch_loss);
    if (!std::isfinite(epoch_loss)) break;
    if (!monitor) continue;
    if (stopper.update(epoch_loss)) {
      best = student.params().values();
      local.best_epoch = epoch;
      local.best_loss = epoch_loss;
    }
    if (stopper.should_stop()) break;
  }
  if (monitor) student.params().values() = std::move(best);
  if (log) *log = std::move(local);
  return student;
}

enum class DistillStage { FeatureOnly, TasOnly, FeatureThenTas };

inline std::string_view stage_name(DistillStage s) {
  switch (s) {
    case DistillStage::FeatureOnly: return "feature_only";
    case DistillStage::TasOnly: return "tas_only";
    case DistillStage::FeatureThenTas: return "feature_then_tas";
  }
  return "?";
}

inline DistillStage parse_stage(std::string_view s) {
  for (auto st : {DistillStage::FeatureOnly, DistillStage::TasOnly, DistillStage::FeatureThenTas})
    if (stage_name(st) == s) return st;
  throw InvalidArgument("unknown distillation stage '" + std::string(s) + "'");
}

struct DistillConfig {
  std::vector<int> layer_set;  // empty means all decoder levels
  DistillStage stage = DistillStage::TasOnly;
  AdapterTrainConfig adapter;
  TrainConfig tas;
  // Use the adapter passed to distill_student instead of training one.
  bool reuse_adapter = false;
  std::uint64_t seed = 0;

  void validate(int num_levels) const {
    resolve_layer_set(layer_set, num_levels);
    adapter.validate();
    tas.validate();
  }
};

inline void to_json(nlohmann::json& j, const DistillConfig& c) {
  j = {{"layer_set", c.layer_set}, {"stage", std::string(stage_name(c.stage))},
       {"adapter", c.adapter},     {"tas", c.tas},
       {"reuse_adapter", c.reuse_adapter}};
}
inline void from_json(const nlohmann::json& j, DistillConfig& c) {
  c.layer_set = j.value("layer_set", c.layer_set);
  if (j.contains("stage")) c.stage = parse_stage(j["stage"].get<std::string>());
  if (j.contains("adapter")) c.adapter = j["adapter"].get<AdapterTrainConfig>();
  if (j.contains("tas")) c.tas = j["tas"].get<TrainConfig>();
  c.reuse_adapter = j.value("reuse_adapter", c.reuse_adapter);
}

template <typename T>
struct DistillResult {
  TcnModel<T> student;
  std::optional<ResidualAdapter<T>> adapter;
  TrainLog adapter_log;
  TrainLog tas_log;
};

/// Runs the configured stage plan. Only label-free feature pairs enter here.
template <typename T>
DistillResult<T> distill_student(const TcnModel<T>& teacher, std::span<const FeaturePair<T>> pairs,
                                 const DistillConfig& cfg, const ResidualAdapter<T>* adapter = nullptr) {
  SDT_REQUIRE(!pairs.empty(), "distill_student: no adaptation pairs");
  cfg.validate(teacher.config().num_levels);
  DistillResult<T> res;
  const bool needs_adapter = cfg.stage != DistillStage::TasOnly;
  if (needs_adapter) {
    if (cfg.reuse_adapter) {
      SDT_REQUIRE(adapter != nullptr, "distill_student: reuse_adapter set but no adapter supplied");
      res.adapter = *adapter;
    } else {
      res.adapter = train_adapter(pairs, cfg.adapter, child_seed(cfg.seed, 11), &res.adapter_log);
    }
  }
  if (cfg.stage == DistillStage::FeatureOnly) {
    res.student = teacher;
    return res;
  }
  const auto items = make_adapt_items(teacher, pairs, res.adapter ? &*res.adapter : nullptr);
  LayerMseObjective<T> objective(resolve_layer_set(cfg.layer_set, teacher.config().num_levels));
  TrainConfig tas = cfg.tas;
  tas.seed = child_seed(cfg.seed, 12);
  res.student = adapt_student(teacher, items, objective, tas, &res.tas_log);
  return res;
}

}  // namespace sdt
