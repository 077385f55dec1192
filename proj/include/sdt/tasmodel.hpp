// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Coarse-to-fine temporal convolutional segmentation model.
//
// Encoder block i (1..L): conv(w) -> relu -> e_i, then max-pool x2.
// Bottleneck: conv(w) -> relu.
// Decoder level l (1..L): upsample x2, add skip e_{L-l+1}, conv(w) -> relu -> d_l.
// Each decoder level has a linear head; the ensemble averages the L heads
// after nearest-neighbour upsampling to the input rate.
//
// Level 1 is the coarsest decoder level, level L runs at the input rate.

#pragma once

#include "sdt/optim.hpp"
#include "sdt/seqcore.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

namespace sdt {

struct TcnConfig {
  int input_dim = 16;
  int hidden_dim = 32;
  int num_classes = 4;
  int num_levels = 5;
  int kernel_width = 5;
  std::uint64_t seed = 0;

  void validate() const {
    SDT_REQUIRE(input_dim >= 1 && hidden_dim >= 1 && num_classes >= 1, "TcnConfig: dimensions must be >= 1");
    SDT_REQUIRE(num_levels >= 1 && num_levels <= 16, "TcnConfig: num_levels must be in [1, 16]");
    SDT_REQUIRE(kernel_width >= 1 && kernel_width % 2 == 1, "TcnConfig: kernel_width must be odd");
  }

  /// Temporal length after edge-replication padding.
  std::int64_t padded_length(std::int64_t frames) const {
    const std::int64_t unit = std::int64_t{1} << num_levels;
    return (frames + unit - 1) / unit * unit;
  }
  /// Frames represented by one step of decoder level `level` (1-based).
  std::int64_t level_stride(int level) const { return std::int64_t{1} << (num_levels - level); }
  /// Cropped temporal length of decoder level `level` for an input of `frames`.
  std::int64_t level_length(int level, std::int64_t frames) const {
    const std::int64_t s = level_stride(level);
    return (frames + s - 1) / s;
  }

  bool operator==(const TcnConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const TcnConfig& c) {
  j = {{"input_dim", c.input_dim}, {"hidden_dim", c.hidden_dim}, {"num_classes", c.num_classes},
       {"num_levels", c.num_levels}, {"kernel_width", c.kernel_width}, {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, TcnConfig& c) {
  c.input_dim = j.value("input_dim", c.input_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.num_levels = j.value("num_levels", c.num_levels);
  c.kernel_width = j.value("kernel_width", c.kernel_width);
  c.seed = j.value("seed", c.seed);
}

template <typename T>
class TcnModel {
 public:
  TcnModel() = default;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation drawn from cfg.seed.
  explicit TcnModel(const TcnConfig& cfg) : TcnModel(cfg, true) {}

  static TcnModel zeros(const TcnConfig& cfg) { return TcnModel(cfg, false); }

  const TcnConfig& config() const { return cfg_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

  std::size_t enc_w(int i) const { return enc_[2 * (i - 1)]; }
  std::size_t enc_b(int i) const { return enc_[2 * (i - 1) + 1]; }
  std::size_t bott_w() const { return bott_[0]; }
  std::size_t bott_b() const { return bott_[1]; }
  std::size_t dec_w(int l) const { return dec_[2 * (l - 1)]; }
  std::size_t dec_b(int l) const { return dec_[2 * (l - 1) + 1]; }
  std::size_t head_w(int l) const { return head_[2 * (l - 1)]; }
  std::size_t head_b(int l) const { return head_[2 * (l - 1) + 1]; }

  /// Same architecture and values at another precision.
  template <typename U>
  TcnModel<U> cast() const {
    TcnModel<U> out = TcnModel<U>::zeros(cfg_);
    std::transform(params_.values().begin(), params_.values().end(), out.params().values().begin(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool same_architecture(const TcnModel& other) const {
    TcnConfig a = cfg_, b = other.cfg_;
    a.seed = b.seed = 0;
    return a == b;
  }

 private:
  TcnModel(const TcnConfig& cfg, bool random) : cfg_(cfg) {
    cfg_.validate();
    const int L = cfg_.num_levels, w = cfg_.kernel_width, H = cfg_.hidden_dim;
    for (int i = 1; i <= L; ++i) {
      const int cin = i == 1 ? cfg_.input_dim : H;
      enc_.push_back(params_.add("enc" + std::to_string(i) + ".w", w * cin, H));
      enc_.push_back(params_.add("enc" + std::to_string(i) + ".b", 1, H));
    }
    bott_.push_back(params_.add("bottleneck.w", w * H, H));
    bott_.push_back(params_.add("bottleneck.b", 1, H));
    for (int l = 1; l <= L; ++l) {
      dec_.push_back(params_.add("dec" + std::to_string(l) + ".w", w * H, H));
      dec_.push_back(params_.add("dec" + std::to_string(l) + ".b", 1, H));
    }
    for (int l = 1; l <= L; ++l) {
      head_.push_back(params_.add("head" + std::to_string(l) + ".w", H, cfg_.num_classes));
      head_.push_back(params_.add("head" + std::to_string(l) + ".b", 1, cfg_.num_classes));
    }
    if (!random) return;
    Rng rng(cfg_.seed);
    auto& v = params_.values();
    const auto& slots = params_.slots();
    for (std::size_t s = 0; s < slots.size(); s += 2) {
      const double fan_in = static_cast<double>(slots[s].rows);
      std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
      for (std::size_t k = 0; k < slots[s].size(); ++k) v[slots[s].offset + k] = static_cast<T>(dist(rng));
      for (std::size_t k = 0; k < slots[s + 1].size(); ++k) v[slots[s + 1].offset + k] = static_cast<T>(dist(rng));
    }
  }

  TcnConfig cfg_;
  ParamSet<T> params_;
  std::vector<std::size_t> enc_, bott_, dec_, head_;

  template <typename U>
  friend class TcnModel;
};

/// Public outputs of one forward pass. Index 0 holds decoder level 1.
template <typename T>
struct LayerActivations {
  std::int64_t frames = 0;
  std::vector<Mat<T>> features;  // level_length(l, T) x H
  std::vector<Mat<T>> logits;    // level_length(l, T) x C
  Mat<T> ensemble;               // T x C
};

/// Forward pass plus the intermediates needed for backpropagation.
template <typename T>
struct ForwardTrace {
  LayerActivations<T> acts;
  std::int64_t padded = 0;
  std::vector<Mat<T>> enc_col, enc_out;  // per encoder block
  Mat<T> bott_col, bott_out;
  std::vector<Mat<T>> dec_col, dec_out;  // per decoder level, padded length
};

/// Gradients arriving at the public outputs. Empty matrices mean zero.
template <typename T>
struct ActivationGrads {
  std::vector<Mat<T>> features;
  std::vector<Mat<T>> logits;
  Mat<T> ensemble;
};

namespace detail {

template <typename T, typename W, typename B>
Mat<T> conv_forward(const Mat<T>& x, const W& weight, const B& bias, int width, Mat<T>& col) {
  const Eigen::Index n = x.rows(), cin = x.cols();
  const int pad = width / 2;
  col.setZero(n, width * cin);
  for (int k = 0; k < width; ++k) {
    const Eigen::Index shift = k - pad;
    const Eigen::Index dst0 = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index dst1 = std::min<Eigen::Index>(n, n - shift);
    if (dst1 > dst0) col.block(dst0, k * cin, dst1 - dst0, cin) = x.middleRows(dst0 + shift, dst1 - dst0);
  }
  Mat<T> y = col * weight;
  y.rowwise() += bias.row(0);
  return y;
}

/// Accumulates weight/bias gradients; returns the input gradient when asked.
template <typename T, typename W, typename GW, typename GB>
void conv_backward(const Mat<T>& dy, const Mat<T>& col, const W& weight, int width, GW&& dweight, GB&& dbias,
                   Mat<T>* dx) {
  dweight.noalias() += col.transpose() * dy;
  dbias += dy.colwise().sum();
  if (!dx) return;
  const Eigen::Index n = dy.rows(), cin = col.cols() / width;
  const int pad = width / 2;
  const Mat<T> dcol = dy * weight.transpose();
  dx->setZero(n, cin);
  for (int k = 0; k < width; ++k) {
    const Eigen::Index shift = k - pad;
    const Eigen::Index dst0 = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index dst1 = std::min<Eigen::Index>(n, n - shift);
    if (dst1 > dst0) dx->middleRows(dst0 + shift, dst1 - dst0) += dcol.block(dst0, k * cin, dst1 - dst0, cin);
  }
}

template <typename T>
Mat<T> maxpool2(const Mat<T>& x) {
  Mat<T> y(x.rows() / 2, x.cols());
  for (Eigen::Index i = 0; i < y.rows(); ++i) y.row(i) = x.row(2 * i).cwiseMax(x.row(2 * i + 1));
  return y;
}

/// Routes each pooled gradient to the first maximal input (ties go to the even row).
template <typename T>
void maxpool2_backward(const Mat<T>& dy, const Mat<T>& x, Mat<T>& dx) {
  for (Eigen::Index i = 0; i < dy.rows(); ++i)
    for (Eigen::Index c = 0; c < dy.cols(); ++c) {
      const Eigen::Index src = x(2 * i, c) >= x(2 * i + 1, c) ? 2 * i : 2 * i + 1;
      dx(src, c) += dy(i, c);
    }
}

template <typename T>
Mat<T> upsample2(const Mat<T>& x) {
  Mat<T> y(2 * x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) y.row(2 * i) = y.row(2 * i + 1) = x.row(i);
  return y;
}

template <typename T>
Mat<T> upsample2_backward(const Mat<T>& dy) {
  Mat<T> dx(dy.rows() / 2, dy.cols());
  for (Eigen::Index i = 0; i < dx.rows(); ++i) dx.row(i) = dy.row(2 * i) + dy.row(2 * i + 1);
  return dx;
}

}  // namespace detail

template <typename T, typename Derived>
ForwardTrace<T> forward_trace(const TcnModel<T>& model, const Eigen::MatrixBase<Derived>& input) {
  const TcnConfig& cfg = model.config();
  SDT_REQUIRE(input.cols() == cfg.input_dim, "forward: feature dimension " + std::to_string(input.cols()) +
                                                 " does not match model input_dim " + std::to_string(cfg.input_dim));
  SDT_REQUIRE(input.rows() >= 1, "forward: empty feature sequence");
  const int L = cfg.num_levels, w = cfg.kernel_width;
  const auto& P = model.params();
  ForwardTrace<T> tr;
  const std::int64_t frames = input.rows();
  tr.padded = cfg.padded_length(frames);

  Mat<T> x(tr.padded, input.cols());
  x.topRows(frames) = input.template cast<T>();
  for (std::int64_t t = frames; t < tr.padded; ++t) x.row(t) = x.row(frames - 1);

  tr.enc_col.resize(L);
  tr.enc_out.resize(L);
  Mat<T> cur = std::move(x);
  for (int i = 1; i <= L; ++i) {
    tr.enc_out[i - 1] = detail::conv_forward(cur, P.view(model.enc_w(i)), P.view(model.enc_b(i)), w, tr.enc_col[i - 1])
                            .cwiseMax(T(0));
    cur = detail::maxpool2(tr.enc_out[i - 1]);
  }
  tr.bott_out = detail::conv_forward(cur, P.view(model.bott_w()), P.view(model.bott_b()), w, tr.bott_col).cwiseMax(T(0));

  tr.dec_col.resize(L);
  tr.dec_out.resize(L);
  const Mat<T>* prev = &tr.bott_out;
  for (int l = 1; l <= L; ++l) {
    Mat<T> u = detail::upsample2(*prev) + tr.enc_out[L - l];
    tr.dec_out[l - 1] = detail::conv_forward(u, P.view(model.dec_w(l)), P.view(model.dec_b(l)), w, tr.dec_col[l - 1])
                            .cwiseMax(T(0));
    prev = &tr.dec_out[l - 1];
  }

  auto& acts = tr.acts;
  acts.frames = frames;
  acts.features.resize(L);
  acts.logits.resize(L);
  acts.ensemble.setZero(frames, cfg.num_classes);
  const T inv_levels = T(1) / static_cast<T>(L);
  for (int l = 1; l <= L; ++l) {
    const std::int64_t n = cfg.level_length(l, frames);
    const int shift = L - l;
    acts.features[l - 1] = tr.dec_out[l - 1].topRows(n);
    Mat<T> z = acts.features[l - 1] * P.view(model.head_w(l));
    z.rowwise() += P.view(model.head_b(l)).row(0);
    for (std::int64_t t = 0; t < frames; ++t) acts.ensemble.row(t) += inv_levels * z.row(t >> shift);
    acts.logits[l - 1] = std::move(z);
  }
  return tr;
}

template <typename T, typename Derived>
LayerActivations<T> forward(const TcnModel<T>& model, const Eigen::MatrixBase<Derived>& input) {
  return std::move(forward_trace(model, input).acts);
}

template <typename T>
LayerActivations<T> forward(const TcnModel<T>& model, const FeatureSequence& feats) {
  return forward(model, feats.data);
}

/// Backpropagates output gradients to all parameters. When `input_grad` is
/// non-null it receives dLoss/dInput (T x D, padding folded into the last frame).
template <typename T>
Buffer<T> backward(const TcnModel<T>& model, const ForwardTrace<T>& tr, const ActivationGrads<T>& g,
                        Mat<T>* input_grad = nullptr) {
  const TcnConfig& cfg = model.config();
  const int L = cfg.num_levels, w = cfg.kernel_width, H = cfg.hidden_dim, C = cfg.num_classes;
  const auto& P = model.params();
  const std::int64_t frames = tr.acts.frames;
  Buffer<T> grad = P.zeros_like();

  std::vector<Mat<T>> gdec(L);
  for (int l = 1; l <= L; ++l) {
    const std::int64_t len = tr.dec_out[l - 1].rows();
    const std::int64_t n = cfg.level_length(l, frames);
    Mat<T> gz = Mat<T>::Zero(len, C);
    if (static_cast<int>(g.logits.size()) >= l && g.logits[l - 1].size() > 0) gz.topRows(n) += g.logits[l - 1];
    if (g.ensemble.size() > 0) {
      const int shift = L - l;
      const T inv_levels = T(1) / static_cast<T>(L);
      for (std::int64_t t = 0; t < frames; ++t) gz.row(t >> shift) += inv_levels * g.ensemble.row(t);
    }
    const Mat<T>& d = tr.dec_out[l - 1];
    P.view_in(grad, model.head_w(l)).noalias() += d.topRows(n).transpose() * gz.topRows(n);
    P.view_in(grad, model.head_b(l)) += gz.topRows(n).colwise().sum();
    gdec[l - 1] = Mat<T>::Zero(len, H);
    gdec[l - 1].topRows(n) = gz.topRows(n) * P.view(model.head_w(l)).transpose();
    if (static_cast<int>(g.features.size()) >= l && g.features[l - 1].size() > 0)
      gdec[l - 1].topRows(n) += g.features[l - 1];
  }

  std::vector<Mat<T>> genc(L);
  for (int i = 1; i <= L; ++i) genc[i - 1] = Mat<T>::Zero(tr.enc_out[i - 1].rows(), H);
  Mat<T> gbott;
  for (int l = L; l >= 1; --l) {
    const Mat<T> gpre = gdec[l - 1].cwiseProduct((tr.dec_out[l - 1].array() > T(0)).matrix().template cast<T>());
    Mat<T> gu;
    detail::conv_backward(gpre, tr.dec_col[l - 1], P.view(model.dec_w(l)), w, P.view_in(grad, model.dec_w(l)),
                          P.view_in(grad, model.dec_b(l)), &gu);
    genc[L - l] += gu;
    Mat<T> gprev = detail::upsample2_backward(gu);
    if (l > 1)
      gdec[l - 2] += gprev;
    else
      gbott = std::move(gprev);
  }
  Mat<T> gin;
  {
    const Mat<T> gpre = gbott.cwiseProduct((tr.bott_out.array() > T(0)).matrix().template cast<T>());
    detail::conv_backward(gpre, tr.bott_col, P.view(model.bott_w()), w, P.view_in(grad, model.bott_w()),
                          P.view_in(grad, model.bott_b()), &gin);
  }
  for (int i = L; i >= 1; --i) {
    detail::maxpool2_backward(gin, tr.enc_out[i - 1], genc[i - 1]);
    const Mat<T> gpre = genc[i - 1].cwiseProduct((tr.enc_out[i - 1].array() > T(0)).matrix().template cast<T>());
    const bool need_dx = i > 1 || input_grad != nullptr;
    detail::conv_backward(gpre, tr.enc_col[i - 1], P.view(model.enc_w(i)), w, P.view_in(grad, model.enc_w(i)),
                          P.view_in(grad, model.enc_b(i)), need_dx ? &gin : nullptr);
  }
  if (input_grad) {
    *input_grad = gin.topRows(frames);
    for (std::int64_t t = frames; t < tr.padded; ++t) input_grad->row(frames - 1) += gin.row(t);
  }
  return grad;
}

/// Mask of the parameters that gradients arriving at `g` can reach. Encoders
/// and the bottleneck feed every level; decoder level l feeds levels > l; a
/// head is reached only through its logits or the ensemble. Autograd
/// frameworks leave unreached parameters without a gradient and optimizers
/// skip them, which matters once weight decay is on.
template <typename T>
std::vector<char> reached_params(const TcnModel<T>& model, const ActivationGrads<T>& g) {
  const int L = model.config().num_levels;
  const auto given = [](const std::vector<Mat<T>>& v, int l) {
    return static_cast<int>(v.size()) >= l && v[l - 1].size() > 0;
  };
  const bool ensemble = g.ensemble.size() > 0;
  int deepest = ensemble ? L : 0;
  for (int l = 1; l <= L; ++l)
    if (given(g.features, l) || given(g.logits, l)) deepest = std::max(deepest, l);
  std::vector<char> mask(model.params().size(), 0);
  if (deepest == 0) return mask;
  const auto mark = [&](std::size_t slot) {
    const TensorSlot& s = model.params().slots()[slot];
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(s.offset), s.size(), char(1));
  };
  for (int i = 1; i <= L; ++i) {
    mark(model.enc_w(i));
    mark(model.enc_b(i));
  }
  mark(model.bott_w());
  mark(model.bott_b());
  for (int l = 1; l <= deepest; ++l) {
    mark(model.dec_w(l));
    mark(model.dec_b(l));
  }
  for (int l = 1; l <= L; ++l) {
    if (!ensemble && !given(g.logits, l)) continue;
    mark(model.head_w(l));
    mark(model.head_b(l));
  }
  return mask;
}

/// Per-frame argmax; ties resolve to the lowest class index.
template <typename T>
FrameLabels argmax_labels(const Mat<T>& logits) {
  FrameLabels out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(t, c) > logits(t, best)) best = c;
    out[static_cast<std::size_t>(t)] = static_cast<ClassId>(best);
  }
  return out;
}

template <typename T>
FrameLabels predict_labels(const LayerActivations<T>& acts) {
  return argmax_labels(acts.ensemble);
}

/// Block-wise majority vote; ties go to the lowest label.
inline FrameLabels downsample_labels(std::span<const ClassId> labels, std::int64_t stride, int num_classes) {
  const std::int64_t n = (static_cast<std::int64_t>(labels.size()) + stride - 1) / stride;
  FrameLabels out(static_cast<std::size_t>(n));
  std::vector<std::int64_t> votes(static_cast<std::size_t>(num_classes));
  for (std::int64_t b = 0; b < n; ++b) {
    std::fill(votes.begin(), votes.end(), 0);
    const std::int64_t end = std::min<std::int64_t>((b + 1) * stride, static_cast<std::int64_t>(labels.size()));
    for (std::int64_t t = b * stride; t < end; ++t) ++votes[static_cast<std::size_t>(labels[t])];
    out[static_cast<std::size_t>(b)] =
        static_cast<ClassId>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

/// Mean cross-entropy of `logits` against `targets`; fills dLoss/dLogits.
template <typename T>
T cross_entropy(const Mat<T>& logits, std::span<const ClassId> targets, Mat<T>* grad = nullptr) {
  SDT_REQUIRE(static_cast<std::size_t>(logits.rows()) == targets.size(), "cross_entropy: length mismatch");
  const Eigen::Index n = logits.rows(), c = logits.cols();
  if (grad) grad->resize(n, c);
  double total = 0.0;
  for (Eigen::Index t = 0; t < n; ++t) {
    const ClassId y = targets[static_cast<std::size_t>(t)];
    SDT_REQUIRE(y >= 0 && y < c, "cross_entropy: label " + std::to_string(y) + " out of range");
    const T mx = logits.row(t).maxCoeff();
    const auto e = (logits.row(t).array() - mx).exp();
    const T sum = e.sum();
    total += static_cast<double>(std::log(sum) + mx - logits(t, y));
    if (grad) {
      grad->row(t) = (e / (sum * static_cast<T>(n))).matrix();
      (*grad)(t, y) -= T(1) / static_cast<T>(n);
    }
  }
  return static_cast<T>(total / static_cast<double>(n));
}

template <typename T>
struct CeLoss {
  T total = 0;
  T ensemble = 0;
  std::vector<T> per_level;
  Buffer<T> grad;
};

/// Ensemble cross-entropy plus one unit-weight cross-entropy per decoder
/// level against majority-vote downsampled targets.
template <typename T>
CeLoss<T> ce_loss(const TcnModel<T>& model, const ForwardTrace<T>& tr, std::span<const ClassId> gt) {
  const TcnConfig& cfg = model.config();
  SDT_REQUIRE(static_cast<std::int64_t>(gt.size()) == tr.acts.frames, "ce_loss: label length differs from frames");
  for (ClassId y : gt)
    SDT_REQUIRE(y >= 0 && y < cfg.num_classes, "ce_loss: label " + std::to_string(y) + " out of range");
  CeLoss<T> out;
  ActivationGrads<T> g;
  out.ensemble = cross_entropy(tr.acts.ensemble, gt, &g.ensemble);
  out.total = out.ensemble;
  g.logits.resize(cfg.num_levels);
  for (int l = 1; l <= cfg.num_levels; ++l) {
    const FrameLabels targets = downsample_labels(gt, cfg.level_stride(l), cfg.num_classes);
    const T v = cross_entropy(tr.acts.logits[l - 1], targets, &g.logits[l - 1]);
    out.per_level.push_back(v);
    out.total += v;
  }
  out.grad = backward(model, tr, g);
  return out;
}

struct TrainConfig {
  AdamOptions adam{};
  int max_epochs = 200;
  int patience = 20;
  // An epoch counts as an improvement only if it lowers the best loss by more
  // than this fraction of it.
  double min_rel_improvement = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    SDT_REQUIRE(adam.lr > 0 && adam.weight_decay >= 0, "TrainConfig: learning rate must be positive");
    SDT_REQUIRE(max_epochs >= 1, "TrainConfig: max_epochs must be >= 1");
    SDT_REQUIRE(patience >= 0 && patience <= max_epochs, "TrainConfig: patience must be in [0, max_epochs]");
    SDT_REQUIRE(min_rel_improvement >= 0, "TrainConfig: min_rel_improvement must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.adam.lr}, {"weight_decay", c.adam.weight_decay}, {"max_epochs", c.max_epochs},
       {"patience", c.patience}, {"min_rel_improvement", c.min_rel_improvement}, {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.adam.lr = j.value("lr", c.adam.lr);
  c.adam.weight_decay = j.value("weight_decay", c.adam.weight_decay);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.min_rel_improvement = j.value("min_rel_improvement", c.min_rel_improvement);
  c.seed = j.value("seed", c.seed);
}

struct TrainLog {
  std::vector<double> epoch_loss;
  int best_epoch = -1;
  double best_loss = std::numeric_limits<double>::infinity();
};

/// Early-stopping bookkeeping shared by every training loop.
class EarlyStopper {
 public:
  EarlyStopper(int patience, double min_rel) : patience_(patience), min_rel_(min_rel) {}

  /// Records an epoch loss; returns true when it is a new best.
  bool update(double loss) {
    if (loss < best_ - min_rel_ * std::abs(best_) || !std::isfinite(best_)) {
      best_ = loss;
      bad_ = 0;
      return true;
    }
    ++bad_;
    return false;
  }
  bool should_stop() const { return bad_ > patience_; }
  double best() const { return best_; }

 private:
  int patience_;
  double min_rel_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_ = 0;
};

template <typename T>
struct LabeledSequence {
  Mat<T> features;
  FrameLabels labels;
};

/// Supervised training with Adam, one recording per step, shuffled each
/// epoch. Returns the parameters of the lowest-loss epoch.
template <typename T>
TcnModel<T> train_supervised(const std::vector<LabeledSequence<T>>& data, const TcnConfig& model_cfg,
                             const TrainConfig& cfg, TrainLog* log = nullptr) {
  SDT_REQUIRE(!data.empty(), "train_supervised: empty corpus");
  cfg.validate();
  TcnModel<T> model(model_cfg);
  for (const auto& d : data) {
    SDT_REQUIRE(d.features.rows() >= 1 && static_cast<std::size_t>(d.features.rows()) == d.labels.size(),
                "train_supervised: features and labels disagree in length");
    SDT_REQUIRE(d.features.cols() == model_cfg.input_dim, "train_supervised: feature dimension mismatch");
  }
  Adam<T> opt(model.params().size(), cfg.adam);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  EarlyStopper stopper(cfg.patience, cfg.min_rel_improvement);
  Buffer<T> best = model.params().values();
  TrainLog local;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t idx : order) {
      const auto tr = forward_trace(model, data[idx].features);
      auto loss = ce_loss(model, tr, data[idx].labels);
      sum += static_cast<double>(loss.total);
      opt.step(model.params().values(), loss.grad);
    }
    const double epoch_loss = sum / static_cast<double>(data.size());
    local.epoch_loss.push_back(epoch_loss);
    if (!std::isfinite(epoch_loss)) break;
    // Parameters after this epoch produced (approximately) this epoch's loss.
    if (stopper.update(epoch_loss)) {
      best = model.params().values();
      local.best_epoch = epoch;
      local.best_loss = epoch_loss;
    }
    if (stopper.should_stop()) break;
  }
  model.params().values() = std::move(best);
  if (log) *log = std::move(local);
  return model;
}

template <typename T>
std::vector<LabeledSequence<T>> labeled_sequences(std::span<const Recording> recs) {
  std::vector<LabeledSequence<T>> out;
  for (const auto& r : recs) {
    SDT_REQUIRE(r.labels.has_value(), "recording " + r.id + " has no labels");
    out.push_back({r.features.data.cast<T>(), frames_from_segments(*r.labels)});
  }
  return out;
}

}  // namespace sdt
