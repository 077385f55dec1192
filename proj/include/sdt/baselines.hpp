// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Competing unsupervised adaptation objectives: MMD, Deep CORAL, gradient
// reversal, TCC (classification variant), soft-DTW and a random-assignment
// MSE control. All of them act on per-frame decoder features.

#pragma once

#include "sdt/distill.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace sdt {

template <typename T>
struct PairLoss {
  T value = 0;
  Mat<T> grad_x;  // w.r.t. the first argument
  Mat<T> grad_y;  // w.r.t. the second argument
};

namespace detail {

/// Squared Euclidean distances between the rows of a and b.
template <typename T>
Mat<T> sq_dists(const Mat<T>& a, const Mat<T>& b) {
  const auto an = a.rowwise().squaredNorm();
  const auto bn = b.rowwise().squaredNorm();
  Mat<T> d = (-T(2) * a * b.transpose()).eval();
  d.colwise() += an;
  d.rowwise() += bn.transpose();
  return d.cwiseMax(T(0));
}

/// dL/da and dL/db for L = sum_ij G_ij ||a_i - b_j||^2.
template <typename T>
void sq_dist_backward(const Mat<T>& G, const Mat<T>& a, const Mat<T>& b, Mat<T>& ga, Mat<T>& gb) {
  ga = T(2) * (a.array().colwise() * G.rowwise().sum().array()).matrix() - T(2) * G * b;
  gb = T(2) * (b.array().colwise() * G.colwise().sum().transpose().array()).matrix() - T(2) * G.transpose() * a;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// MMD

/// Median pairwise Euclidean distance over the rows of X and Y together.
template <typename T>
double median_bandwidth(const Mat<T>& x, const Mat<T>& y) {
  Mat<T> z(x.rows() + y.rows(), x.cols());
  z << x, y;
  const Mat<T> d = detail::sq_dists(z, z);
  std::vector<double> v;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = i + 1; j < z.rows(); ++j) v.push_back(std::sqrt(static_cast<double>(d(i, j))));
  if (v.empty()) return 0.0;
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

/// Biased (V-statistic) squared MMD with an RBF kernel of width `sigma`.
template <typename T>
PairLoss<T> mmd_loss(const Mat<T>& x, const Mat<T>& y, double sigma) {
  SDT_REQUIRE(x.rows() >= 1 && y.rows() >= 1 && x.cols() == y.cols(), "mmd_loss: need non-empty inputs of equal width");
  SDT_REQUIRE(sigma > 0 && std::isfinite(sigma), "mmd_loss: bandwidth must be positive");
  const T inv = T(1) / static_cast<T>(2.0 * sigma * sigma);
  const Mat<T> kxx = (-inv * detail::sq_dists(x, x)).array().exp().matrix();
  const Mat<T> kyy = (-inv * detail::sq_dists(y, y)).array().exp().matrix();
  const Mat<T> kxy = (-inv * detail::sq_dists(x, y)).array().exp().matrix();
  const T n = static_cast<T>(x.rows()), m = static_cast<T>(y.rows());
  PairLoss<T> out;
  out.value = kxx.mean() + kyy.mean() - T(2) * kxy.mean();
  // dk/d(dist^2) = -inv * k
  const Mat<T> gxx = (-inv / (n * n)) * kxx;
  const Mat<T> gyy = (-inv / (m * m)) * kyy;
  const Mat<T> gxy = (T(2) * inv / (n * m)) * kxy;
  Mat<T> ga, gb;
  detail::sq_dist_backward(gxx, x, x, ga, gb);
  out.grad_x = ga + gb;
  detail::sq_dist_backward(gyy, y, y, ga, gb);
  out.grad_y = ga + gb;
  detail::sq_dist_backward(gxy, x, y, ga, gb);
  out.grad_x += ga;
  out.grad_y += gb;
  return out;
}

// ---------------------------------------------------------------------------
// Deep CORAL

template <typename T>
Mat<T> sample_covariance(const Mat<T>& x) {
  const Mat<T> c = x.rowwise() - x.colwise().mean();
  return (c.transpose() * c) / static_cast<T>(x.rows() - 1);
}

/// ||Cov(X) - Cov(Y)||_F^2 / (4 d^2) with 1/(n-1) sample covariances.
template <typename T>
PairLoss<T> coral_loss(const Mat<T>& x, const Mat<T>& y) {
  SDT_REQUIRE(x.rows() >= 2 && y.rows() >= 2, "coral_loss: need at least two rows on each side");
  SDT_REQUIRE(x.cols() == y.cols(), "coral_loss: feature widths differ");
  const T d = static_cast<T>(x.cols());
  const Mat<T> diff = sample_covariance(x) - sample_covariance(y);
  PairLoss<T> out;
  out.value = diff.squaredNorm() / (T(4) * d * d);
  const Mat<T> g = diff / (T(2) * d * d);
  const Mat<T> xc = x.rowwise() - x.colwise().mean();
  const Mat<T> yc = y.rowwise() - y.colwise().mean();
  out.grad_x = (T(2) / static_cast<T>(x.rows() - 1)) * xc * g;
  out.grad_y = (-T(2) / static_cast<T>(y.rows() - 1)) * yc * g;
  return out;
}

// ---------------------------------------------------------------------------
// Gradient reversal with a frame-wise domain classifier

/// Two-layer perceptron producing two domain logits per frame.
template <typename T>
class DomainClassifier {
 public:
  DomainClassifier() = default;
  DomainClassifier(int dim, int hidden, std::uint64_t seed) {
    params_.add("w1", dim, hidden);
    params_.add("b1", 1, hidden);
    params_.add("w2", hidden, 2);
    params_.add("b2", 1, 2);
    Rng rng(seed);
    for (std::size_t s = 0; s < 4; s += 2) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(params_.slots()[s].rows));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (std::size_t k : {s, s + 1}) {
        const auto& sl = params_.slots()[k];
        for (std::size_t i = 0; i < sl.size(); ++i) params_.values()[sl.offset + i] = static_cast<T>(dist(rng));
      }
    }
  }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

 private:
  ParamSet<T> params_;
};

template <typename T>
struct GrlLoss {
  T value = 0;
  Buffer<T> grad_classifier;
  Mat<T> grad_source;  // already reversed and scaled by -lambda
  Mat<T> grad_target;
};

/// Domain cross-entropy (source = 0, target = 1) averaged over all frames.
/// Classifier gradients are the true ones; feature gradients pass through a
/// gradient reversal layer and come back multiplied by -lambda.
template <typename T>
GrlLoss<T> grl_adapt_loss(const Mat<T>& source, const Mat<T>& target, const DomainClassifier<T>& clf, double lambda) {
  SDT_REQUIRE(lambda >= 0, "grl_adapt_loss: lambda must be >= 0");
  SDT_REQUIRE(source.cols() == target.cols(), "grl_adapt_loss: feature widths differ");
  SDT_REQUIRE(source.rows() + target.rows() >= 1, "grl_adapt_loss: no frames");
  const auto& P = clf.params();
  SDT_REQUIRE(P.view(0).rows() == source.cols(), "grl_adapt_loss: classifier input width mismatch");
  Mat<T> f(source.rows() + target.rows(), source.cols());
  f << source, target;
  FrameLabels domain(static_cast<std::size_t>(f.rows()), 0);
  std::fill(domain.begin() + source.rows(), domain.end(), 1);
  Mat<T> h = f * P.view(0);
  h.rowwise() += P.view(1).row(0);
  h = h.cwiseMax(T(0));
  Mat<T> z = h * P.view(2);
  z.rowwise() += P.view(3).row(0);
  GrlLoss<T> out;
  Mat<T> gz;
  out.value = cross_entropy(z, domain, &gz);
  out.grad_classifier = P.zeros_like();
  Buffer<T>& gc = out.grad_classifier;
  P.view_in(gc, 2).noalias() += h.transpose() * gz;
  P.view_in(gc, 3) += gz.colwise().sum();
  const Mat<T> gh = (gz * P.view(2).transpose()).cwiseProduct((h.array() > T(0)).matrix().template cast<T>());
  P.view_in(gc, 0).noalias() += f.transpose() * gh;
  P.view_in(gc, 1) += gh.colwise().sum();
  const Mat<T> gf = (-static_cast<T>(lambda)) * (gh * P.view(0).transpose());
  out.grad_source = gf.topRows(source.rows());
  out.grad_target = gf.bottomRows(target.rows());
  return out;
}

// ---------------------------------------------------------------------------
// Temporal cycle consistency (classification)

/// For each u_i: soft nearest neighbour in V with weights softmax(-||u_i - v_j||^2 / tau),
/// then cross-entropy of cycling back to index i with logits -||v~_i - u_k||^2 / tau.
template <typename T>
PairLoss<T> tcc_loss(const Mat<T>& u, const Mat<T>& v, double tau) {
  SDT_REQUIRE(tau > 0, "tcc_loss: temperature must be positive");
  SDT_REQUIRE(u.rows() >= 2 && v.rows() >= 2 && u.cols() == v.cols(), "tcc_loss: need >= 2 rows of equal width");
  const T inv_tau = static_cast<T>(1.0 / tau);
  const Eigen::Index n = u.rows();
  auto softmax_rows = [](const Mat<T>& s) {
    Mat<T> p = s;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      p.row(i).array() -= p.row(i).maxCoeff();
      p.row(i) = p.row(i).array().exp().matrix();
      p.row(i) /= p.row(i).sum();
    }
    return p;
  };
  const Mat<T> a = softmax_rows(-inv_tau * detail::sq_dists(u, v));
  const Mat<T> vt = a * v;
  const Mat<T> beta = -inv_tau * detail::sq_dists(vt, u);
  const Mat<T> p = softmax_rows(beta);
  PairLoss<T> out;
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) total -= std::log(std::max<double>(static_cast<double>(p(i, i)), 1e-300));
  out.value = static_cast<T>(total / static_cast<double>(n));

  Mat<T> dbeta = p / static_cast<T>(n);
  dbeta.diagonal().array() -= T(1) / static_cast<T>(n);
  const Mat<T> dd2 = -inv_tau * dbeta;
  Mat<T> gvt, gu;
  detail::sq_dist_backward(dd2, vt, u, gvt, gu);
  const Mat<T> da = gvt * v.transpose();
  Mat<T> gv = a.transpose() * gvt;
  const Mat<T> ds = a.cwiseProduct((da.array().colwise() - (da.cwiseProduct(a)).rowwise().sum().array()).matrix());
  const Mat<T> dd1 = -inv_tau * ds;
  Mat<T> gu1, gv1;
  detail::sq_dist_backward(dd1, u, v, gu1, gv1);
  out.grad_x = gu + gu1;
  out.grad_y = gv + gv1;
  return out;
}

// ---------------------------------------------------------------------------
// Soft-DTW

/// -gamma * log(sum exp(-a_k / gamma)), stable for infinite entries.
inline double softmin3(double a, double b, double c, double gamma) {
  const double m = std::min({a, b, c});
  if (!std::isfinite(m)) return m;
  const double s = std::exp(-(a - m) / gamma) + std::exp(-(b - m) / gamma) + std::exp(-(c - m) / gamma);
  return m - gamma * std::log(s);
}

struct SdtwResult {
  double value = 0;
  MatD grad;  // d value / d cost
};

/// Soft-DTW value of a cost matrix and its gradient by the backward recursion.
inline SdtwResult sdtw_loss(const MatD& cost, double gamma) {
  SDT_REQUIRE(gamma > 0, "sdtw_loss: gamma must be positive");
  SDT_REQUIRE(cost.rows() >= 1 && cost.cols() >= 1, "sdtw_loss: empty cost matrix");
  SDT_REQUIRE(cost.allFinite(), "sdtw_loss: cost matrix contains non-finite values");
  const Eigen::Index n = cost.rows(), m = cost.cols();
  const double inf = std::numeric_limits<double>::infinity();
  MatD r = MatD::Constant(n + 2, m + 2, inf);
  r(0, 0) = 0.0;
  for (Eigen::Index i = 1; i <= n; ++i)
    for (Eigen::Index j = 1; j <= m; ++j)
      r(i, j) = cost(i - 1, j - 1) + softmin3(r(i - 1, j), r(i, j - 1), r(i - 1, j - 1), gamma);
  SdtwResult out;
  out.value = r(n, m);
  MatD e = MatD::Zero(n + 2, m + 2);
  e(n, m) = 1.0;
  // weight of predecessor p in the softmin at successor s: exp((r_s - c_s - r_p) / gamma)
  auto weight = [&](Eigen::Index si, Eigen::Index sj, Eigen::Index pi, Eigen::Index pj) {
    if (si > n || sj > m) return 0.0;
    return std::exp((r(si, sj) - cost(si - 1, sj - 1) - r(pi, pj)) / gamma);
  };
  for (Eigen::Index i = n; i >= 1; --i)
    for (Eigen::Index j = m; j >= 1; --j) {
      if (i == n && j == m) continue;
      e(i, j) = e(i + 1, j) * weight(i + 1, j, i, j) + e(i, j + 1) * weight(i, j + 1, i, j) +
                e(i + 1, j + 1) * weight(i + 1, j + 1, i, j);
    }
  out.grad = e.block(1, 1, n, m);
  return out;
}

/// Exact dynamic time warping with the same step pattern.
inline double dtw(const MatD& cost) {
  const Eigen::Index n = cost.rows(), m = cost.cols();
  const double inf = std::numeric_limits<double>::infinity();
  MatD r = MatD::Constant(n + 1, m + 1, inf);
  r(0, 0) = 0.0;
  for (Eigen::Index i = 1; i <= n; ++i)
    for (Eigen::Index j = 1; j <= m; ++j)
      r(i, j) = cost(i - 1, j - 1) + std::min({r(i - 1, j), r(i, j - 1), r(i - 1, j - 1)});
  return r(n, m);
}

/// Soft-DTW between two feature sequences under squared Euclidean cost.
template <typename T>
PairLoss<T> sdtw_feature_loss(const Mat<T>& x, const Mat<T>& y, double gamma) {
  const MatD cost = detail::sq_dists(x, y).template cast<double>();
  const SdtwResult s = sdtw_loss(cost, gamma);
  PairLoss<T> out;
  out.value = static_cast<T>(s.value);
  detail::sq_dist_backward<T>(s.grad.cast<T>(), x, y, out.grad_x, out.grad_y);
  return out;
}

// ---------------------------------------------------------------------------
// Random-assignment MSE

/// Frame assignment for the random control: a uniform permutation when the
/// lengths agree, otherwise independent uniform draws.
inline std::vector<Eigen::Index> random_assignment(Eigen::Index n, Eigen::Index m, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  if (n == m) {
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::shuffle(idx.begin(), idx.end(), rng);
  } else {
    std::uniform_int_distribution<Eigen::Index> pick(0, m - 1);
    for (auto& i : idx) i = pick(rng);
  }
  return idx;
}

/// sum_t ||ego_t - exo_{pi(t)}||^2 for a random assignment pi drawn from `rng`.
template <typename T>
PairLoss<T> random_pair_mse_loss(const Mat<T>& ego, const Mat<T>& exo, Rng& rng) {
  SDT_REQUIRE(ego.cols() == exo.cols(), "random_pair_mse_loss: feature widths differ");
  SDT_REQUIRE(ego.rows() >= 1 && exo.rows() >= 1, "random_pair_mse_loss: empty input");
  const auto idx = random_assignment(ego.rows(), exo.rows(), rng);
  Mat<T> target(ego.rows(), ego.cols());
  for (Eigen::Index t = 0; t < ego.rows(); ++t) target.row(t) = exo.row(idx[static_cast<std::size_t>(t)]);
  PairLoss<T> out;
  out.value = squared_error(ego, target, &out.grad_x);
  out.grad_y = Mat<T>::Zero(exo.rows(), exo.cols());
  for (Eigen::Index t = 0; t < ego.rows(); ++t) out.grad_y.row(idx[static_cast<std::size_t>(t)]) -= out.grad_x.row(t);
  return out;
}

template <typename T>
PairLoss<T> random_pair_mse_loss(const Mat<T>& ego, const Mat<T>& exo, std::uint64_t seed) {
  Rng rng(seed);
  return random_pair_mse_loss(ego, exo, rng);
}

// ---------------------------------------------------------------------------
// Generic adaptation with a chosen loss

enum class AdaptLossKind { SyncMse, Mmd, Dcoral, Grl, Tcc, Sdtw, RndMse };

inline std::string_view loss_kind_name(AdaptLossKind k) {
  switch (k) {
    case AdaptLossKind::SyncMse: return "SYNC_MSE";
    case AdaptLossKind::Mmd: return "MMD";
    case AdaptLossKind::Dcoral: return "DCORAL";
    case AdaptLossKind::Grl: return "GRL";
    case AdaptLossKind::Tcc: return "TCC";
    case AdaptLossKind::Sdtw: return "SDTW";
    case AdaptLossKind::RndMse: return "RND_MSE";
  }
  return "?";
}

inline AdaptLossKind parse_loss_kind(std::string_view s) {
  for (auto k : {AdaptLossKind::SyncMse, AdaptLossKind::Mmd, AdaptLossKind::Dcoral, AdaptLossKind::Grl,
                 AdaptLossKind::Tcc, AdaptLossKind::Sdtw, AdaptLossKind::RndMse})
    if (loss_kind_name(k) == s) return k;
  throw InvalidArgument("unknown adaptation loss '" + std::string(s) + "'");
}

enum class Pairing { RandomVideos, SameProcedure, Synchronized };

inline std::string_view pairing_name(Pairing p) {
  switch (p) {
    case Pairing::RandomVideos: return "random_videos";
    case Pairing::SameProcedure: return "same_procedure";
    case Pairing::Synchronized: return "synchronized";
  }
  return "?";
}

inline Pairing parse_pairing(std::string_view s) {
  for (auto p : {Pairing::RandomVideos, Pairing::SameProcedure, Pairing::Synchronized})
    if (pairing_name(p) == s) return p;
  throw InvalidArgument("unknown pairing '" + std::string(s) + "'");
}

struct AdaptLossConfig {
  AdaptLossKind kind = AdaptLossKind::SyncMse;
  Pairing pairing = Pairing::Synchronized;
  std::optional<double> mmd_bandwidth;  // median heuristic per pair when unset
  double grl_lambda = 1.0;
  int grl_hidden = 32;
  AdamOptions grl_classifier_adam{1e-3, 0.9, 0.999, 1e-8, 0.0};
  double tcc_tau = 0.1;
  double sdtw_gamma = 0.1;
  std::vector<int> layer_set;  // SYNC_MSE only; empty means all levels

  void validate() const {
    SDT_REQUIRE(tcc_tau > 0, "TCC temperature must be positive");
    SDT_REQUIRE(sdtw_gamma > 0, "SDTW gamma must be positive");
    SDT_REQUIRE(grl_lambda >= 0, "GRL lambda must be >= 0");
    SDT_REQUIRE(!mmd_bandwidth || *mmd_bandwidth > 0, "MMD bandwidth must be positive");
    SDT_REQUIRE(grl_hidden >= 1, "GRL classifier width must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const AdaptLossConfig& c) {
  j = {{"kind", std::string(loss_kind_name(c.kind))},
       {"pairing", std::string(pairing_name(c.pairing))},
       {"grl_lambda", c.grl_lambda},
       {"grl_hidden", c.grl_hidden},
       {"tcc_tau", c.tcc_tau},
       {"sdtw_gamma", c.sdtw_gamma},
       {"layer_set", c.layer_set}};
  j["mmd_bandwidth"] = c.mmd_bandwidth ? nlohmann::json(*c.mmd_bandwidth) : nlohmann::json(nullptr);
}
inline void from_json(const nlohmann::json& j, AdaptLossConfig& c) {
  if (j.contains("kind")) c.kind = parse_loss_kind(j["kind"].get<std::string>());
  if (j.contains("pairing")) c.pairing = parse_pairing(j["pairing"].get<std::string>());
  if (j.contains("mmd_bandwidth") && !j["mmd_bandwidth"].is_null()) c.mmd_bandwidth = j["mmd_bandwidth"].get<double>();
  c.grl_lambda = j.value("grl_lambda", c.grl_lambda);
  c.grl_hidden = j.value("grl_hidden", c.grl_hidden);
  c.tcc_tau = j.value("tcc_tau", c.tcc_tau);
  c.sdtw_gamma = j.value("sdtw_gamma", c.sdtw_gamma);
  c.layer_set = j.value("layer_set", c.layer_set);
}

/// Alignment objective on the finest decoder level (student ego vs teacher exo).
template <typename T>
class FinalLevelObjective : public AdaptObjective<T> {
 public:
  FinalLevelObjective(const AdaptLossConfig& cfg, int hidden_dim, std::uint64_t seed) : cfg_(cfg) {
    if (cfg_.kind == AdaptLossKind::Grl) {
      clf_ = DomainClassifier<T>(hidden_dim, cfg_.grl_hidden, seed);
      clf_opt_.emplace(clf_.params().size(), cfg_.grl_classifier_adam);
    }
  }

  T evaluate(const LayerActivations<T>& s, const LayerActivations<T>& t, ActivationGrads<T>& g, Rng& rng) override {
    const std::size_t top = s.features.size() - 1;
    const Mat<T>& x = s.features[top];
    const Mat<T>& y = t.features[top];
    g.features.assign(s.features.size(), Mat<T>());
    switch (cfg_.kind) {
      case AdaptLossKind::Mmd: {
        const double bw = cfg_.mmd_bandwidth ? *cfg_.mmd_bandwidth : median_bandwidth(x, y);
        if (!(bw > 0)) return T(0);  // all features coincide; nothing to align
        auto l = mmd_loss(x, y, bw);
        g.features[top] = std::move(l.grad_x);
        return l.value;
      }
      case AdaptLossKind::Dcoral: {
        auto l = coral_loss(x, y);
        g.features[top] = std::move(l.grad_x);
        return l.value;
      }
      case AdaptLossKind::Grl: {
        auto l = grl_adapt_loss(y, x, clf_, cfg_.grl_lambda);
        clf_opt_->step(clf_.params().values(), l.grad_classifier);
        g.features[top] = std::move(l.grad_target);
        return l.value;
      }
      case AdaptLossKind::Tcc: {
        auto l = tcc_loss(x, y, cfg_.tcc_tau);
        g.features[top] = std::move(l.grad_x);
        return l.value;
      }
      case AdaptLossKind::Sdtw: {
        auto l = sdtw_feature_loss(x, y, cfg_.sdtw_gamma);
        g.features[top] = std::move(l.grad_x);
        return l.value;
      }
      case AdaptLossKind::RndMse: {
        auto l = random_pair_mse_loss(x, y, rng);
        g.features[top] = std::move(l.grad_x);
        return l.value;
      }
      case AdaptLossKind::SyncMse: break;
    }
    throw InvalidArgument("FinalLevelObjective: unsupported loss kind");
  }

  bool monitors_progress() const override { return cfg_.kind != AdaptLossKind::Grl; }

 private:
  AdaptLossConfig cfg_;
  DomainClassifier<T> clf_;
  std::optional<Adam<T>> clf_opt_;
};

/// Unsupervised student adaptation with any supported loss. For SYNC_MSE the
/// computation (items, seeds, objective) is exactly that of distill_student
/// with the tas_only stage.
template <typename T>
TcnModel<T> adapt_with_loss(const TcnModel<T>& teacher, std::span<const FeaturePair<T>> pairs,
                            const AdaptLossConfig& loss, const TrainConfig& train, std::uint64_t seed,
                            TrainLog* log = nullptr) {
  loss.validate();
  SDT_REQUIRE(!pairs.empty(), "adapt_with_loss: no pairs available for pairing " + std::string(pairing_name(loss.pairing)));
  if (loss.kind == AdaptLossKind::SyncMse)
    SDT_REQUIRE(loss.pairing == Pairing::Synchronized, "adapt_with_loss: SYNC_MSE requires synchronized pairs");
  if (loss.pairing == Pairing::Synchronized)
    for (const auto& p : pairs)
      SDT_REQUIRE(p.exo.rows() == p.ego.rows(), "adapt_with_loss: synchronized pairing given unequal lengths");
  const auto items = make_adapt_items<T>(teacher, pairs, nullptr);
  TrainConfig tc = train;
  tc.seed = child_seed(seed, 12);
  if (loss.kind == AdaptLossKind::SyncMse) {
    LayerMseObjective<T> obj(resolve_layer_set(loss.layer_set, teacher.config().num_levels));
    return adapt_student(teacher, items, obj, tc, log);
  }
  FinalLevelObjective<T> obj(loss, teacher.config().hidden_dim, child_seed(seed, 13));
  return adapt_student(teacher, items, obj, tc, log);
}

}  // namespace sdt
