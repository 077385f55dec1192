// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Random small instances of every differentiable loss, wrapped for the
// central finite-difference checker. All of them run in double precision.

#pragma once

#include "sdt/baselines.hpp"
#include "sdt/distill.hpp"
#include "sdt/gradcheck.hpp"
#include "sdt/tasmodel.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace sdt::gradtest {

inline MatD normal(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  MatD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline std::vector<double> plain(const Buffer<double>& b) { return {b.begin(), b.end()}; }

inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// Packs matrices into one flat vector and reads them back.
struct Packer {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;

  std::vector<double> pack(std::initializer_list<const MatD*> ms) {
    std::vector<double> out;
    shapes.clear();
    for (const MatD* m : ms) {
      shapes.emplace_back(m->rows(), m->cols());
      out.insert(out.end(), m->data(), m->data() + m->size());
    }
    return out;
  }
  std::vector<MatD> unpack(const std::vector<double>& v) const {
    std::vector<MatD> out;
    std::size_t off = 0;
    for (auto [r, c] : shapes) {
      MatD m(r, c);
      std::copy(v.begin() + static_cast<std::ptrdiff_t>(off), v.begin() + static_cast<std::ptrdiff_t>(off + r * c),
                m.data());
      off += static_cast<std::size_t>(r * c);
      out.push_back(std::move(m));
    }
    return out;
  }
  static void append(std::vector<double>& g, const MatD& m) { g.insert(g.end(), m.data(), m.data() + m.size()); }
};

inline GradCheckOptions options(std::uint64_t seed) {
  GradCheckOptions o;
  o.seed = seed;
  return o;
}

inline TcnConfig small_tcn(Rng& rng) {
  TcnConfig c;
  c.input_dim = 3;
  c.hidden_dim = 4;
  c.num_classes = 3;
  c.num_levels = uniform_int(rng, 1, 3);
  c.kernel_width = 3;
  c.seed = rng();
  return c;
}

inline GradCheckReport check_ce_loss(std::uint64_t seed) {
  Rng rng(seed);
  const TcnConfig cfg = small_tcn(rng);
  const int frames = uniform_int(rng, 3, 13);
  const MatD x = normal(rng, frames, cfg.input_dim);
  FrameLabels y(static_cast<std::size_t>(frames));
  for (auto& v : y) v = uniform_int(rng, 0, cfg.num_classes - 1);
  TcnModel<double> model(cfg);
  auto loss = [&](const std::vector<double>& p, std::vector<double>* grad) {
    model.params().values().assign(p.begin(), p.end());
    const auto tr = forward_trace(model, x);
    const auto l = ce_loss(model, tr, y);
    if (grad) grad->assign(l.grad.begin(), l.grad.end());
    return l.total;
  };
  return gradient_check(loss, plain(TcnModel<double>(cfg).params().values()), options(seed));
}

/// d ce_loss / d input through backward()'s input gradient.
inline GradCheckReport check_tcn_input_grad(std::uint64_t seed) {
  Rng rng(seed);
  const TcnConfig cfg = small_tcn(rng);
  const int frames = uniform_int(rng, 3, 13);
  FrameLabels y(static_cast<std::size_t>(frames));
  for (auto& v : y) v = uniform_int(rng, 0, cfg.num_classes - 1);
  const TcnModel<double> model(cfg);
  auto loss = [&](const std::vector<double>& p, std::vector<double>* grad) {
    MatD x(frames, cfg.input_dim);
    std::copy(p.begin(), p.end(), x.data());
    const auto tr = forward_trace(model, x);
    ActivationGrads<double> g;
    double total = cross_entropy(tr.acts.ensemble, y, &g.ensemble);
    g.features.resize(cfg.num_levels);
    for (int l = 1; l <= cfg.num_levels; ++l) {
      total += 0.5 * tr.acts.features[l - 1].squaredNorm();
      g.features[l - 1] = tr.acts.features[l - 1];
    }
    if (grad) {
      MatD gx;
      backward(model, tr, g, &gx);
      grad->assign(gx.data(), gx.data() + gx.size());
    }
    return total;
  };
  const MatD x0 = normal(rng, frames, cfg.input_dim);
  return gradient_check(loss, {x0.data(), x0.data() + x0.size()}, options(seed));
}

/// Random adapter with a non-zero output projection so every path is exercised.
inline ResidualAdapter<double> random_adapter(Rng& rng, int dim) {
  ResidualAdapter<double> a(AdapterConfig{dim, uniform_int(rng, 2, 6), uniform_int(rng, 1, 3), rng()});
  std::normal_distribution<double> n(0.0, 0.5);
  for (auto& v : a.params().values()) v = n(rng);
  return a;
}

inline GradCheckReport check_feature_distill_loss(std::uint64_t seed) {
  Rng rng(seed);
  const int dim = uniform_int(rng, 1, 4), clips = uniform_int(rng, 1, 3);
  ResidualAdapter<double> adapter = random_adapter(rng, dim);
  std::vector<MatD> ego, exo;
  for (int j = 0; j < clips; ++j) {
    const int t = uniform_int(rng, 1, 6);
    ego.push_back(normal(rng, t, dim));
    exo.push_back(normal(rng, t, dim));
  }
  const auto start = plain(adapter.params().values());
  auto loss = [&](const std::vector<double>& p, std::vector<double>* grad) {
    adapter.params().values().assign(p.begin(), p.end());
    const auto l = feature_distill_loss<double>(adapter, ego, exo);
    if (grad) grad->assign(l.grad.begin(), l.grad.end());
    return l.value;
  };
  return gradient_check(loss, start, options(seed));
}

inline GradCheckReport check_tas_distill_loss(std::uint64_t seed) {
  Rng rng(seed);
  const TcnConfig cfg = small_tcn(rng);
  TcnConfig tcfg = cfg;
  tcfg.seed = rng();
  const TcnModel<double> teacher(tcfg);
  TcnModel<double> student(cfg);
  std::vector<int> layers;
  for (int l = 1; l <= cfg.num_levels; ++l)
    if (std::bernoulli_distribution(0.6)(rng)) layers.push_back(l);
  std::vector<MatD> ego, exo;
  for (int j = 0, m = uniform_int(rng, 1, 2); j < m; ++j) {
    const int t = uniform_int(rng, 2, 10);
    ego.push_back(normal(rng, t, cfg.input_dim));
    exo.push_back(normal(rng, t, cfg.input_dim));
  }
  const auto start = plain(student.params().values());
  auto loss = [&](const std::vector<double>& p, std::vector<double>* grad) {
    student.params().values().assign(p.begin(), p.end());
    const auto l = tas_distill_loss<double>(student, teacher, ego, exo, layers);
    if (grad) grad->assign(l.grad.begin(), l.grad.end());
    return l.value;
  };
  return gradient_check(loss, start, options(seed));
}

/// Wraps a PairLoss(x, y) as a loss over the concatenation of x and y.
template <typename F>
GradCheckReport check_pair_loss(const MatD& x, const MatD& y, F&& f, std::uint64_t seed) {
  Packer pk;
  const auto start = pk.pack({&x, &y});
  auto loss = [&](const std::vector<double>& p, std::vector<double>* grad) {
    const auto m = pk.unpack(p);
    const PairLoss<double> l = f(m[0], m[1]);
    if (grad) {
      grad->clear();
      Packer::append(*grad, l.grad_x);
      Packer::append(*grad, l.grad_y);
    }
    return l.value;
  };
  return gradient_check(loss, start, options(seed));
}

inline GradCheckReport check_mmd_loss(std::uint64_t seed) {
  Rng rng(seed);
  const int d = uniform_int(rng, 1, 4);
  const MatD x = normal(rng, uniform_int(rng, 1, 6), d);
  const MatD y = normal(rng, uniform_int(rng, 1, 6), d, 1.5);
  const double sigma = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
  return check_pair_loss(x, y, [&](const MatD& a, const MatD& b) { return mmd_loss(a, b, sigma); }, seed);
}

inline GradCheckReport check_coral_loss(std::uint64_t seed) {
  Rng rng(seed);
  const int d = uniform_int(rng, 1, 4);
  const MatD x = normal(rng, uniform_int(rng, 2, 7), d);
  const MatD y = normal(rng, uniform_int(rng, 2, 7), d, 2.0);
  return check_pair_loss(x, y, [](const MatD& a, const MatD& b) { return coral_loss(a, b); }, seed);
}

inline GradCheckReport check_tcc_loss(std::uint64_t seed) {
  Rng rng(seed);
  const int d = uniform_int(rng, 1, 4);
  const MatD u = normal(rng, uniform_int(rng, 2, 6), d);
  const MatD v = normal(rng, uniform_int(rng, 2, 6), d);
  const double tau = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
  return check_pair_loss(u, v, [&](const MatD& a, const MatD& b) { return tcc_loss(a, b, tau); }, seed);
}

inline GradCheckReport check_sdtw_loss(std::uint64_t seed) {
  Rng rng(seed);
  const int d = uniform_int(rng, 1, 3);
  const MatD x = normal(rng, uniform_int(rng, 1, 6), d);
  const MatD y = normal(rng, uniform_int(rng, 1, 6), d);
  const double gamma = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
  return check_pair_loss(x, y, [&](const MatD& a, const MatD& b) { return sdtw_feature_loss(a, b, gamma); }, seed);
}

/// Gradient of soft-DTW with respect to the cost matrix itself.
inline GradCheckReport check_sdtw_cost(std::uint64_t seed) {
  Rng rng(seed);
  const MatD c = normal(rng, uniform_int(rng, 1, 6), uniform_int(rng, 1, 6)).cwiseAbs();
  const double gamma = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
  Packer pk;
  const auto start = pk.pack({&c});
  auto loss = [&](const std::vector<double>& p, std::vector<double>* grad) {
    const auto s = sdtw_loss(pk.unpack(p)[0], gamma);
    if (grad) grad->assign(s.grad.data(), s.grad.data() + s.grad.size());
    return s.value;
  };
  return gradient_check(loss, start, options(seed));
}

inline GradCheckReport check_random_pair_mse_loss(std::uint64_t seed) {
  Rng rng(seed);
  const int d = uniform_int(rng, 1, 4);
  const MatD ego = normal(rng, uniform_int(rng, 1, 6), d);
  const MatD exo = normal(rng, uniform_int(rng, 1, 6), d);
  const std::uint64_t assign_seed = rng();
  return check_pair_loss(
      ego, exo, [&](const MatD& a, const MatD& b) { return random_pair_mse_loss(a, b, assign_seed); }, seed);
}

/// GRL sign protocol: the reported feature gradient must equal -lambda times
/// the finite-difference gradient of the domain loss, and the classifier
/// gradient must be the plain one.
inline GradCheckReport check_grl_loss(std::uint64_t seed) {
  Rng rng(seed);
  const int d = uniform_int(rng, 1, 4);
  const MatD src = normal(rng, uniform_int(rng, 1, 5), d);
  const MatD tgt = normal(rng, uniform_int(rng, 1, 5), d, 1.5);
  DomainClassifier<double> clf(d, uniform_int(rng, 2, 6), rng());
  const double lambda = std::uniform_real_distribution<double>(0.25, 2.0)(rng);

  Packer pk;
  const auto feats = pk.pack({&src, &tgt});
  auto feature_loss = [&](const std::vector<double>& p, std::vector<double>* grad) {
    const auto m = pk.unpack(p);
    const auto l = grl_adapt_loss(m[0], m[1], clf, lambda);
    if (grad) {
      grad->clear();
      Packer::append(*grad, l.grad_source / -lambda);
      Packer::append(*grad, l.grad_target / -lambda);
    }
    return l.value;
  };
  GradCheckReport rf = gradient_check(feature_loss, feats, options(seed));

  const auto start = plain(clf.params().values());
  auto clf_loss = [&](const std::vector<double>& p, std::vector<double>* grad) {
    clf.params().values().assign(p.begin(), p.end());
    const auto l = grl_adapt_loss(src, tgt, clf, lambda);
    if (grad) grad->assign(l.grad_classifier.begin(), l.grad_classifier.end());
    return l.value;
  };
  GradCheckReport rc = gradient_check(clf_loss, start, options(seed));
  GradCheckReport worst = rf.max_rel_error >= rc.max_rel_error ? rf : rc;
  worst.passed = rf.passed && rc.passed;
  return worst;
}

struct NamedCheck {
  std::string name;
  std::function<GradCheckReport(std::uint64_t)> run;
};

inline std::vector<NamedCheck> all_checks() {
  return {{"ce_loss", check_ce_loss},
          {"tcn_input_grad", check_tcn_input_grad},
          {"feature_distill_loss", check_feature_distill_loss},
          {"tas_distill_loss", check_tas_distill_loss},
          {"mmd_loss", check_mmd_loss},
          {"coral_loss", check_coral_loss},
          {"tcc_loss", check_tcc_loss},
          {"sdtw_loss", check_sdtw_loss},
          {"sdtw_cost", check_sdtw_cost},
          {"random_pair_mse_loss", check_random_pair_mse_loss},
          {"grl_sign_protocol", check_grl_loss}};
}

}  // namespace sdt::gradtest
