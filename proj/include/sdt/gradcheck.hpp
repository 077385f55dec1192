// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference verification of analytic gradients.

#pragma once

#include "sdt/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace sdt {

/// Scalar loss over a flat point. When `grad` is non-null it must be filled
/// with the analytic gradient (same length as the point).
using LossFn = std::function<double(const std::vector<double>& point, std::vector<double>* grad)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Components whose analytic and numeric magnitudes are both below this
  // floor are compared absolutely against it.
  double floor = 1e-6;
  std::size_t max_checks = 64;  // 0 checks every component
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::string message;
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline GradCheckReport gradient_check(const LossFn& loss, std::vector<double> point, const GradCheckOptions& opt = {}) {
  GradCheckReport rep;
  std::vector<double> analytic(point.size(), 0.0);
  const double f0 = loss(point, &analytic);
  if (!std::isfinite(f0)) {
    rep.message = "loss is not finite at the check point";
    return rep;
  }
  SDT_REQUIRE(analytic.size() == point.size(), "gradient_check: gradient length differs from point length");
  std::vector<std::size_t> idx(point.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (opt.max_checks > 0 && idx.size() > opt.max_checks) {
    Rng rng(opt.seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(opt.max_checks);
    std::sort(idx.begin(), idx.end());
  }
  for (std::size_t i : idx) {
    const double saved = point[i];
    point[i] = saved + opt.step;
    const double up = loss(point, nullptr);
    point[i] = saved - opt.step;
    const double down = loss(point, nullptr);
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      rep.message = "loss is not finite at a perturbed point (index " + std::to_string(i) + ")";
      rep.worst_index = i;
      return rep;
    }
    const double numeric = (up - down) / (2.0 * opt.step);
    const double err = relative_error(analytic[i], numeric, opt.floor);
    ++rep.checked;
    if (err >= rep.max_rel_error) {
      rep.max_rel_error = err;
      rep.worst_index = i;
      rep.worst_analytic = analytic[i];
      rep.worst_numeric = numeric;
    }
  }
  rep.passed = rep.max_rel_error <= opt.tolerance;
  std::ostringstream ss;
  ss << (rep.passed ? "ok" : "FAILED") << ": max relative error " << rep.max_rel_error << " at index "
     << rep.worst_index << " (analytic " << rep.worst_analytic << ", numeric " << rep.worst_numeric << ") over "
     << rep.checked << " components";
  rep.message = ss.str();
  return rep;
}

}  // namespace sdt
