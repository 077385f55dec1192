// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "sdt/common.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace sdt {

/// Named 2-D slice of a flat parameter buffer.
struct TensorSlot {
  std::string name;
  std::size_t offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
  bool operator==(const TensorSlot&) const = default;
};

/// Flat parameter storage with named row-major tensor views. Gradients use
/// the same layout so optimizers and checkers work on plain vectors.
template <typename T>
class ParamSet {
 public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    slots_.push_back({std::move(name), values_.size(), rows, cols});
    values_.resize(values_.size() + static_cast<std::size_t>(rows * cols), T(0));
    return slots_.size() - 1;
  }

  Eigen::Map<Mat<T>> view(std::size_t slot) {
    const auto& s = slots_[slot];
    return {values_.data() + s.offset, s.rows, s.cols};
  }
  Eigen::Map<const Mat<T>> view(std::size_t slot) const {
    const auto& s = slots_[slot];
    return {values_.data() + s.offset, s.rows, s.cols};
  }

  /// View of the same slot inside an external buffer with this layout.
  Eigen::Map<Mat<T>> view_in(Buffer<T>& buf, std::size_t slot) const {
    const auto& s = slots_[slot];
    return {buf.data() + s.offset, s.rows, s.cols};
  }

  Buffer<T>& values() { return values_; }
  const Buffer<T>& values() const { return values_; }
  const std::vector<TensorSlot>& slots() const { return slots_; }
  std::size_t size() const { return values_.size(); }
  Buffer<T> zeros_like() const { return Buffer<T>(values_.size(), T(0)); }

  bool operator==(const ParamSet&) const = default;

 private:
  std::vector<TensorSlot> slots_;
  Buffer<T> values_;
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // L2 term added to the gradient
};

template <typename T>
class Adam {
 public:
  Adam(std::size_t n, AdamOptions opt) : opt_(opt), m_(n, 0.0), v_(n, 0.0) {}

  /// Elements with `active[i] == 0` are left alone, moments and decay included.
  void step(Buffer<T>& params, const Buffer<T>& grad, const std::vector<char>* active = nullptr) {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (active && !(*active)[i]) continue;
      const double g = static_cast<double>(grad[i]) + opt_.weight_decay * static_cast<double>(params[i]);
      m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * g;
      v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * g * g;
      const double update = opt_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + opt_.eps);
      params[i] = static_cast<T>(static_cast<double>(params[i]) - update);
    }
  }

 private:
  AdamOptions opt_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

/// Rescales `grad` so its L2 norm is at most `max_norm` (0 leaves it as is).
template <typename T>
Buffer<T> clip_by_norm(Buffer<T> grad, double max_norm) {
  if (max_norm <= 0) return grad;
  double sq = 0.0;
  for (T g : grad) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (T& g : grad) g = static_cast<T>(static_cast<double>(g) * scale);
  }
  return grad;
}

template <typename T>
void sgd_step(Buffer<T>& params, const Buffer<T>& grad, double lr) {
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i] = static_cast<T>(static_cast<double>(params[i]) - lr * static_cast<double>(grad[i]));
}

}  // namespace sdt
