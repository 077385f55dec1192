// Copyright (C) 2026 The sdt Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sdt {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using MatF = Mat<float>;
using MatD = Mat<double>;

/// Flat buffer that Eigen maps into. The allocator guarantees the full SIMD
/// alignment; with plain std::vector Eigen picks its vector peeling from the
/// runtime address, so float results drift with heap layout.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

/// Raised when a precondition on an argument does not hold.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a file does not follow its on-disk format.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SDT_REQUIRE(cond, msg)                        \
  do {                                                \
    if (!(cond)) throw ::sdt::InvalidArgument(msg);   \
  } while (0)

using Rng = std::mt19937_64;

/// Mixes a parent seed with a stream index into an independent child seed.
inline std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Worker cap from SDT_THREADS, falling back to the hardware concurrency.
inline unsigned worker_threads() {
  if (const char* env = std::getenv("SDT_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<unsigned>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace sdt
