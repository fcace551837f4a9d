#pragma once

#include "agflow/types.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace agflow {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Per-run seed derived from (master seed, run index). Runs of a multi-seed
/// experiment are reproducible individually without replaying earlier runs.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return detail::splitmix64(master ^ detail::splitmix64(index + 1));
}

/// Seeded generator with a fully pinned output sequence: mt19937_64 is
/// specified by the standard, and the normal transform below is Box-Muller
/// rather than std::normal_distribution, whose algorithm is
/// implementation-defined and differs between libstdc++ and libc++.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform draw in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  /// Row-major fill; draw order is part of the reproducibility contract.
  template <typename Scalar = double>
  Matrix<Scalar> normal_matrix(Index rows, Index cols) {
    Matrix<Scalar> out(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) out(i, j) = static_cast<Scalar>(normal());
    return out;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace agflow
