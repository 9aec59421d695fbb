#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "clusterattn/types.hpp"

namespace clusterattn {

// Seeded RNG with distributions derived from raw engine words only, so
// identical seeds give identical streams on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n >= 1. Modulo bias is irrelevant at the
  // ranges used here (n << 2^64).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index needs n >= 1");
    return engine_() % n;
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<Index> permutation(Index n) {
    std::vector<Index> p(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    shuffle(p);
    return p;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

template <typename Scalar>
MatrixX<Scalar> random_normal_matrix(Rng& rng, Index rows, Index cols) {
  MatrixX<Scalar> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      m(i, j) = static_cast<Scalar>(rng.normal());
  return m;
}

// Glorot-uniform weight matrix: entries on [-a, a], a = sqrt(6/(in+out)).
template <typename Scalar>
MatrixX<Scalar> glorot_matrix(Rng& rng, Index in, Index out) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  MatrixX<Scalar> w(in, out);
  for (Index i = 0; i < in; ++i)
    for (Index j = 0; j < out; ++j) w(i, j) = static_cast<Scalar>(rng.uniform(-a, a));
  return w;
}

}  // namespace clusterattn
