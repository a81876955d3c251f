#pragma once

// Seeded randomness with bit-reproducible results across platforms.
// mt19937_64 output is fully pinned by the standard; the distribution
// helpers here avoid std::*_distribution, whose sequences are
// implementation-defined.

#include <cmath>
#include <cstdint>
#include <random>

#include "aml/tensor.hpp"

namespace aml {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is irrelevant at these ranges.
  std::int64_t uniform_int(std::int64_t n) {
    return static_cast<std::int64_t>(gen_() % static_cast<std::uint64_t>(n));
  }

  // Box-Muller; one fresh pair per call keeps the draw count predictable.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename T>
  void fill_normal(Tensor<T>& t, double stddev, double mean = 0.0) {
    for (std::int64_t i = 0; i < t.numel(); ++i)
      t[i] = static_cast<T>(mean + stddev * normal());
  }

  template <typename T>
  void fill_uniform(Tensor<T>& t, double lo, double hi) {
    for (std::int64_t i = 0; i < t.numel(); ++i)
      t[i] = static_cast<T>(uniform(lo, hi));
  }

  template <typename It>
  void shuffle(It first, It last) {
    auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      auto j = uniform_int(i + 1);
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace aml
