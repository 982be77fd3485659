#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace erpgan {

/// SplitMix64 finalizer; derives independent sub-seeds from (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Deterministic random stream.
///
/// The engine is std::mt19937_64 (fully specified by the standard). The
/// conversions to floating point are implemented here instead of using the
/// <random> distributions, whose algorithms are implementation-defined, so a
/// seed reproduces bit-identical values on every standard library.
///   uniform():  top 53 bits of one engine output, scaled by 2^-53, in [0, 1)
///   normal():   Box-Muller on two uniforms, second variate cached
///   below(n):   rejection sampling over the largest multiple of n
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates shuffle of `values` using below().
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace erpgan
