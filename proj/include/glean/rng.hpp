#pragma once

#include <cstdint>

#include "glean/tensor.hpp"

namespace glean {

/// SplitMix64 finalizer applied to (seed, stream, counter). Pure function,
/// so the same triple yields the same bits on every platform.
std::uint64_t hash_u64(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);

/// Counter-based generator: the i-th draw depends only on (seed, stream, i).
/// Normal deviates use Box-Muller on two uniform draws, avoiding the
/// implementation-defined std:: distributions.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64() { return hash_u64(seed_, stream_, counter_++); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

Tensor normal_tensor(Shape shape, CounterRng& rng, float stddev = 1.0f);

}  // namespace glean
