#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "edm/types.hpp"

namespace edm {

/// Counter-based generator: draw k is a pure function of (seed, stream, k).
/// Every value comes from a SplitMix64 finalizer applied to a keyed counter,
/// so two generators built from the same seed and stream replay the same
/// sequence regardless of platform or standard library.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal via Box-Muller; consumes exactly two counters.
  double normal();
  Vec normal_vector(Eigen::Index n);

  std::uint64_t counter() const { return counter_; }
  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

/// Per-item seed (base xor index). The generator constructor mixes the seed,
/// so neighbouring indices still give unrelated streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) { return base ^ index; }

/// Fisher-Yates permutation of 0..n-1 driven by the counter generator.
std::vector<std::size_t> permutation(std::size_t n, CounterRng& rng);

}  // namespace edm
