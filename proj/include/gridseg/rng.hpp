#pragma once

#include <cstdint>

namespace gridseg {

/// Counter-based random stream. Draw k of a stream is a pure function of
/// (seed, k), so sequences are reproducible on every platform and a stream
/// can be forked without sharing state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform integer on [0, bound); bound must be positive.
  std::uint64_t uniform_int(std::uint64_t bound);
  /// Uniform integer on [lo, hi].
  std::int64_t uniform_range(std::int64_t lo, std::int64_t hi);
  double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller (two draws per sample, no caching).
  double normal();

  /// Independent child stream identified by `stream_id`.
  RngStream fork(std::uint64_t stream_id) const;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace gridseg
