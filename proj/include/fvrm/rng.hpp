#pragma once

#include <array>
#include <cstdint>

namespace fvrm {

/// Counter-based random stream (Philox 4x32-10), keyed by (seed, stream id).
/// Streams with distinct keys are statistically independent and reproducible
/// regardless of scheduling: replica i always draws the same sequence from
/// RngStream(seed, i), no matter which worker runs it.
class RngStream {
public:
  RngStream(std::uint64_t seed, std::uint64_t stream);

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  std::uint64_t next_u64();

  /// Exponential with the given rate (mean 1/rate).
  double exponential(double rate);

  /// Standard normal (Box-Muller, one spare cached).
  double normal();

  /// Gamma(shape, rate) via Marsaglia-Tsang squeeze.
  double gamma(double shape, double rate);

  /// Index in [0, n) from the discrete distribution with the given weights
  /// (need not be normalized; n taken from the span length).
  int discrete(const double* weights, int n);

private:
  std::array<std::uint32_t, 4> counter_;
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> block_;
  int block_pos_;
  double spare_normal_;
  bool has_spare_;

  void fill_block();
  std::uint32_t next_u32();
};

} // namespace fvrm
