#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "ozcal/normal.hpp"

namespace ozcal {

/// Seeded random stream with fully pinned draw algorithms.
///
/// mt19937_64 output is specified by the standard; the uniform and normal
/// mappings below are fixed here rather than delegated to the (library
/// defined) <random> distributions. Same seed, same draw sequence, on any
/// conforming toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform draw in the open interval (0,1): 53-bit mantissa, half-offset.
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via the inverse CDF; uniform01 never hits {0,1}.
  double normal() { return norm_quantile(uniform01()); }

  /// Uniform index in [0, n) by masked rejection (no modulo bias).
  std::size_t uniform_index(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent substream seed from a master seed, a stream label,
/// and up to three indices (splitmix64 chaining; stable across platforms).
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                          std::uint64_t i0 = 0, std::uint64_t i1 = 0,
                          std::uint64_t i2 = 0);

}  // namespace ozcal
