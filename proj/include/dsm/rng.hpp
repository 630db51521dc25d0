#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace dsm {

/// SplitMix64 finalizer. Used both to expand seeds and as the 64-bit mixer
/// behind the random-hash router and bucket-key hashing.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Combines several 64-bit values into one seed. Order matters.
std::uint64_t derive_seed(std::span<const std::uint64_t> parts) noexcept;
std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b) noexcept;
std::uint64_t derive_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept;

/// Canonical bit pattern of a double: -0.0 folds onto +0.0 and every NaN onto
/// one quiet NaN, so equal values always hash equally.
std::uint64_t canonical_bits(double v) noexcept;

/**
 * Deterministic generator used for every random draw in the library.
 *
 * The stream is xoshiro256** seeded by four consecutive SplitMix64 outputs.
 * Uniform doubles take the top 53 bits; normals come from the cosine branch
 * of Box-Muller, one normal per two uniforms and no cached second value.
 * None of this goes through <random> distributions, whose output differs
 * between standard library implementations.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t next_u64() noexcept;

  /// Uniform on [0, 1).
  double uniform() noexcept;
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) noexcept;
  /// Standard normal via Box-Muller.
  double normal() noexcept;
  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;
  /// Fair coin mapped to +1 / -1.
  int sign() noexcept;

 private:
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace dsm
