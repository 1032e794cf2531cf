#pragma once

#include <cstdint>

#include "rwre/lattice.hpp"

namespace rwre {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Role tags separating the independent streams derived from one master seed.
enum class Role : std::uint64_t {
  Environment = 0x656e7669726f6e6dULL,
  Walk = 0x77616c6b77616c6bULL,
  Bootstrap = 0x626f6f7473747270ULL,
  Attempt = 0x617474656d707473ULL,
  Auxiliary = 0x6175786c69617279ULL,
};

/// Seed for replica `index` of stream `role`; a pure function of its inputs.
std::uint64_t derive_seed(std::uint64_t master, Role role, std::uint64_t index);

/// Coordinate fold used to key the environment:
///   fold(x) = mix64(mix64(mix64(x_0 + c_0) ^ (x_1 + c_1)) ^ (x_2 + c_2))
/// with the constants c_i listed in rng.cpp. The site key is mix64(seed ^ fold(x)).
std::uint64_t fold_site(const Site& x);
std::uint64_t site_key(std::uint64_t seed, const Site& x);

/// Counter-based stream: the k-th output (k >= 1) is mix64(key ^ (k * golden)).
class Stream {
 public:
  explicit Stream(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return mix64(key_ ^ counter_);
  }

  /// Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const auto k = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace rwre
