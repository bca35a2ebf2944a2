#pragma once

#include <cstdint>
#include <string_view>

namespace mmt {

/// Deterministic pseudo-random stream.
///
/// Algorithm: SplitMix64 (Steele, Lea, Flood 2014) over a 64-bit state.
/// Uniform doubles take the top 53 bits; normals use Box-Muller without
/// caching. Streams are owned by the caller and passed explicitly; `fork`
/// derives an independent child stream from (seed, key) without advancing
/// the parent, which lets stochastic sites be addressed by key instead of
/// by draw order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), state_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  double normal();
  /// Normal(0, stddev) resampled until it falls within two standard deviations.
  double truncated_normal(double stddev);
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  Rng fork(std::uint64_t key) const;
  Rng fork(std::string_view key) const;

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

std::uint64_t mix64(std::uint64_t x);
/// FNV-1a, used to turn textual stream keys into integers.
std::uint64_t hash_key(std::string_view key);

}  // namespace mmt
