#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rml {

// 64-bit FNV-1a, used for labeled stream derivation and config hashing.
std::uint64_t fnv1a64(std::string_view text);

std::uint64_t splitmix64(std::uint64_t x);

// Seeded random stream with explicit, engine-independent transforms so that
// draws are reproducible across platforms and build configurations for a
// given seed. Copying a stream snapshots its state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();

  // Uniform integer in [0, bound). bound must be nonzero.
  std::uint64_t uniform_int(std::uint64_t bound);

  // Box-Muller normal draw; the paired value is cached for the next call.
  double normal(double mean = 0.0, double stddev = 1.0);

  // Independent child stream determined by this stream's seed and the label,
  // regardless of how much the parent has already been consumed.
  RngStream derive(std::string_view label) const;
  RngStream derive(std::string_view label, std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace rml
