#pragma once

#include <cstdint>
#include <string_view>

namespace helix {

/// Counter-based random stream: draw n is a pure hash of (key, n).
///
/// Streams are derived by name or integer so every stochastic site
/// (init, masking, dropout, data) gets an independent sequence that does not
/// depend on how many draws other sites made.
class Rng {
 public:
  Rng() = default;
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}
  Rng(std::uint64_t seed, std::string_view stream) : Rng(Rng(seed).derive(stream)) {}

  Rng derive(std::string_view name) const;
  Rng derive(std::uint64_t index) const;

  std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  // Standard normal via Box-Muller (consumes two draws).
  double normal();

  std::uint64_t counter() const { return counter_; }

 private:
  explicit Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}
  static std::uint64_t mix(std::uint64_t z);

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace helix
