#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "yoto/config.hpp"

YOTO_BEGIN_NAMESPACE

/// Mixes a seed with a string key (FNV-1a folded through splitmix64). Used to
/// derive per-sample / per-image seeds so results do not depend on order.
std::uint64_t hash_seed(std::uint64_t seed, std::string_view key);
std::uint64_t splitmix64(std::uint64_t x);

/// mt19937_64 with portable conversions. The std:: distributions are
/// implementation-defined, so uniform and normal draws are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::swap(first[static_cast<std::ptrdiff_t>(i - 1)], first[static_cast<std::ptrdiff_t>(j)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0;
};

YOTO_END_NAMESPACE
