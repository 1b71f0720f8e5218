#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace cips {

// splitmix64 finalizer; used to expand one root seed into independent streams.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for a named training phase. Phases are numbered; see Phase below.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t phase) {
  return mix_seed(mix_seed(root) ^ mix_seed(phase + 0x5851f42d4c957f2dULL));
}

/// Fixed phase numbering for seed expansion. Changing it changes every output.
enum class Phase : std::uint64_t {
  kSynthetic = 1,
  kSplit = 2,
  kEncoderInit = 3,
  kItemInit = 4,
  kClustering = 5,
  kRecommender = 6,
  kNegativeSampling = 7,
};

constexpr std::uint64_t derive_seed(std::uint64_t root, Phase phase) {
  return derive_seed(root, static_cast<std::uint64_t>(phase));
}

/// Random source whose draws are identical across standard libraries.
/// std::*_distribution is implementation-defined, so the conversions are done
/// here by hand on top of the (fully specified) mt19937_64 engine.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cips
