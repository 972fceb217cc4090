#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

namespace clickval {

/// All randomness in the library flows through Rng so seeded runs reproduce
/// byte-for-byte. std::mt19937_64 raw output is standardized; the helpers
/// below replace the implementation-defined std::*_distribution adaptors.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next() { return eng_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Unbiased integer in [0, n).
  uint64_t below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const uint64_t lim = (0 - n) % n;  // 2^64 mod n
    uint64_t x = eng_();
    while (x < lim) x = eng_();
    return x % n;
  }

  /// Index sampled proportionally to weights (need not sum to 1).
  size_t categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

/// Stable fan-out of one run seed into independent per-component streams.
/// derive_seed(s, "sim", 3) is the stream for journey 3 of the simulator.
uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index = 0);

}  // namespace clickval
