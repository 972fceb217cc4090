#include "clickval/rng.hpp"

namespace clickval {
namespace {

uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

size_t Rng::categorical(std::span<const double> weights) {
  if (weights.empty()) {
    throw std::invalid_argument("Rng::categorical: empty weight vector");
  }
  double total = 0;
  for (double w : weights) {
    if (w < 0) throw std::invalid_argument("Rng::categorical: negative weight");
    total += w;
  }
  if (total <= 0) {
    throw std::invalid_argument("Rng::categorical: weights sum to zero");
  }
  const double u = uniform() * total;
  double acc = 0;
  for (size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  return weights.size() - 1;  // guard against rounding at the top end
}

uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index) {
  uint64_t state = base ^ 0x5851f42d4c957f2dull;
  for (char c : tag) {
    state ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
    splitmix64(state);
  }
  state ^= index;
  splitmix64(state);
  uint64_t out = splitmix64(state);
  return out == 0 ? 0x9e3779b97f4a7c15ull : out;
}

}  // namespace clickval
