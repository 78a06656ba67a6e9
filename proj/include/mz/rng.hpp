#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace mz {

using Rng = std::mt19937_64;

// Derives an independent stream seed from (base seed, purpose, index) so one
// global seed fully determines every consumer without stream overlap.
// splitmix64 finalizer over the mixed words.
inline uint64_t derive_seed(uint64_t base, std::string_view purpose, uint64_t index = 0) {
  uint64_t h = base ^ 0x9e3779b97f4a7c15ULL;
  for (char c : purpose) {
    h ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 31;
  }
  h ^= index + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

// Symmetric Dirichlet(alpha) draw of the given size.
inline std::vector<double> dirichlet(double alpha, int size, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> x(size);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    x[i] = gamma(rng);
    sum += x[i];
  }
  if (sum <= 0.0) {  // all-zero draw is possible for tiny alpha; fall back to uniform
    for (int i = 0; i < size; ++i) x[i] = 1.0 / size;
    return x;
  }
  for (int i = 0; i < size; ++i) x[i] /= sum;
  return x;
}

// Draws an index proportionally to the (non-negative) weights.
// All-zero weights fall back to uniform.
inline int sample_index(const std::vector<double>& weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (total <= 0.0) {
    return static_cast<int>(unif(rng) * weights.size()) % static_cast<int>(weights.size());
  }
  double r = unif(rng) * total;
  double acc = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (r < acc) return static_cast<int>(i);
  }
  return static_cast<int>(weights.size()) - 1;
}

}  // namespace mz
