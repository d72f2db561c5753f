#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "sunroll/linalg.hpp"

namespace sunroll {

// SplitMix64 finalizer. Used to derive independent stream seeds so that
// per-sample generation is identical whether run serially or in parallel.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Deterministic random source. The engine is mt19937_64 (its output sequence
// is fixed by the standard); uniform doubles use the top 53 bits and normals
// use the Box-Muller transform, so draws reproduce across compilers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed)) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1).
  double uniform();
  // Standard normal, Box-Muller with a cached second variate.
  double normal();
  // +1 or -1 with equal probability.
  double rademacher() { return (engine_() >> 63) ? 1.0 : -1.0; }
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  Vector normal_vector(Index n);
  Matrix normal_matrix(Index rows, Index cols);

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sunroll
