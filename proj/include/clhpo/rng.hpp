#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace clhpo {

// Seeded RNG wrapper. Every stochastic choice in the library goes through an
// explicitly seeded Rng so runs replay exactly; there is no global RNG state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform integer in [lo, hi], both inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Uniform real in [lo, hi).
  double uniform_real(double lo, double hi);

  // Standard normal draw.
  double normal();

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

// Deterministic sub-seed derivation. Combines a base seed with stream
// coordinates (task id, config index, purpose tag) so that concurrent trials
// draw from independent, reproducible streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a = 0, std::uint64_t b = 0,
                          std::uint64_t c = 0);

}  // namespace clhpo
