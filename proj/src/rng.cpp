#include "clhpo/rng.hpp"

namespace clhpo {

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  std::uniform_int_distribution<std::int64_t> dist(lo, hi);
  return dist(gen_);
}

double Rng::uniform_real(double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(gen_);
}

double Rng::normal() {
  // Fresh distribution per call: normal_distribution caches a second draw,
  // which would make interleaved call sites order-dependent.
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(gen_);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c) {
  std::uint64_t h = splitmix64(base);
  h = splitmix64(h ^ (a + 0x9e3779b97f4a7c15ULL));
  h = splitmix64(h ^ (b + 0xc2b2ae3d27d4eb4fULL));
  h = splitmix64(h ^ (c + 0x165667b19e3779f9ULL));
  return h;
}

}  // namespace clhpo
