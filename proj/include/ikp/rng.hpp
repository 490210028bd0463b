#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ikp {

namespace detail {
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

// Seeded generator with hand-rolled uniform/normal mappings so that streams
// are identical across standard library implementations. Each worker owns
// its Rng; child() derives an independent stream from the original seed and
// a tag, regardless of how much the parent has been consumed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(detail::splitmix64(seed)), seed_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

  int uniform_int(int n) {  // [0, n)
    return static_cast<int>(uniform() * static_cast<double>(n)) % n;
  }

  // Standard normal via Box-Muller; second value cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(t);
    has_cached_ = true;
    return r * std::cos(t);
  }

  // Independent stream keyed by (original seed, tag).
  Rng child(uint64_t tag) const {
    return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(tag + 0x517cc1b727220a95ULL)));
  }

  uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 gen_;
  uint64_t seed_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace ikp
