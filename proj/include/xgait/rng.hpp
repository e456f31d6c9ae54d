#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace xgait {

// splitmix64; used to derive stream seeds from (master, ids) so parallel
// producers never share generator state.
inline uint64_t hash_mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  uint64_t h = hash_mix(master);
  h = hash_mix(h ^ a);
  h = hash_mix(h ^ b);
  h = hash_mix(h ^ c);
  return h;
}

// mt19937_64 with hand-rolled distributions. std:: distributions are
// implementation-defined, which would break byte-identical reproducibility
// across standard libraries; these formulas are pinned.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : eng_(seed) {}

  uint64_t raw() { return eng_(); }

  // uniform in [0, 1), 53-bit resolution
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // uniform integer in [0, n); modulo bias is negligible for n << 2^64
  uint64_t randint(uint64_t n) { return n == 0 ? 0 : eng_() % n; }

  // Box-Muller, one value per call (no cached spare, keeps state serializable)
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform01();
    double u2 = uniform01();
    // avoid log(0)
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // in-place Fisher-Yates
  template <class Vec>
  void shuffle(Vec& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(randint(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace xgait
