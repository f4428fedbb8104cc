#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace caad {

// Deterministic splittable RNG. All randomness in the project flows through
// this class so that runs are reproducible bit-for-bit across platforms;
// std::normal_distribution and friends are implementation-defined and are
// deliberately not used.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n), n > 0
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  bool bernoulli(double p) { return uniform() < p; }

  // standard normal via Box-Muller (no caching: two uniforms per draw)
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Derive an independent child stream from a purpose label plus indices.
  // The parent state is not advanced.
  Rng split(std::string_view purpose, std::uint64_t a = 0, std::uint64_t b = 0,
            std::uint64_t c = 0) const {
    std::uint64_t h = state_ ^ 0x6a09e667f3bcc909ULL;
    for (char ch : purpose) h = mix(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(ch)));
    h = mix(h ^ a);
    h = mix(h ^ b);
    h = mix(h ^ c);
    return Rng(h);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdULL;
    z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
    return z ^ (z >> 33);
  }

  std::uint64_t state_;
};

}  // namespace caad
