#ifndef QAFFDE_RNG_HPP
#define QAFFDE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace qaffde {

// Deterministic random source. std::normal_distribution is
// implementation-defined, so the Gaussian sampler is spelled out
// (Box-Muller) to keep seeded runs reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1).
  double uniform() { return (gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller, caching the spare deviate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // Uniform index in [0, n).
  std::uint64_t index(std::uint64_t n) {
    // Rejection-free modulo is fine here: n is tiny relative to 2^64.
    return gen_() % n;
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace qaffde

#endif  // QAFFDE_RNG_HPP
