#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace nlclab {

/// Stateless 64-bit mixer used to derive independent RNG streams from a base
/// seed plus a chain of tags (span index, purpose id, ...). Same inputs give
/// the same stream on every platform and regardless of evaluation order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base) { return splitmix64(base); }

template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, Tags... rest) {
  return derive_seed(splitmix64(base ^ (tag + 0x632be59bd9b4e019ULL)), rest...);
}

/// Seeded random source. Gaussians use an explicit Box-Muller transform so the
/// byte stream does not depend on the standard library's distribution
/// implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  std::uint64_t bits() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal.
  double gauss() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Circularly symmetric complex normal with E|z|^2 = 1.
  std::complex<double> cgauss() {
    return {gauss() * M_SQRT1_2, gauss() * M_SQRT1_2};
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Haar-distributed SU(2) matrix [[a, b], [-conj(b), conj(a)]], |a|^2+|b|^2=1.
struct Su2 {
  std::complex<double> a{1.0, 0.0};
  std::complex<double> b{0.0, 0.0};
};

inline Su2 haar_su2(Rng& rng) {
  // Normalized quaternion of iid gaussians is Haar on SU(2).
  double q0 = rng.gauss(), q1 = rng.gauss(), q2 = rng.gauss(), q3 = rng.gauss();
  double n = std::sqrt(q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3);
  if (n == 0.0) return {};
  q0 /= n; q1 /= n; q2 /= n; q3 /= n;
  return {{q0, q1}, {q2, q3}};
}

}  // namespace nlclab
