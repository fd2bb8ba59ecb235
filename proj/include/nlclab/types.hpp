#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace nlclab {

using cplx = std::complex<double>;

/// One complex sample stream. Field amplitudes are dimensionless until a
/// launch power is applied at the link entry, after which |v|^2 is in watts.
struct ComplexSequence {
  std::vector<cplx> samples;
  double sample_rate_hz = 0.0;
};

/// Dual-polarization waveform: the two streams share one time base.
/// center_offset_hz is the carrier offset of this signal relative to the
/// superchannel center; propagation and compensation filters evaluate their
/// dispersion phase at the absolute frequency (baseband + offset).
struct DualPolSignal {
  std::vector<cplx> x;
  std::vector<cplx> y;
  double sample_rate_hz = 0.0;
  double center_offset_hz = 0.0;

  std::size_t size() const { return x.size(); }

  void validate() const {
    if (x.size() != y.size())
      throw std::invalid_argument("DualPolSignal: polarization length mismatch");
    if (!(sample_rate_hz > 0.0))
      throw std::invalid_argument("DualPolSignal: sample_rate must be > 0");
  }
};

inline DualPolSignal make_signal(std::size_t n, double sample_rate_hz,
                                 double center_offset_hz = 0.0) {
  DualPolSignal s;
  s.x.assign(n, cplx(0.0, 0.0));
  s.y.assign(n, cplx(0.0, 0.0));
  s.sample_rate_hz = sample_rate_hz;
  s.center_offset_hz = center_offset_hz;
  return s;
}

/// Mean power over both polarizations, sum_n (|x|^2 + |y|^2) / N.
inline double mean_power(const DualPolSignal& s) {
  if (s.x.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < s.x.size(); ++i)
    acc += std::norm(s.x[i]) + std::norm(s.y[i]);
  return acc / static_cast<double>(s.x.size());
}

inline double total_energy(const DualPolSignal& s) {
  return mean_power(s) * static_cast<double>(s.size());
}

inline void scale(DualPolSignal& s, double factor) {
  for (auto& v : s.x) v *= factor;
  for (auto& v : s.y) v *= factor;
}

inline void scale_to_power(DualPolSignal& s, double target_power) {
  const double p = mean_power(s);
  if (p <= 0.0) throw std::invalid_argument("scale_to_power: zero-power signal");
  scale(s, std::sqrt(target_power / p));
}

inline bool all_finite(const DualPolSignal& s) {
  for (const auto& v : s.x)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  for (const auto& v : s.y)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

inline double dbm_to_watt(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }
inline double watt_to_dbm(double watt) { return 10.0 * std::log10(watt / 1e-3); }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

/// Relative RMS distance between two waveforms of equal length, both
/// polarizations pooled; reference in the denominator.
inline double relative_rms(const DualPolSignal& a, const DualPolSignal& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("relative_rms: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a.x[i] - b.x[i]) + std::norm(a.y[i] - b.y[i]);
    den += std::norm(b.x[i]) + std::norm(b.y[i]);
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : INFINITY;
  return std::sqrt(num / den);
}

/// FNV-1a over the raw sample bytes; used to log which stored field a sweep
/// cell evaluated.
inline std::uint64_t waveform_hash(const DualPolSignal& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  mix(s.x.data(), s.x.size() * sizeof(cplx));
  mix(s.y.data(), s.y.size() * sizeof(cplx));
  return h;
}

}  // namespace nlclab
