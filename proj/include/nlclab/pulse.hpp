#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "nlclab/fft.hpp"
#include "nlclab/types.hpp"

namespace nlclab {

/// Root-raised-cosine amplitude response, unity at f = 0.
inline double rrc_frequency_response(double f_hz, double symbol_rate_hz,
                                     double rho) {
  const double fa = std::fabs(f_hz);
  const double half = 0.5 * symbol_rate_hz;
  if (rho <= 0.0) return (fa <= half) ? 1.0 : 0.0;
  const double lo = (1.0 - rho) * half;
  const double hi = (1.0 + rho) * half;
  if (fa <= lo) return 1.0;
  if (fa >= hi) return 0.0;
  const double c =
      0.5 * (1.0 + std::cos(M_PI / (rho * symbol_rate_hz) * (fa - lo)));
  return std::sqrt(c);
}

/// Analytic RRC impulse response sampled at time t, normalized so the
/// frequency response is unity at DC (i.e. integral of h(t) dt = 1).
inline double rrc_impulse(double t, double symbol_rate_hz, double rho) {
  const double T = 1.0 / symbol_rate_hz;
  const double x = t / T;
  if (rho <= 0.0) {
    if (x == 0.0) return symbol_rate_hz;
    return symbol_rate_hz * std::sin(M_PI * x) / (M_PI * x);
  }
  if (std::fabs(x) < 1e-12)
    return symbol_rate_hz * (1.0 - rho + 4.0 * rho / M_PI);
  const double xr = std::fabs(x) - 1.0 / (4.0 * rho);
  if (std::fabs(xr) < 1e-9) {
    const double s = std::sin(M_PI / (4.0 * rho));
    const double c = std::cos(M_PI / (4.0 * rho));
    return symbol_rate_hz * rho / std::sqrt(2.0) *
           ((1.0 + 2.0 / M_PI) * s + (1.0 - 2.0 / M_PI) * c);
  }
  const double num = std::sin(M_PI * x * (1.0 - rho)) +
                     4.0 * rho * x * std::cos(M_PI * x * (1.0 + rho));
  const double den = M_PI * x * (1.0 - 16.0 * rho * rho * x * x);
  return symbol_rate_hz * num / den;
}

/// Truncated time-domain RRC taps spanning span_symbols symbol periods at sps
/// samples per symbol (odd length, centered). Scaled so that the tap sum
/// approximates unity DC gain. This is the reference used by the tests; the
/// shaping path below applies the exact response in the frequency domain.
inline std::vector<double> rrc_time_taps(double rho, int sps, int span_symbols,
                                         double symbol_rate_hz = 1.0) {
  const int n = span_symbols * sps + 1;
  std::vector<double> taps(n);
  const double dt = 1.0 / (symbol_rate_hz * sps);
  const int mid = n / 2;
  for (int i = 0; i < n; ++i)
    taps[i] = rrc_impulse((i - mid) * dt, symbol_rate_hz, rho) * dt;
  return taps;
}

/// Shapes a symbol sequence with the root-raised-cosine filter, producing sps
/// samples per symbol. Implemented as an exact frequency-domain filter over
/// the whole (circular) block; span_symbols is retained as the length of the
/// equivalent truncated time-domain filter and only validated here.
inline ComplexSequence rrc_shape(const std::vector<cplx>& symbols, double rho,
                                 int sps, int span_symbols,
                                 double symbol_rate_hz) {
  if (rho < 0.0 || rho > 1.0)
    throw std::invalid_argument("rrc_shape: roll-off must be within [0, 1]");
  if (sps < 2) throw std::invalid_argument("rrc_shape: sps must be >= 2");
  if (span_symbols < 8)
    throw std::invalid_argument("rrc_shape: span_symbols must be >= 8");
  ComplexSequence out;
  out.sample_rate_hz = symbol_rate_hz * sps;
  out.samples.assign(symbols.size() * static_cast<std::size_t>(sps),
                     cplx(0.0, 0.0));
  if (symbols.empty()) return out;
  for (std::size_t k = 0; k < symbols.size(); ++k)
    out.samples[k * sps] = symbols[k] * static_cast<double>(sps);
  fft_inplace(out.samples);
  const auto freqs = fft_frequencies(out.samples.size(), out.sample_rate_hz);
  for (std::size_t k = 0; k < out.samples.size(); ++k)
    out.samples[k] *= rrc_frequency_response(freqs[k], symbol_rate_hz, rho);
  ifft_inplace(out.samples);
  return out;
}

/// Applies the matched (receive) RRC filter in the frequency domain.
inline void rrc_matched_filter_inplace(std::vector<cplx>& samples,
                                       double sample_rate_hz,
                                       double symbol_rate_hz, double rho) {
  if (samples.empty()) return;
  fft_inplace(samples);
  const auto freqs = fft_frequencies(samples.size(), sample_rate_hz);
  for (std::size_t k = 0; k < samples.size(); ++k)
    samples[k] *= rrc_frequency_response(freqs[k], symbol_rate_hz, rho);
  ifft_inplace(samples);
}

}  // namespace nlclab
