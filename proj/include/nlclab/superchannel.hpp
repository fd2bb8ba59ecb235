#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "nlclab/fft.hpp"
#include "nlclab/modulation.hpp"
#include "nlclab/pulse.hpp"
#include "nlclab/types.hpp"

namespace nlclab {

/// Superchannel layout. delta is the subcarrier spacing divided by the symbol
/// rate; delta < 1 lets neighboring spectra overlap (super-Nyquist).
struct SuperchannelConfig {
  int subcarrier_count = 4;            // M
  double symbol_rate_hz = 14e9;        // R
  double delta = 1.0;                  // spacing factor
  double rho = 0.1;                    // RRC roll-off
  int sps_global = 16;                 // simulation samples/symbol, total field
  int sps_rx = 2;                      // receiver samples/symbol (ADC rate)
  int rrc_span_symbols = 64;

  double total_sample_rate_hz() const { return symbol_rate_hz * sps_global; }
  double rx_sample_rate_hz() const { return symbol_rate_hz * sps_rx; }

  void validate() const {
    if (subcarrier_count < 1)
      throw std::invalid_argument("superchannel: M must be >= 1");
    if (rho < 0.0 || rho > 1.0)
      throw std::invalid_argument("superchannel: rho must be within [0, 1]");
    if (!(delta > 0.0))
      throw std::invalid_argument("superchannel: delta must be > 0");
    if (!(symbol_rate_hz > 0.0))
      throw std::invalid_argument("superchannel: symbol rate must be > 0");
    if (sps_global < 2.0 * (subcarrier_count * delta + rho))
      throw std::invalid_argument(
          "superchannel: sps_global too small for the outermost subcarrier edge");
    if (sps_rx != 2)
      throw std::invalid_argument("superchannel: sps_rx is fixed at 2");
  }
};

/// Nominal offset of subcarrier m (1-based) from the superchannel center.
inline double subcarrier_offset_hz(const SuperchannelConfig& cfg, int m) {
  if (m < 1 || m > cfg.subcarrier_count)
    throw std::out_of_range("subcarrier index out of range");
  const double spacing = cfg.delta * cfg.symbol_rate_hz;
  return (m - 0.5 * (cfg.subcarrier_count + 1)) * spacing;
}

/// Offsets are snapped to the FFT bin grid of an n_symbols block so that all
/// carrier shifts are circularly consistent. The grid step is R / n_symbols
/// (a few hundred kHz), far below any physically meaningful detuning.
inline double quantized_offset_hz(const SuperchannelConfig& cfg, int m,
                                  std::size_t n_symbols) {
  const double bin = cfg.symbol_rate_hz / static_cast<double>(n_symbols);
  return std::round(subcarrier_offset_hz(cfg, m) / bin) * bin;
}

/// In-place carrier shift by offset_hz (positive moves the spectrum up).
inline void frequency_shift_inplace(DualPolSignal& s, double offset_hz) {
  if (offset_hz == 0.0) return;
  const double dphi = 2.0 * M_PI * offset_hz / s.sample_rate_hz;
  // Recurrence with periodic re-normalization keeps the rotator on the unit
  // circle over multi-million sample blocks.
  cplx rot(1.0, 0.0);
  const cplx step(std::cos(dphi), std::sin(dphi));
  for (std::size_t i = 0; i < s.size(); ++i) {
    s.x[i] *= rot;
    s.y[i] *= rot;
    rot *= step;
    if ((i & 0xfff) == 0xfff) rot /= std::abs(rot);
  }
}

/// Builds the total superchannel field by shifting each per-subcarrier signal
/// to its (bin-quantized) offset and summing. All inputs must share one
/// sample rate; with disjoint spectra the powers add.
inline DualPolSignal mux_subcarriers(const std::vector<DualPolSignal>& subs,
                                     const SuperchannelConfig& cfg) {
  if (static_cast<int>(subs.size()) != cfg.subcarrier_count)
    throw std::invalid_argument("mux_subcarriers: need exactly M signals");
  const double fs = subs.front().sample_rate_hz;
  const std::size_t n = subs.front().size();
  for (const auto& s : subs) {
    if (s.sample_rate_hz != fs)
      throw std::invalid_argument("mux_subcarriers: sample-rate mismatch");
    if (s.size() != n)
      throw std::invalid_argument("mux_subcarriers: length mismatch");
  }
  const std::size_t n_symbols = n / static_cast<std::size_t>(cfg.sps_global);
  DualPolSignal total = make_signal(n, fs, 0.0);
  for (int m = 1; m <= cfg.subcarrier_count; ++m) {
    DualPolSignal shifted = subs[m - 1];
    frequency_shift_inplace(shifted, quantized_offset_hz(cfg, m, n_symbols));
    for (std::size_t i = 0; i < n; ++i) {
      total.x[i] += shifted.x[i];
      total.y[i] += shifted.y[i];
    }
  }
  return total;
}

namespace detail {

/// Brickwall resampling via spectral truncation/zero-padding; data must be in
/// the frequency domain (FFT order). Amplitudes are preserved.
inline std::vector<cplx> resize_spectrum(const std::vector<cplx>& spec,
                                         std::size_t n_out) {
  const std::size_t n_in = spec.size();
  std::vector<cplx> out(n_out, cplx(0.0, 0.0));
  const std::size_t n_keep = std::min(n_in, n_out);
  const std::size_t half_lo = n_keep / 2;        // nonnegative bins kept
  const std::size_t half_hi = n_keep - half_lo;  // negative bins kept
  const double g = static_cast<double>(n_out) / static_cast<double>(n_in);
  for (std::size_t k = 0; k < half_lo; ++k) out[k] = spec[k] * g;
  for (std::size_t k = 0; k < half_hi; ++k)
    out[n_out - 1 - k] = spec[n_in - 1 - k] * g;
  return out;
}

}  // namespace detail

/// Extracts subcarrier m from the total field: shift to baseband, matched RRC
/// filter, resample to sps_rx samples per symbol. The returned signal keeps
/// the subcarrier offset in center_offset_hz so downstream compensation
/// filters can account for the walk-off the subcarrier accumulated.
inline DualPolSignal demux_subcarrier(const DualPolSignal& total, int m,
                                      const SuperchannelConfig& cfg) {
  if (m < 1 || m > cfg.subcarrier_count)
    throw std::out_of_range("demux_subcarrier: index out of range");
  const std::size_t n = total.size();
  const std::size_t n_symbols = n / static_cast<std::size_t>(cfg.sps_global);
  const std::size_t n_rx = n_symbols * static_cast<std::size_t>(cfg.sps_rx);
  const double offset = quantized_offset_hz(cfg, m, n_symbols);

  DualPolSignal base = total;
  frequency_shift_inplace(base, -offset);

  DualPolSignal out;
  out.sample_rate_hz = cfg.rx_sample_rate_hz();
  out.center_offset_hz = offset;
  for (auto* pol : {&base.x, &base.y}) {
    fft_inplace(*pol);
    const auto freqs = fft_frequencies(n, total.sample_rate_hz);
    for (std::size_t k = 0; k < n; ++k)
      (*pol)[k] *= rrc_frequency_response(freqs[k], cfg.symbol_rate_hz, cfg.rho);
    auto spec = detail::resize_spectrum(*pol, n_rx);
    ifft_inplace(spec);
    (pol == &base.x ? out.x : out.y) = std::move(spec);
  }
  return out;
}

/// Shapes one subcarrier's symbol streams at the global simulation rate and
/// normalizes the result to unit mean power (both polarizations pooled).
inline DualPolSignal build_subcarrier_signal(const std::vector<cplx>& sym_x,
                                             const std::vector<cplx>& sym_y,
                                             const SuperchannelConfig& cfg,
                                             int m) {
  if (sym_x.size() != sym_y.size())
    throw std::invalid_argument("build_subcarrier_signal: length mismatch");
  DualPolSignal s;
  s.sample_rate_hz = cfg.total_sample_rate_hz();
  s.center_offset_hz = quantized_offset_hz(cfg, m, sym_x.size());
  s.x = rrc_shape(sym_x, cfg.rho, cfg.sps_global, cfg.rrc_span_symbols,
                  cfg.symbol_rate_hz)
            .samples;
  s.y = rrc_shape(sym_y, cfg.rho, cfg.sps_global, cfg.rrc_span_symbols,
                  cfg.symbol_rate_hz)
            .samples;
  scale_to_power(s, 1.0);
  return s;
}

}  // namespace nlclab
