#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "nlclab/modulation.hpp"
#include "nlclab/types.hpp"

namespace nlclab {

/// Inverse complementary error function, accurate to ~1e-15 over (0, 2).
/// Bisection bracket plus Newton polish; independent of any series identity
/// used elsewhere.
inline double erfc_inv(double y) {
  if (!(y > 0.0) || !(y >= 0.0 && y < 2.0))
    throw std::domain_error("erfc_inv: argument must be in (0, 2)");
  if (y == 1.0) return 0.0;
  double lo = -6.0, hi = 6.0;  // erfc(-6) ~ 2, erfc(6) ~ 2e-17
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (std::erfc(mid) > y)
      lo = mid;
    else
      hi = mid;
  }
  double x = 0.5 * (lo + hi);
  for (int i = 0; i < 4; ++i) {
    const double f = std::erfc(x) - y;
    const double df = -2.0 / std::sqrt(M_PI) * std::exp(-x * x);
    const double step = f / df;
    if (!std::isfinite(step)) break;
    x -= step;
  }
  return x;
}

/// Q factor in dB from a bit-error rate, Q = 20 log10(sqrt(2) erfcinv(2 BER)).
inline double q_from_ber(double ber) {
  if (!(ber > 0.0 && ber < 0.5))
    throw std::domain_error("q_from_ber: BER must be in (0, 0.5)");
  return 20.0 * std::log10(M_SQRT2 * erfc_inv(2.0 * ber));
}

/// Inverse relation, BER = 0.5 erfc(q_lin / sqrt(2)).
inline double ber_from_q(double q_db) {
  const double q_lin = std::pow(10.0, q_db / 20.0);
  return 0.5 * std::erfc(q_lin / M_SQRT2);
}

struct BerReport {
  std::size_t bit_errors = 0;
  std::size_t bits_total = 0;
  double ber = 0.0;
  double q_db = 0.0;

  static BerReport from_counts(std::size_t errors, std::size_t total) {
    BerReport r;
    r.bit_errors = errors;
    r.bits_total = total;
    r.ber = total ? static_cast<double>(errors) / static_cast<double>(total) : 0.0;
    if (r.ber <= 0.0)
      r.q_db = std::numeric_limits<double>::infinity();
    else if (r.ber >= 0.5)
      r.q_db = -std::numeric_limits<double>::infinity();
    else
      r.q_db = q_from_ber(r.ber);
    return r;
  }
};

/// Hamming-distance BER after a symbol-granular alignment search. Lags of up
/// to +/-128 symbols are scanned with a +/-1 bit correlation; a best
/// correlation below 0.5 is treated as an alignment failure.
inline BerReport count_ber(const std::vector<std::uint8_t>& tx_bits,
                           const std::vector<std::uint8_t>& rx_bits,
                           int bits_per_symbol = 1) {
  if (tx_bits.empty() || rx_bits.empty())
    throw std::invalid_argument("count_ber: empty bit stream");
  const int max_lag_symbols = 128;
  int best_lag_bits = 0;
  double best_corr = -2.0;
  for (int lag_sym = -max_lag_symbols; lag_sym <= max_lag_symbols; ++lag_sym) {
    const long lag = static_cast<long>(lag_sym) * bits_per_symbol;
    long start_tx = std::max<long>(0, -lag);
    long start_rx = std::max<long>(0, lag);
    long n = std::min<long>(static_cast<long>(tx_bits.size()) - start_tx,
                            static_cast<long>(rx_bits.size()) - start_rx);
    if (n <= 0) continue;
    long agree = 0;
    for (long i = 0; i < n; ++i)
      agree += (tx_bits[start_tx + i] == rx_bits[start_rx + i]) ? 1 : -1;
    const double corr = static_cast<double>(agree) / static_cast<double>(n);
    if (corr > best_corr) {
      best_corr = corr;
      best_lag_bits = static_cast<int>(lag);
    }
  }
  if (best_corr < 0.5)
    throw std::runtime_error("count_ber: alignment failed (best correlation " +
                             std::to_string(best_corr) + ")");
  const long lag = best_lag_bits;
  long start_tx = std::max<long>(0, -lag);
  long start_rx = std::max<long>(0, lag);
  long n = std::min<long>(static_cast<long>(tx_bits.size()) - start_tx,
                          static_cast<long>(rx_bits.size()) - start_rx);
  std::size_t errors = 0;
  for (long i = 0; i < n; ++i)
    errors += (tx_bits[start_tx + i] != rx_bits[start_rx + i]) ? 1u : 0u;
  return BerReport::from_counts(errors, static_cast<std::size_t>(n));
}

/// Error-vector magnitude in dB after the optimal complex scalar alignment of
/// rx onto ref (data-aided metric, used by oracles and convergence checks).
inline double evm_db(const std::vector<cplx>& rx, const std::vector<cplx>& ref) {
  if (rx.size() != ref.size() || rx.empty())
    throw std::invalid_argument("evm_db: length mismatch");
  cplx num(0.0, 0.0);
  double den = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    num += std::conj(rx[i]) * ref[i];
    den += std::norm(rx[i]);
  }
  const cplx a = (den > 0.0) ? num / den : cplx(0.0, 0.0);
  double err = 0.0, pref = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    err += std::norm(a * rx[i] - ref[i]);
    pref += std::norm(ref[i]);
  }
  if (pref == 0.0) return err == 0.0 ? -std::numeric_limits<double>::infinity() : 0.0;
  if (err == 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(err / pref);
}

enum class AdaptiveMode { CMA, RDE };

/// 2x2 butterfly equalizer state, four T/2-spaced FIR tap vectors.
struct AdaptiveEqState {
  int n_taps = 13;
  double mu = 1e-3;
  AdaptiveMode mode = AdaptiveMode::CMA;
  std::vector<cplx> hxx, hxy, hyx, hyy;

  static AdaptiveEqState centered(int n_taps = 13, double mu = 1e-3) {
    if (n_taps % 2 == 0)
      throw std::invalid_argument("adaptive equalizer: n_taps must be odd");
    AdaptiveEqState s;
    s.n_taps = n_taps;
    s.mu = mu;
    s.hxx.assign(n_taps, cplx(0, 0));
    s.hxy.assign(n_taps, cplx(0, 0));
    s.hyx.assign(n_taps, cplx(0, 0));
    s.hyy.assign(n_taps, cplx(0, 0));
    s.hxx[n_taps / 2] = cplx(1, 0);
    s.hyy[n_taps / 2] = cplx(1, 0);
    return s;
  }

  double tap_norm() const {
    double acc = 0.0;
    for (const auto* h : {&hxx, &hxy, &hyx, &hyy})
      for (const auto& v : *h) acc += std::norm(v);
    return std::sqrt(acc);
  }
};

namespace detail {

inline double rde_target_radius2(double mag, ModKind kind) {
  if (kind == ModKind::QPSK) return 1.0;
  // Unit-energy 16QAM rings.
  static const double r2[3] = {0.2, 1.0, 1.8};
  static const double r[3] = {0.4472135954999579, 1.0, 1.3416407864998738};
  double best = r2[0];
  double dist = std::fabs(mag - r[0]);
  for (int i = 1; i < 3; ++i) {
    const double d = std::fabs(mag - r[i]);
    if (d < dist) {
      dist = d;
      best = r2[i];
    }
  }
  return best;
}

}  // namespace detail

/// Butterfly CMA/RDE equalizer over a circular 2-samples-per-symbol input.
/// Adapts with the constant-modulus error (radius 1) for the first
/// cma_train_symbols, then switches to radius-directed updates for 16QAM.
/// Returns one sample per symbol. Throws if the taps diverge.
inline DualPolSignal cma_rde_equalize(const DualPolSignal& rx,
                                      AdaptiveEqState& state,
                                      const ModulationFormat& fmt,
                                      std::size_t cma_train_symbols = 10000) {
  rx.validate();
  const std::size_t n_in = rx.size();
  const std::size_t n_sym = n_in / 2;
  const int t = state.n_taps;
  const int half = t / 2;

  DualPolSignal out;
  out.sample_rate_hz = rx.sample_rate_hz / 2.0;
  out.center_offset_hz = rx.center_offset_hz;
  out.x.resize(n_sym);
  out.y.resize(n_sym);

  auto wrap = [n_in](long i) -> std::size_t {
    long m = i % static_cast<long>(n_in);
    if (m < 0) m += static_cast<long>(n_in);
    return static_cast<std::size_t>(m);
  };

  bool singular_checked = false;
  for (std::size_t s = 0; s < n_sym; ++s) {
    const long center = static_cast<long>(2 * s);
    cplx yx(0, 0), yy(0, 0);
    for (int k = 0; k < t; ++k) {
      const cplx ux = rx.x[wrap(center + k - half)];
      const cplx uy = rx.y[wrap(center + k - half)];
      yx += state.hxx[k] * ux + state.hxy[k] * uy;
      yy += state.hyx[k] * ux + state.hyy[k] * uy;
    }
    out.x[s] = yx;
    out.y[s] = yy;

    const bool in_cma_phase = s < cma_train_symbols || fmt.kind == ModKind::QPSK;
    const double tx_r2 = in_cma_phase
                             ? 1.0
                             : detail::rde_target_radius2(std::abs(yx), fmt.kind);
    const double ty_r2 = in_cma_phase
                             ? 1.0
                             : detail::rde_target_radius2(std::abs(yy), fmt.kind);
    const double ex = tx_r2 - std::norm(yx);
    const double ey = ty_r2 - std::norm(yy);
    const cplx gx = state.mu * ex * yx;
    const cplx gy = state.mu * ey * yy;
    for (int k = 0; k < t; ++k) {
      const cplx ux = rx.x[wrap(center + k - half)];
      const cplx uy = rx.y[wrap(center + k - half)];
      state.hxx[k] += gx * std::conj(ux);
      state.hxy[k] += gx * std::conj(uy);
      state.hyx[k] += gy * std::conj(ux);
      state.hyy[k] += gy * std::conj(uy);
    }

    if ((s & 0x3ff) == 0x3ff && state.tap_norm() > 1e3)
      throw std::runtime_error(
          "cma_rde_equalize: tap divergence, norm " +
          std::to_string(state.tap_norm()) + " at symbol " + std::to_string(s));

    // Singularity guard: if both outputs latched onto the same polarization,
    // re-seed the y taps orthogonal to the x ones and keep adapting.
    if (!singular_checked && s == cma_train_symbols && s + 1 < n_sym) {
      singular_checked = true;
      double pxy = 0.0, px = 0.0, py = 0.0;
      cplx xcorr(0, 0);
      const std::size_t look = std::min<std::size_t>(s, 2048);
      for (std::size_t i = s - look; i < s; ++i) {
        xcorr += out.x[i] * std::conj(out.y[i]);
        px += std::norm(out.x[i]);
        py += std::norm(out.y[i]);
      }
      pxy = (px > 0 && py > 0) ? std::abs(xcorr) / std::sqrt(px * py) : 0.0;
      if (pxy > 0.9) {
        for (int k = 0; k < t; ++k) {
          state.hyx[k] = -std::conj(state.hxy[t - 1 - k]);
          state.hyy[k] = std::conj(state.hxx[t - 1 - k]);
        }
      }
    }
  }
  return out;
}

/// Feed-forward carrier-phase estimation. QPSK raises to the 4th power; for
/// 16QAM only the inner/outer-ring symbols (whose angles sit on the QPSK
/// grid) enter the block average. Block phases are unwrapped across blocks.
inline std::vector<cplx> viterbi_viterbi_cpe(const std::vector<cplx>& symbols,
                                             std::size_t block,
                                             const ModulationFormat& fmt,
                                             std::vector<double>* phases_out = nullptr) {
  if (block < 16) throw std::invalid_argument("viterbi_viterbi: block must be >= 16");
  std::vector<cplx> out(symbols.size());
  if (phases_out) phases_out->clear();
  double prev_phase = 0.0;
  bool have_prev = false;
  for (std::size_t b0 = 0; b0 < symbols.size(); b0 += block) {
    const std::size_t b1 = std::min(symbols.size(), b0 + block);
    cplx acc(0.0, 0.0);
    for (std::size_t i = b0; i < b1; ++i) {
      const cplx v = symbols[i];
      if (fmt.kind == ModKind::QAM16) {
        const double m = std::abs(v);
        // Ring-2 midpoints of the unit-energy 16QAM radii.
        if (m > 0.7236 && m < 1.1708) continue;
      }
      const cplx v2 = v * v;
      acc += v2 * v2;
    }
    double phase;
    if (std::abs(acc) > 0.0) {
      phase = 0.25 * (std::arg(acc) - M_PI);
      if (have_prev)
        phase += 0.5 * M_PI * std::round((prev_phase - phase) / (0.5 * M_PI));
    } else {
      phase = have_prev ? prev_phase : 0.0;
    }
    prev_phase = phase;
    have_prev = true;
    if (phases_out) phases_out->push_back(phase);
    const cplx rot(std::cos(phase), -std::sin(phase));
    for (std::size_t i = b0; i < b1; ++i) out[i] = symbols[i] * rot;
  }
  return out;
}

/// Resolves the residual pi/2 ambiguity (and a possible x/y output swap)
/// against a known pilot header; returns the corrected streams.
inline void resolve_ambiguity(DualPolSignal& symbols,
                              const std::vector<cplx>& pilot_x,
                              const std::vector<cplx>& pilot_y) {
  const std::size_t np = std::min({pilot_x.size(), pilot_y.size(), symbols.size()});
  if (np == 0) return;
  static const cplx rots[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};

  auto best_rotation = [&](const std::vector<cplx>& stream,
                           const std::vector<cplx>& ref, cplx* rot) {
    double best = -std::numeric_limits<double>::infinity();
    for (const cplx r : rots) {
      cplx c(0, 0);
      for (std::size_t i = 0; i < np; ++i) c += stream[i] * r * std::conj(ref[i]);
      if (c.real() > best) {
        best = c.real();
        *rot = r;
      }
    }
    return best;
  };

  cplx rxx, ryy, rxy, ryx;
  const double direct =
      best_rotation(symbols.x, pilot_x, &rxx) + best_rotation(symbols.y, pilot_y, &ryy);
  const double swapped =
      best_rotation(symbols.x, pilot_y, &rxy) + best_rotation(symbols.y, pilot_x, &ryx);
  if (swapped > direct) {
    std::swap(symbols.x, symbols.y);
    for (auto& v : symbols.x) v *= ryx;
    for (auto& v : symbols.y) v *= rxy;
  } else {
    for (auto& v : symbols.x) v *= rxx;
    for (auto& v : symbols.y) v *= ryy;
  }
}

}  // namespace nlclab
