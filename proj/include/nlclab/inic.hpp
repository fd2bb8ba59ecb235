#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "nlclab/evaluate.hpp"

namespace nlclab {

enum class RegenModel { NonlinearForward, LinearForward };

/// Three-step decision-feedback inter-subcarrier interference canceler.
/// The inner equalizer kind selects the variant: DBP -> INIC-DBP,
/// VNLE -> INIC-VS, EDC -> ILIC (which must pair with the linear
/// regeneration model; the nonlinear inner equalizers pair with the
/// nonlinear forward model).
struct InicSpec {
  EqualizerSpec inner;
  RegenModel regen = RegenModel::NonlinearForward;
  int target = 2;  // m0
  int regen_steps_per_span = 32;
  int regen_sps = 4;

  void validate() const {
    inner.validate();
    const bool linear_inner = inner.kind == EqKind::EDC;
    if (linear_inner && regen != RegenModel::LinearForward)
      throw std::invalid_argument("inic: ILIC pairs EDC with linear regeneration");
    if (!linear_inner && regen != RegenModel::NonlinearForward)
      throw std::invalid_argument(
          "inic: nonlinear inner equalizers pair with nonlinear regeneration");
    if (inner.kind != EqKind::EDC && inner.kind != EqKind::DBP &&
        inner.kind != EqKind::VNLE)
      throw std::invalid_argument("inic: inner equalizer must be EDC, DBP or VNLE");
    if (regen_steps_per_span < 1 || regen_sps < 2)
      throw std::invalid_argument("inic: bad regeneration parameters");
  }
};

/// Re-propagated waveform of one detected subcarrier at the total-field grid.
struct RegeneratedContribution {
  DualPolSignal waveform;
  int subcarrier = 0;
};

struct InicResult {
  ChainResult step3;
  ChainResult step1_target;   // inner equalizer alone on m0 (warm-start source)
  double phi_used = 1.0;
  double worst_neighbor_step1_ber = 0.0;
  bool error_propagation_flag = false;  // a step-1 BER exceeded 0.2
};

/// Step 1: detect subcarrier m from the stored received field with the inner
/// equalizer plus the adaptive chain; returns hard symbol decisions (known
/// training-prefix symbols substituted) alongside the chain diagnostics.
struct Step1Detection {
  ChainResult chain;
  std::vector<cplx> detected_x;
  std::vector<cplx> detected_y;
  double phi_used = 1.0;
};

inline Step1Detection inic_step1_detect(const DualPolSignal& total_rx, int m,
                                        const EqualizerSpec& inner,
                                        const SuperchannelConfig& cfg,
                                        const SymbolGrid& grid,
                                        const RxChainOptions& opts) {
  SubcarrierEvaluation eval =
      equalize_and_detect(total_rx, m, inner, cfg, grid, opts);
  const ModulationFormat& fmt = ModulationFormat::get(grid.format);
  Step1Detection det;
  det.detected_x = decide_symbols(eval.chain.symbols_x, fmt);
  det.detected_y = decide_symbols(eval.chain.symbols_y, fmt);
  const auto& truth = grid.subcarriers.at(m - 1);
  const std::size_t prefix = std::min(opts.prefix_symbols, det.detected_x.size());
  for (std::size_t i = 0; i < prefix; ++i) {
    det.detected_x[i] = truth.x[i];
    det.detected_y[i] = truth.y[i];
  }
  det.phi_used = eval.phi_used;
  det.chain = std::move(eval.chain);
  return det;
}

/// Step 2: re-modulate the detected symbols and propagate them through the
/// receiver's deterministic fiber model (noiseless, PMD-free) at the
/// subcarrier's spectral offset. The result lives on the total-field grid,
/// ready for subtraction.
inline RegeneratedContribution inic_step2_regenerate(
    const std::vector<cplx>& detected_x, const std::vector<cplx>& detected_y,
    int m, const LinkConfig& link, const SuperchannelConfig& cfg,
    RegenModel model, double launch_power_dbm, int regen_steps_per_span = 32,
    int regen_sps = 4) {
  const std::size_t n_symbols = detected_x.size();
  if (detected_y.size() != n_symbols)
    throw std::invalid_argument("inic_step2: polarization length mismatch");

  DualPolSignal w;
  w.sample_rate_hz = cfg.symbol_rate_hz * regen_sps;
  w.center_offset_hz = quantized_offset_hz(cfg, m, n_symbols);
  w.x = rrc_shape(detected_x, cfg.rho, regen_sps, cfg.rrc_span_symbols,
                  cfg.symbol_rate_hz)
            .samples;
  w.y = rrc_shape(detected_y, cfg.rho, regen_sps, cfg.rrc_span_symbols,
                  cfg.symbol_rate_hz)
            .samples;
  if (mean_power(w) > 0.0)
    scale_to_power(w, dbm_to_watt(launch_power_dbm));

  const double span_amp_gain =
      std::sqrt(db_to_linear(link.amp.gain_db)) *
      std::exp(-0.5 * link.fiber.alpha_lin_per_km() * link.fiber.span_length_km);
  if (model == RegenModel::NonlinearForward) {
    const double step_km =
        link.fiber.span_length_km / static_cast<double>(regen_steps_per_span);
    for (int span = 0; span < link.n_spans; ++span) {
      w = ssfm_propagate_span(w, link.fiber, step_km, nullptr);
      const double g = std::sqrt(db_to_linear(link.amp.gain_db));
      for (auto& v : w.x) v *= g;
      for (auto& v : w.y) v *= g;
    }
  } else {
    w = apply_cd(w, link.fiber, link.total_length_km());
    const double g = std::pow(span_amp_gain, link.n_spans);
    for (auto& v : w.x) v *= g;
    for (auto& v : w.y) v *= g;
  }

  // Upsample to the total-field grid and move to the subcarrier offset.
  const std::size_t n_total = n_symbols * static_cast<std::size_t>(cfg.sps_global);
  RegeneratedContribution contrib;
  contrib.subcarrier = m;
  contrib.waveform.sample_rate_hz = cfg.total_sample_rate_hz();
  contrib.waveform.center_offset_hz = 0.0;
  for (auto* pol : {&w.x, &w.y}) {
    fft_inplace(*pol);
    auto spec = detail::resize_spectrum(*pol, n_total);
    ifft_inplace(spec);
    (pol == &w.x ? contrib.waveform.x : contrib.waveform.y) = std::move(spec);
  }
  frequency_shift_inplace(contrib.waveform, w.center_offset_hz);
  contrib.waveform.center_offset_hz = 0.0;
  return contrib;
}

namespace detail {

struct Calibration {
  long lag_rx_samples = 0;  // at sps_rx
  std::array<cplx, 4> a{cplx(1, 0), cplx(0, 0), cplx(0, 0), cplx(1, 0)};
};

/// One-time calibration of a regenerated contribution against the stored
/// field: integer-lag search plus a least-squares 2x2 complex fit on the
/// training prefix. The matrix absorbs the net polarization rotation the
/// (PMD-free) regeneration model cannot know.
inline Calibration calibrate_contribution(const DualPolSignal& total_rx,
                                          const DualPolSignal& w, int m,
                                          const SuperchannelConfig& cfg,
                                          std::size_t prefix_symbols) {
  Calibration cal;
  const DualPolSignal dv = demux_subcarrier(total_rx, m, cfg);
  const DualPolSignal dw = demux_subcarrier(w, m, cfg);
  const std::size_t n = std::min<std::size_t>(
      prefix_symbols * static_cast<std::size_t>(cfg.sps_rx), dw.size());
  if (n == 0) return cal;

  double wpow = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    wpow += std::norm(dw.x[i]) + std::norm(dw.y[i]);
  if (wpow <= 0.0) return cal;  // zero contribution stays zero

  auto wrap = [&dw](long i) {
    long m2 = i % static_cast<long>(dw.size());
    if (m2 < 0) m2 += static_cast<long>(dw.size());
    return static_cast<std::size_t>(m2);
  };

  long best_lag = 0;
  double best = -1.0;
  for (long lag = -8; lag <= 8; ++lag) {
    cplx cxx(0, 0), cyy(0, 0);
    for (std::size_t i = 0; i < n; ++i) {
      cxx += dv.x[i] * std::conj(dw.x[wrap(static_cast<long>(i) - lag)]);
      cyy += dv.y[i] * std::conj(dw.y[wrap(static_cast<long>(i) - lag)]);
    }
    const double score = std::abs(cxx) + std::abs(cyy);
    if (score > best) {
      best = score;
      best_lag = lag;
    }
  }
  cal.lag_rx_samples = best_lag;

  // Normal equations for V ~ A W on the prefix.
  cplx rvw[2][2] = {{{0, 0}, {0, 0}}, {{0, 0}, {0, 0}}};
  cplx rww[2][2] = {{{0, 0}, {0, 0}}, {{0, 0}, {0, 0}}};
  for (std::size_t i = 0; i < n; ++i) {
    const cplx wx = dw.x[wrap(static_cast<long>(i) - best_lag)];
    const cplx wy = dw.y[wrap(static_cast<long>(i) - best_lag)];
    const cplx vx = dv.x[i];
    const cplx vy = dv.y[i];
    rvw[0][0] += vx * std::conj(wx);
    rvw[0][1] += vx * std::conj(wy);
    rvw[1][0] += vy * std::conj(wx);
    rvw[1][1] += vy * std::conj(wy);
    rww[0][0] += wx * std::conj(wx);
    rww[0][1] += wx * std::conj(wy);
    rww[1][0] += wy * std::conj(wx);
    rww[1][1] += wy * std::conj(wy);
  }
  const cplx det = rww[0][0] * rww[1][1] - rww[0][1] * rww[1][0];
  const double scale = std::abs(rww[0][0]) + std::abs(rww[1][1]);
  if (std::abs(det) < 1e-12 * scale * scale) return cal;  // keep identity
  const cplx inv[2][2] = {{rww[1][1] / det, -rww[0][1] / det},
                          {-rww[1][0] / det, rww[0][0] / det}};
  cal.a[0] = rvw[0][0] * inv[0][0] + rvw[0][1] * inv[1][0];
  cal.a[1] = rvw[0][0] * inv[0][1] + rvw[0][1] * inv[1][1];
  cal.a[2] = rvw[1][0] * inv[0][0] + rvw[1][1] * inv[1][0];
  cal.a[3] = rvw[1][0] * inv[0][1] + rvw[1][1] * inv[1][1];
  return cal;
}

inline void subtract_calibrated(DualPolSignal& v, const DualPolSignal& w,
                                const Calibration& cal, int sps_global,
                                int sps_rx) {
  const long shift = cal.lag_rx_samples * (sps_global / sps_rx);
  const long nn = static_cast<long>(w.size());
  for (long i = 0; i < nn; ++i) {
    long j = (i - shift) % nn;
    if (j < 0) j += nn;
    const cplx wx = w.x[j];
    const cplx wy = w.y[j];
    v.x[i] -= cal.a[0] * wx + cal.a[1] * wy;
    v.y[i] -= cal.a[2] * wx + cal.a[3] * wy;
  }
}

}  // namespace detail

/// Step 3: subtract the calibrated neighbor contributions from the stored
/// field and re-run the inner equalizer plus chain on the target subcarrier,
/// warm-starting the adaptive equalizer from the step-1 state.
inline ChainResult inic_step3_cancel(
    const DualPolSignal& total_rx, const RegeneratedContribution* w_prev,
    const RegeneratedContribution* w_next, int m0, const EqualizerSpec& inner,
    const SuperchannelConfig& cfg, const SymbolGrid& grid,
    const RxChainOptions& opts, const AdaptiveEqState* warm_start) {
  DualPolSignal canceled = total_rx;
  for (const RegeneratedContribution* w : {w_prev, w_next}) {
    if (!w) continue;
    const auto cal = detail::calibrate_contribution(
        total_rx, w->waveform, w->subcarrier, cfg, opts.prefix_symbols);
    detail::subtract_calibrated(canceled, w->waveform, cal, cfg.sps_global,
                                cfg.sps_rx);
  }
  return equalize_and_detect(canceled, m0, inner, cfg, grid, opts, warm_start)
      .chain;
}

/// Full three-step INIC pass for one target subcarrier. Only the nearest
/// neighbors are regenerated and subtracted; edge subcarriers cancel their
/// single existing neighbor. genie_neighbors substitutes the true transmitted
/// symbols in step 2 (upper-bound diagnostics).
inline InicResult inic_run(const DualPolSignal& total_rx, const InicSpec& spec,
                           const SuperchannelConfig& cfg, const SymbolGrid& grid,
                           double launch_power_dbm, const RxChainOptions& opts,
                           bool genie_neighbors = false) {
  spec.validate();
  const int m0 = spec.target;
  if (m0 < 1 || m0 > cfg.subcarrier_count)
    throw std::out_of_range("inic_run: target subcarrier out of range");

  InicResult result;

  // Step 1 on the target fixes phi and provides the warm-start state.
  Step1Detection target_det =
      inic_step1_detect(total_rx, m0, spec.inner, cfg, grid, opts);
  EqualizerSpec inner_resolved = spec.inner;
  if (spec.inner.kind == EqKind::DBP && !spec.inner.phi.has_value())
    inner_resolved.phi = target_det.phi_used;
  result.phi_used = target_det.phi_used;

  std::vector<RegeneratedContribution> contribs;
  for (int m : {m0 - 1, m0 + 1}) {
    if (m < 1 || m > cfg.subcarrier_count) continue;
    std::vector<cplx> det_x, det_y;
    if (genie_neighbors) {
      det_x = grid.subcarriers.at(m - 1).x;
      det_y = grid.subcarriers.at(m - 1).y;
    } else {
      Step1Detection det =
          inic_step1_detect(total_rx, m, inner_resolved, cfg, grid, opts);
      result.worst_neighbor_step1_ber =
          std::max(result.worst_neighbor_step1_ber, det.chain.ber.ber);
      det_x = std::move(det.detected_x);
      det_y = std::move(det.detected_y);
    }
    contribs.push_back(inic_step2_regenerate(
        det_x, det_y, m, spec.inner.link, cfg, spec.regen, launch_power_dbm,
        spec.regen_steps_per_span, spec.regen_sps));
  }
  result.error_propagation_flag = result.worst_neighbor_step1_ber > 0.2;

  const RegeneratedContribution* prev = nullptr;
  const RegeneratedContribution* next = nullptr;
  for (const auto& c : contribs) {
    if (c.subcarrier == m0 - 1) prev = &c;
    if (c.subcarrier == m0 + 1) next = &c;
  }
  result.step3 =
      inic_step3_cancel(total_rx, prev, next, m0, inner_resolved, cfg, grid,
                        opts, &target_det.chain.eq_state);
  result.step1_target = std::move(target_det.chain);
  return result;
}

}  // namespace nlclab
