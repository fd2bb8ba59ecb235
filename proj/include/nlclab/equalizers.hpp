#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlclab/fft.hpp"
#include "nlclab/fiber.hpp"
#include "nlclab/types.hpp"

namespace nlclab {

enum class EqKind { EDC, DBP, TF_DBP, VNLE, PCTW, PERTURBATION };

inline std::string to_string(EqKind k) {
  switch (k) {
    case EqKind::EDC: return "EDC";
    case EqKind::DBP: return "DBP";
    case EqKind::TF_DBP: return "TF_DBP";
    case EqKind::VNLE: return "VNLE";
    case EqKind::PCTW: return "PCTW";
    case EqKind::PERTURBATION: return "PERTURBATION";
  }
  return "?";
}

/// One nonlinearity-compensation block plus its inverse-model parameters.
/// phi is the nonlinear-phase optimization scalar; when unset, single-step
/// back-propagation grid-searches it and multi-step uses 1.0.
struct EqualizerSpec {
  EqKind kind = EqKind::EDC;
  int steps_per_span = 1;
  std::optional<double> phi;
  LinkConfig link;

  void validate() const {
    if (steps_per_span < 1)
      throw std::invalid_argument("equalizer: steps_per_span must be >= 1");
    if (phi && (*phi <= 0.0 || *phi > 1.0))
      throw std::invalid_argument("equalizer: phi must be in (0, 1]");
    link.validate();
  }
  double phi_value() const { return phi.value_or(1.0); }
};

namespace detail {

/// Dispersion phase per meter at the signal's absolute frequencies; positive
/// distances propagate forward, negative distances compensate.
inline std::vector<double> cd_phase_per_meter(std::size_t n,
                                              double sample_rate_hz,
                                              double center_offset_hz,
                                              double beta2_si) {
  const auto w = fft_angular_frequencies(n, sample_rate_hz);
  const double w0 = 2.0 * M_PI * center_offset_hz;
  std::vector<double> coeff(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double wa = w[k] + w0;
    coeff[k] = 0.5 * beta2_si * wa * wa;
  }
  return coeff;
}

inline void apply_phase(std::vector<cplx>& spec, const std::vector<double>& coeff,
                        double factor, double gain = 1.0) {
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double ph = coeff[k] * factor;
    spec[k] *= gain * cplx(std::cos(ph), std::sin(ph));
  }
}

}  // namespace detail

/// Applies the accumulated chromatic-dispersion transfer of dist_km of fiber
/// (dist_km < 0 compensates). Pure phase.
inline DualPolSignal apply_cd(const DualPolSignal& signal,
                              const FiberParams& fiber, double dist_km) {
  DualPolSignal out = signal;
  fft_inplace(out.x);
  fft_inplace(out.y);
  const auto coeff = detail::cd_phase_per_meter(
      out.size(), out.sample_rate_hz, out.center_offset_hz, fiber.beta2_si());
  detail::apply_phase(out.x, coeff, dist_km * 1e3);
  detail::apply_phase(out.y, coeff, dist_km * 1e3);
  ifft_inplace(out.x);
  ifft_inplace(out.y);
  return out;
}

/// Electronic dispersion compensation: one all-pass frequency-domain filter
/// inverting the whole link's accumulated dispersion.
inline DualPolSignal edc(const DualPolSignal& signal, const LinkConfig& link) {
  return apply_cd(signal, link.fiber, -link.total_length_km());
}

namespace detail {

/// Shared DBP / TF-DBP recursion: spans in reverse order, each span as
/// steps_per_span asymmetric steps with the linear section first (CD
/// conjugate plus loss inversion), then the nonlinear phase rotation with
/// effective-length weighting. The EDFA gain is inverted at each span
/// boundary so the nonlinear steps see the true local power profile.
inline DualPolSignal back_propagate(const DualPolSignal& signal,
                                    const EqualizerSpec& spec) {
  const LinkConfig& link = spec.link;
  const FiberParams& fiber = link.fiber;
  const std::size_t n = signal.size();

  DualPolSignal state = signal;
  fft_inplace(state.x);
  fft_inplace(state.y);

  const auto coeff = cd_phase_per_meter(n, state.sample_rate_hz,
                                        state.center_offset_hz, fiber.beta2_si());
  const double h_km = fiber.span_length_km / spec.steps_per_span;
  const double alpha = fiber.alpha_lin_per_km();
  const double h_eff =
      (alpha == 0.0) ? h_km : (1.0 - std::exp(-alpha * h_km)) / alpha;
  const double step_gain = std::exp(0.5 * alpha * h_km);  // loss inversion
  const double inv_amp_gain = 1.0 / std::sqrt(db_to_linear(link.amp.gain_db));
  const double nl_coeff =
      -spec.phi_value() * fiber.gamma_manakov_per_w_km() * h_eff;

  for (int span = 0; span < link.n_spans; ++span) {
    for (auto& v : state.x) v *= inv_amp_gain;
    for (auto& v : state.y) v *= inv_amp_gain;
    for (int step = 0; step < spec.steps_per_span; ++step) {
      apply_phase(state.x, coeff, -h_km * 1e3, step_gain);
      apply_phase(state.y, coeff, -h_km * 1e3, step_gain);
      ifft_inplace(state.x);
      ifft_inplace(state.y);
      for (std::size_t i = 0; i < n; ++i) {
        const double power = std::norm(state.x[i]) + std::norm(state.y[i]);
        const double ph = nl_coeff * power;
        const cplx rot(std::cos(ph), std::sin(ph));
        state.x[i] *= rot;
        state.y[i] *= rot;
      }
      const bool last = (span == link.n_spans - 1) &&
                        (step == spec.steps_per_span - 1);
      if (!last) {
        fft_inplace(state.x);
        fft_inplace(state.y);
      }
    }
  }
  return state;
}

}  // namespace detail

/// Per-subcarrier digital back-propagation.
inline DualPolSignal dbp(const DualPolSignal& signal, const EqualizerSpec& spec) {
  spec.validate();
  return detail::back_propagate(signal, spec);
}

/// Total-field DBP: the same recursion applied to the undivided superchannel
/// field, capturing inter-subcarrier nonlinear mixing. Subject to the same
/// aliasing guard as the forward integrator.
inline DualPolSignal tf_dbp(const DualPolSignal& total, const EqualizerSpec& spec) {
  spec.validate();
  {
    std::vector<cplx> sx = total.x, sy = total.y;
    fft_inplace(sx);
    fft_inplace(sy);
    const double half_bw =
        detail::occupied_half_bandwidth(sx, sy, total.sample_rate_hz);
    if (half_bw > 0.45 * total.sample_rate_hz)
      throw std::runtime_error(
          "tf_dbp: occupied bandwidth exceeds 90% of Nyquist");
  }
  return detail::back_propagate(total, spec);
}

/// Third-order inverse-Volterra (IVSTF) equalizer evaluated spanwise: one
/// all-pass linear branch plus, per span k, a branch that partially
/// CD-compensates to span k, forms the time-domain triple product
/// V (|Vx|^2 + |Vy|^2) scaled by c = gamma' L_eff, and finishes the CD
/// compensation. Branches are accumulated in fixed span order.
inline DualPolSignal vnle(const DualPolSignal& signal, const LinkConfig& link) {
  link.validate();
  const FiberParams& fiber = link.fiber;
  const std::size_t n = signal.size();
  const int n_spans = link.n_spans;
  const double span_m = fiber.span_length_km * 1e3;
  const double c = fiber.gamma_manakov_per_w_km() *
                   effective_length(fiber.alpha_db_per_km, fiber.span_length_km);
  const cplx branch_gain(0.0, -c);  // -j c in this FFT sign convention

  DualPolSignal spec = signal;
  fft_inplace(spec.x);
  fft_inplace(spec.y);
  const auto coeff = detail::cd_phase_per_meter(
      n, signal.sample_rate_hz, signal.center_offset_hz, fiber.beta2_si());

  std::vector<cplx> acc_x = spec.x;
  std::vector<cplx> acc_y = spec.y;
  std::vector<cplx> bx(n), by(n), mx(n), my(n);
  for (int k = 1; k <= n_spans; ++k) {
    bx = spec.x;
    by = spec.y;
    detail::apply_phase(bx, coeff, -k * span_m);
    detail::apply_phase(by, coeff, -k * span_m);
    ifft_inplace(bx);
    ifft_inplace(by);
    for (std::size_t i = 0; i < n; ++i) {
      const double power = std::norm(bx[i]) + std::norm(by[i]);
      mx[i] = bx[i] * power;
      my[i] = by[i] * power;
    }
    fft_inplace(mx);
    fft_inplace(my);
    detail::apply_phase(mx, coeff, k * span_m);
    detail::apply_phase(my, coeff, k * span_m);
    for (std::size_t i = 0; i < n; ++i) {
      acc_x[i] += branch_gain * mx[i];
      acc_y[i] += branch_gain * my[i];
    }
  }

  // Full-link linear compensation k1 applied to the combined output.
  detail::apply_phase(acc_x, coeff, -n_spans * span_m);
  detail::apply_phase(acc_y, coeff, -n_spans * span_m);
  ifft_inplace(acc_x);
  ifft_inplace(acc_y);

  DualPolSignal out = signal;
  out.x = std::move(acc_x);
  out.y = std::move(acc_y);
  return out;
}

/// First-order perturbation receiver: takes the linearly compensated field as
/// the unperturbed solution, re-propagates it to each span input (one
/// quadrature node per span with L_eff weighting), accumulates the nonlinear
/// mixing referenced back to the transmitter, and removes it.
inline DualPolSignal perturbation_rx(const DualPolSignal& signal,
                                     const LinkConfig& link) {
  link.validate();
  const FiberParams& fiber = link.fiber;
  const std::size_t n = signal.size();
  const double span_m = fiber.span_length_km * 1e3;
  const double c = fiber.gamma_manakov_per_w_km() *
                   effective_length(fiber.alpha_db_per_km, fiber.span_length_km);

  DualPolSignal v0 = edc(signal, link);
  std::vector<cplx> v0_spec_x = v0.x, v0_spec_y = v0.y;
  fft_inplace(v0_spec_x);
  fft_inplace(v0_spec_y);
  const auto coeff = detail::cd_phase_per_meter(
      n, signal.sample_rate_hz, signal.center_offset_hz, fiber.beta2_si());

  std::vector<cplx> acc_x(n, cplx(0, 0)), acc_y(n, cplx(0, 0));
  std::vector<cplx> vx(n), vy(n);
  for (int k = 1; k <= link.n_spans; ++k) {
    const double to_node_m = (k - 1) * span_m;
    vx = v0_spec_x;
    vy = v0_spec_y;
    detail::apply_phase(vx, coeff, to_node_m);
    detail::apply_phase(vy, coeff, to_node_m);
    ifft_inplace(vx);
    ifft_inplace(vy);
    for (std::size_t i = 0; i < n; ++i) {
      const double power = std::norm(vx[i]) + std::norm(vy[i]);
      vx[i] *= power;
      vy[i] *= power;
    }
    fft_inplace(vx);
    fft_inplace(vy);
    detail::apply_phase(vx, coeff, -to_node_m);
    detail::apply_phase(vy, coeff, -to_node_m);
    for (std::size_t i = 0; i < n; ++i) {
      acc_x[i] += vx[i];
      acc_y[i] += vy[i];
    }
  }
  ifft_inplace(acc_x);
  ifft_inplace(acc_y);

  const cplx gain(0.0, -c);
  DualPolSignal out = v0;
  for (std::size_t i = 0; i < n; ++i) {
    out.x[i] += gain * acc_x[i];
    out.y[i] += gain * acc_y[i];
  }
  return out;
}

/// Phase-conjugated twin waves: the y polarization carries the conjugate of
/// the x-polarization symbol stream.
inline std::pair<std::vector<cplx>, std::vector<cplx>> pctw_encode(
    const std::vector<cplx>& sym_x) {
  std::vector<cplx> sym_y(sym_x.size());
  for (std::size_t i = 0; i < sym_x.size(); ++i) sym_y[i] = std::conj(sym_x[i]);
  return {sym_x, std::move(sym_y)};
}

/// Coherent superposition (Vx + conj(Vy)) / 2 of CD-compensated,
/// phase-aligned symbol streams; anti-correlated first-order nonlinear
/// distortion cancels.
inline std::vector<cplx> pctw_combine(const std::vector<cplx>& vx,
                                      const std::vector<cplx>& vy) {
  if (vx.size() != vy.size())
    throw std::invalid_argument("pctw_combine: length mismatch");
  std::vector<cplx> out(vx.size());
  for (std::size_t i = 0; i < vx.size(); ++i)
    out[i] = 0.5 * (vx[i] + std::conj(vy[i]));
  return out;
}

inline std::vector<cplx> pctw_combine(const DualPolSignal& rx_symbols) {
  return pctw_combine(rx_symbols.x, rx_symbols.y);
}

}  // namespace nlclab
