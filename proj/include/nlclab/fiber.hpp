#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlclab/fft.hpp"
#include "nlclab/rng.hpp"
#include "nlclab/types.hpp"

namespace nlclab {

constexpr double kSpeedOfLight = 2.99792458e8;   // m/s
constexpr double kPlanck = 6.62607015e-34;       // J s

/// beta2 in ps^2/km from the dispersion parameter D in ps/(nm km).
/// D > 0 (anomalous regime) gives beta2 < 0.
inline double beta2_from_D(double d_ps_nm_km, double wavelength_nm) {
  if (!(wavelength_nm > 0.0))
    throw std::invalid_argument("beta2_from_D: wavelength must be > 0");
  const double lambda_m = wavelength_nm * 1e-9;
  const double d_si = d_ps_nm_km * 1e-6;  // s/m^2
  const double beta2_si = -d_si * lambda_m * lambda_m / (2.0 * M_PI * kSpeedOfLight);
  return beta2_si * 1e27;  // s^2/m -> ps^2/km
}

/// Effective length (1 - exp(-alpha L)) / alpha in km.
inline double effective_length(double alpha_db_per_km, double length_km) {
  if (length_km <= 0.0) return 0.0;
  const double alpha_lin = alpha_db_per_km * std::log(10.0) / 10.0;  // 1/km
  if (alpha_lin == 0.0) return length_km;
  return (1.0 - std::exp(-alpha_lin * length_km)) / alpha_lin;
}

struct FiberParams {
  double alpha_db_per_km = 0.2;
  double dispersion_ps_nm_km = 17.0;   // D
  double gamma_per_w_km = 1.4;
  double pmd_coeff_ps_sqrt_km = 0.1;
  double span_length_km = 100.0;
  double wavelength_nm = 1550.0;

  double alpha_lin_per_km() const {
    return alpha_db_per_km * std::log(10.0) / 10.0;
  }
  double beta2_ps2_km() const {
    return beta2_from_D(dispersion_ps_nm_km, wavelength_nm);
  }
  double beta2_si() const { return beta2_ps2_km() * 1e-27; }  // s^2/m
  /// Manakov-averaged nonlinear coefficient, 8/9 of the scalar gamma.
  double gamma_manakov_per_w_km() const { return (8.0 / 9.0) * gamma_per_w_km; }

  void validate() const {
    if (alpha_db_per_km < 0.0)
      throw std::invalid_argument("fiber: attenuation must be >= 0");
    if (!(span_length_km > 0.0))
      throw std::invalid_argument("fiber: span length must be > 0");
    if (!(wavelength_nm > 0.0))
      throw std::invalid_argument("fiber: wavelength must be > 0");
    if (pmd_coeff_ps_sqrt_km < 0.0)
      throw std::invalid_argument("fiber: PMD coefficient must be >= 0");
  }
};

struct AmplifierParams {
  double gain_db = 20.0;
  double noise_figure_db = 5.5;

  void validate() const {
    if (gain_db < 0.0) throw std::invalid_argument("amplifier: gain must be >= 0");
    if (noise_figure_db < 0.0)
      throw std::invalid_argument("amplifier: noise figure must be >= 0");
  }
  bool below_physical_nf_floor() const { return noise_figure_db < 3.0; }
};

struct LinkConfig {
  int n_spans = 10;
  FiberParams fiber;
  AmplifierParams amp;
  double forward_step_km = 0.1;
  bool ase_enabled = true;
  bool pmd_enabled = true;
  std::uint64_t rng_seed = 1;

  double total_length_km() const { return n_spans * fiber.span_length_km; }

  void validate() const {
    if (n_spans < 1) throw std::invalid_argument("link: n_spans must be >= 1");
    if (!(forward_step_km > 0.0))
      throw std::invalid_argument("link: forward step must be > 0");
    fiber.validate();
    amp.validate();
  }
};

namespace detail {

/// Occupied half-bandwidth of the deterministic signal content: the smallest
/// symmetric band holding 99.99% of the spectral energy in excess of the
/// noise floor. The folded PSD is coarse-grained into sub-bands and the
/// median sub-band level is taken as the floor, so a full-grid ASE floor does
/// not register as occupancy while genuine spectral broadening (or a
/// grid-filling signal) does.
inline double occupied_half_bandwidth(const std::vector<cplx>& spec_x,
                                      const std::vector<cplx>& spec_y,
                                      double sample_rate_hz) {
  const std::size_t n = spec_x.size();
  const std::size_t n_fold = n / 2 + 1;
  std::vector<double> folded(n_fold, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t bin = (k <= n / 2) ? k : n - k;
    folded[bin] += std::norm(spec_x[k]) + std::norm(spec_y[k]);
  }
  const std::size_t n_groups =
      std::min<std::size_t>(256, std::max<std::size_t>(8, n_fold / 16));
  const std::size_t group_len = (n_fold + n_groups - 1) / n_groups;
  std::vector<double> density(n_groups, 0.0);
  std::vector<std::size_t> count(n_groups, 0);
  for (std::size_t bin = 0; bin < n_fold; ++bin) {
    const std::size_t g = bin / group_len;
    density[g] += folded[bin];
    ++count[g];
  }
  for (std::size_t g = 0; g < n_groups; ++g)
    if (count[g] > 0) density[g] /= static_cast<double>(count[g]);
  std::vector<double> sorted = density;
  std::sort(sorted.begin(), sorted.end());
  const double floor = sorted[n_groups / 2];

  double total_excess = 0.0;
  std::vector<double> excess(n_groups, 0.0);
  for (std::size_t g = 0; g < n_groups; ++g) {
    excess[g] = std::max(0.0, density[g] - floor) * static_cast<double>(count[g]);
    total_excess += excess[g];
  }
  if (total_excess <= 0.0) return 0.0;
  double acc = 0.0;
  for (std::size_t g = 0; g < n_groups; ++g) {
    acc += excess[g];
    if (acc >= 0.9999 * total_excess) {
      const std::size_t edge_bin = std::min(n_fold - 1, (g + 1) * group_len);
      return static_cast<double>(edge_bin) * sample_rate_hz /
             static_cast<double>(n);
    }
  }
  return 0.5 * sample_rate_hz;
}

struct LinearStepFilter {
  std::vector<double> phase_coeff;  // (beta2/2) w_abs^2 per meter
  double alpha_per_m = 0.0;         // power attenuation 1/m

  LinearStepFilter(std::size_t n, double sample_rate_hz, double center_offset_hz,
                   const FiberParams& fiber) {
    const auto w = fft_angular_frequencies(n, sample_rate_hz);
    const double w0 = 2.0 * M_PI * center_offset_hz;
    const double b2 = fiber.beta2_si();
    phase_coeff.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double wa = w[k] + w0;
      phase_coeff[k] = 0.5 * b2 * wa * wa;
    }
    alpha_per_m = fiber.alpha_lin_per_km() * 1e-3;
  }

  /// Forward propagation over dist_m applied to frequency-domain data.
  void apply(std::vector<cplx>& sx, std::vector<cplx>& sy, double dist_m) const {
    const double loss = std::exp(-0.5 * alpha_per_m * dist_m);  // field amplitude
    for (std::size_t k = 0; k < phase_coeff.size(); ++k) {
      const double ph = phase_coeff[k] * dist_m;
      const cplx rot = loss * cplx(std::cos(ph), std::sin(ph));
      sx[k] *= rot;
      sy[k] *= rot;
    }
  }
};

inline void apply_waveplate_freq(std::vector<cplx>& sx, std::vector<cplx>& sy,
                                 const std::vector<double>& w, const Su2& u,
                                 double dgd_s) {
  for (std::size_t k = 0; k < sx.size(); ++k) {
    const cplx xr = u.a * sx[k] + u.b * sy[k];
    const cplx yr = -std::conj(u.b) * sx[k] + std::conj(u.a) * sy[k];
    const double ph = 0.5 * w[k] * dgd_s;
    sx[k] = xr * cplx(std::cos(ph), std::sin(ph));
    sy[k] = yr * cplx(std::cos(ph), -std::sin(ph));
  }
}

}  // namespace detail

/// Random waveplate: Haar polarization rotation followed by +/- dgd/2
/// differential group delay between the principal axes. Energy-preserving.
inline DualPolSignal apply_pmd_section(const DualPolSignal& signal,
                                       double dgd_ps, Rng& rng) {
  if (dgd_ps < 0.0)
    throw std::invalid_argument("apply_pmd_section: dgd must be >= 0");
  DualPolSignal out = signal;
  const Su2 u = haar_su2(rng);
  fft_inplace(out.x);
  fft_inplace(out.y);
  const auto w = fft_angular_frequencies(out.size(), out.sample_rate_hz);
  detail::apply_waveplate_freq(out.x, out.y, w, u, dgd_ps * 1e-12);
  ifft_inplace(out.x);
  ifft_inplace(out.y);
  return out;
}

/// Propagates one span by symmetrized split-step integration of the Manakov
/// equation: half linear step, nonlinear phase rotation, half linear step.
/// The nonlinear weight is the step effective length referenced to the
/// mid-step power, which makes the pure-SPM case exact at any step size.
/// When pmd_rng is non-null a random waveplate with dgd = pmd_coeff sqrt(h)
/// is inserted once per step.
inline DualPolSignal ssfm_propagate_span(const DualPolSignal& signal,
                                         const FiberParams& fiber,
                                         double step_km, Rng* pmd_rng = nullptr) {
  if (!(step_km > 0.0))
    throw std::invalid_argument("ssfm_propagate_span: step must be > 0");
  signal.validate();
  const std::size_t n = signal.size();

  DualPolSignal state = signal;
  fft_inplace(state.x);
  fft_inplace(state.y);

  const double half_bw = detail::occupied_half_bandwidth(
      state.x, state.y, signal.sample_rate_hz);
  if (half_bw > 0.45 * signal.sample_rate_hz)
    throw std::runtime_error(
        "ssfm_propagate_span: occupied bandwidth exceeds 90% of Nyquist (" +
        std::to_string(half_bw * 2e-9) + " GHz of " +
        std::to_string(signal.sample_rate_hz * 1e-9) + " GHz grid)");

  const detail::LinearStepFilter lin(n, signal.sample_rate_hz,
                                     signal.center_offset_hz, fiber);
  const auto w = fft_angular_frequencies(n, signal.sample_rate_hz);
  const double gamma_eff = fiber.gamma_manakov_per_w_km();  // 1/(W km)
  const double alpha = fiber.alpha_lin_per_km();            // 1/km

  double remaining_km = fiber.span_length_km;
  while (remaining_km > 1e-12) {
    const double h = std::min(step_km, remaining_km);
    remaining_km -= h;

    lin.apply(state.x, state.y, 0.5 * h * 1e3);
    if (pmd_rng && fiber.pmd_coeff_ps_sqrt_km > 0.0) {
      const Su2 u = haar_su2(*pmd_rng);
      const double dgd_s = fiber.pmd_coeff_ps_sqrt_km * std::sqrt(h) * 1e-12;
      detail::apply_waveplate_freq(state.x, state.y, w, u, dgd_s);
    }

    // Effective length referenced to the attenuated mid-step field.
    const double h_eff =
        (alpha == 0.0) ? h : (1.0 - std::exp(-alpha * h)) / alpha;
    const double nl_coeff = gamma_eff * h_eff * std::exp(0.5 * alpha * h);

    ifft_inplace(state.x);
    ifft_inplace(state.y);
    for (std::size_t i = 0; i < n; ++i) {
      const double power = std::norm(state.x[i]) + std::norm(state.y[i]);
      const double ph = nl_coeff * power;
      const cplx rot(std::cos(ph), std::sin(ph));
      state.x[i] *= rot;
      state.y[i] *= rot;
    }
    fft_inplace(state.x);
    fft_inplace(state.y);

    lin.apply(state.x, state.y, 0.5 * h * 1e3);
  }

  ifft_inplace(state.x);
  ifft_inplace(state.y);
  return state;
}

/// EDFA: field gain sqrt(G) plus circular complex ASE per polarization with
/// PSD (NF_lin / 2) (G - 1) h nu over the simulation bandwidth.
inline DualPolSignal apply_edfa(const DualPolSignal& signal,
                                const AmplifierParams& amp,
                                double wavelength_nm, Rng* rng,
                                bool ase_enabled = true) {
  DualPolSignal out = signal;
  const double g_lin = db_to_linear(amp.gain_db);
  const double field_gain = std::sqrt(g_lin);
  for (auto& v : out.x) v *= field_gain;
  for (auto& v : out.y) v *= field_gain;
  if (ase_enabled && rng) {
    const double nu = kSpeedOfLight / (wavelength_nm * 1e-9);
    const double nf_lin = db_to_linear(amp.noise_figure_db);
    const double psd = 0.5 * nf_lin * (g_lin - 1.0) * kPlanck * nu;  // W/Hz/pol
    const double sigma2 = psd * signal.sample_rate_hz;  // per complex sample
    const double sigma = std::sqrt(sigma2);
    for (auto& v : out.x) v += sigma * rng->cgauss();
    for (auto& v : out.y) v += sigma * rng->cgauss();
  }
  return out;
}

namespace detail {

enum class StreamPurpose : std::uint64_t { kAse = 1, kPmd = 2 };

inline Rng span_stream(const LinkConfig& link, std::uint64_t realization_tag,
                       int span, StreamPurpose purpose) {
  return Rng(derive_seed(link.rng_seed, realization_tag,
                         static_cast<std::uint64_t>(span),
                         static_cast<std::uint64_t>(purpose)));
}

}  // namespace detail

/// Runs the full link: scales the (unit-power) input so the total launch power
/// is M times the per-subcarrier power, then alternates fiber spans and EDFAs.
/// realization_tag decorrelates noise between sweep cells that share a seed.
inline DualPolSignal propagate_link(const DualPolSignal& signal,
                                    const LinkConfig& link,
                                    double launch_power_dbm_per_subcarrier,
                                    int subcarrier_count,
                                    std::uint64_t realization_tag = 0) {
  link.validate();
  DualPolSignal state = signal;
  const double target =
      static_cast<double>(subcarrier_count) *
      dbm_to_watt(launch_power_dbm_per_subcarrier);
  scale_to_power(state, target);
  for (int span = 1; span <= link.n_spans; ++span) {
    Rng pmd_rng = detail::span_stream(link, 0 /* fixed per link */, span,
                                      detail::StreamPurpose::kPmd);
    state = ssfm_propagate_span(state, link.fiber, link.forward_step_km,
                                link.pmd_enabled ? &pmd_rng : nullptr);
    Rng ase_rng = detail::span_stream(link, realization_tag, span,
                                      detail::StreamPurpose::kAse);
    state = apply_edfa(state, link.amp, link.fiber.wavelength_nm,
                       link.ase_enabled ? &ase_rng : nullptr, link.ase_enabled);
  }
  return state;
}

}  // namespace nlclab
