#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "nlclab/equalizers.hpp"
#include "nlclab/fiber.hpp"
#include "nlclab/rxchain.hpp"

using namespace nlclab;

namespace {

FiberParams table_fiber() { return FiberParams{}; }  // Table defaults

DualPolSignal gaussian_pulse(std::size_t n, double dt_s, double t0_s) {
  DualPolSignal s = make_signal(n, 1.0 / dt_s);
  const double tc = 0.5 * static_cast<double>(n) * dt_s;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = i * dt_s - tc;
    s.x[i] = std::exp(-t * t / (2.0 * t0_s * t0_s));
  }
  return s;
}

double rms_width_s(const DualPolSignal& s) {
  const double dt = 1.0 / s.sample_rate_hz;
  double p = 0.0, m1 = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double w = std::norm(s.x[i]) + std::norm(s.y[i]);
    p += w;
    m1 += w * i * dt;
  }
  const double mean = m1 / p;
  double m2 = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double w = std::norm(s.x[i]) + std::norm(s.y[i]);
    const double t = i * dt - mean;
    m2 += w * t * t;
  }
  return std::sqrt(m2 / p);
}

}  // namespace

// --- parameter conversions ---------------------------------------------------

TEST(FiberParams, Beta2FromDispersion) {
  EXPECT_NEAR(beta2_from_D(17.0, 1550.0), -21.68, 0.01);
  EXPECT_DOUBLE_EQ(beta2_from_D(0.0, 1550.0), 0.0);
  EXPECT_LT(beta2_from_D(17.0, 1550.0), 0.0);
  EXPECT_GT(beta2_from_D(-17.0, 1550.0), 0.0);
}

TEST(FiberParams, EffectiveLength) {
  EXPECT_NEAR(effective_length(0.2, 100.0), 21.5, 0.05);
  EXPECT_NEAR(effective_length(1e-9, 50.0), 50.0, 1e-3);
  EXPECT_DOUBLE_EQ(effective_length(0.2, 0.0), 0.0);
}

// --- split-step integrator ----------------------------------------------------

TEST(Ssfm, GaussianDispersionBroadening) {
  // Analytic oracle: a chirp-free Gaussian of 1/e amplitude half-width T0
  // broadens by sqrt(1 + (z/L_D)^2), L_D = T0^2/|beta2|.
  FiberParams fiber = table_fiber();
  fiber.alpha_db_per_km = 0.0;
  fiber.gamma_per_w_km = 0.0;
  const double t0 = 20e-12;
  const double beta2 = std::fabs(fiber.beta2_si());  // s^2/m
  const double ld_km = t0 * t0 / beta2 * 1e-3;
  fiber.span_length_km = ld_km;

  DualPolSignal pulse = gaussian_pulse(4096, 1e-12, t0);
  const double w0 = rms_width_s(pulse);
  const DualPolSignal out = ssfm_propagate_span(pulse, fiber, 0.1);
  EXPECT_NEAR(rms_width_s(out) / w0, std::sqrt(2.0), 1e-3);
}

TEST(Ssfm, PureSpmPreservesMagnitudeAndRotatesPhase) {
  FiberParams fiber = table_fiber();
  fiber.alpha_db_per_km = 0.0;
  fiber.dispersion_ps_nm_km = 0.0;
  fiber.span_length_km = 10.0;
  DualPolSignal s = make_signal(1024, 50e9);
  Rng rng(5);
  for (auto& v : s.x) v = rng.cgauss();
  // Band-limit to an eighth of the grid and keep the nonlinear phase small so
  // the SPM harmonics stay inside the band.
  fft_inplace(s.x);
  for (std::size_t k = 0; k < s.x.size(); ++k) {
    const std::size_t fold = (k <= s.x.size() / 2) ? k : s.x.size() - k;
    if (fold > s.x.size() / 16) s.x[k] = 0.0;
  }
  ifft_inplace(s.x);
  scale_to_power(s, 0.01);

  const DualPolSignal out = ssfm_propagate_span(s, fiber, 0.5);
  const double gl = fiber.gamma_manakov_per_w_km() * fiber.span_length_km;
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_NEAR(std::abs(out.x[i]), std::abs(s.x[i]), 1e-12);
    const cplx expected = s.x[i] * std::polar(1.0, gl * std::norm(s.x[i]));
    EXPECT_LT(std::abs(out.x[i] - expected), 1e-10);
  }
}

TEST(Ssfm, ZeroInputStaysZero) {
  const DualPolSignal s = make_signal(512, 10e9);
  const DualPolSignal out = ssfm_propagate_span(s, table_fiber(), 1.0);
  EXPECT_EQ(mean_power(out), 0.0);
}

TEST(Ssfm, AliasingGuardTriggers) {
  DualPolSignal s = make_signal(2048, 10e9);
  Rng rng(17);
  for (auto& v : s.x) v = rng.cgauss();  // white: occupies the full grid
  EXPECT_THROW(ssfm_propagate_span(s, table_fiber(), 1.0), std::runtime_error);
}

TEST(Ssfm, StepHalvingConvergence) {
  SuperchannelConfig sc;
  sc.subcarrier_count = 1;
  sc.sps_global = 8;
  const TxRealization tx = make_tx_realization(sc, ModKind::QAM16, 1024, 3);
  LinkConfig link;
  link.ase_enabled = false;
  link.pmd_enabled = false;

  auto run = [&](double step_km) {
    DualPolSignal s = tx.total;
    scale_to_power(s, dbm_to_watt(0.0));
    for (int span = 0; span < link.n_spans; ++span) {
      s = ssfm_propagate_span(s, link.fiber, step_km);
      s = apply_edfa(s, link.amp, link.fiber.wavelength_nm, nullptr, false);
    }
    return s;
  };
  const DualPolSignal coarse = run(0.1);
  const DualPolSignal fine = run(0.05);
  EXPECT_LT(relative_rms(coarse, fine), 1e-3);
}

// --- EDFA ---------------------------------------------------------------------

TEST(Edfa, GainScalesPower) {
  DualPolSignal s = make_signal(256, 10e9);
  Rng rng(7);
  for (auto& v : s.x) v = rng.cgauss();
  for (auto& v : s.y) v = rng.cgauss();
  AmplifierParams amp;
  amp.gain_db = 20.0;
  const DualPolSignal out = apply_edfa(s, amp, 1550.0, nullptr, false);
  EXPECT_NEAR(mean_power(out) / mean_power(s), 100.0, 1e-9);
}

TEST(Edfa, ZeroGainNoNoiseIsIdentity) {
  DualPolSignal s = make_signal(64, 10e9);
  s.x[3] = cplx(0.25, -1.0);
  AmplifierParams amp;
  amp.gain_db = 0.0;
  const DualPolSignal out = apply_edfa(s, amp, 1550.0, nullptr, false);
  EXPECT_LT(relative_rms(out, s), 1e-15);
}

TEST(Edfa, AseVarianceMatchesClosedForm) {
  // Monte Carlo against S_ASE * B * 2 over 100 realizations.
  const double fs = 100e9;
  const std::size_t n = 4096;
  AmplifierParams amp;  // 20 dB / 5.5 dB defaults
  const double g = db_to_linear(amp.gain_db);
  const double nf = db_to_linear(amp.noise_figure_db);
  const double nu = kSpeedOfLight / 1550e-9;
  const double expected = 2.0 * 0.5 * nf * (g - 1.0) * kPlanck * nu * fs;

  Rng rng(1234);
  double acc = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const DualPolSignal z = make_signal(n, fs);
    acc += mean_power(apply_edfa(z, amp, 1550.0, &rng, true));
  }
  EXPECT_NEAR(acc / 100.0 / expected, 1.0, 0.05);
}

// --- PMD ----------------------------------------------------------------------

TEST(Pmd, IdentityWaveplateIsIdentity) {
  DualPolSignal s = make_signal(128, 10e9);
  Rng rng(3);
  for (auto& v : s.x) v = rng.cgauss();
  for (auto& v : s.y) v = rng.cgauss();
  std::vector<cplx> sx = s.x, sy = s.y;
  fft_inplace(sx);
  fft_inplace(sy);
  const auto w = fft_angular_frequencies(s.size(), s.sample_rate_hz);
  detail::apply_waveplate_freq(sx, sy, w, Su2{}, 0.0);
  ifft_inplace(sx);
  ifft_inplace(sy);
  DualPolSignal out = s;
  out.x = sx;
  out.y = sy;
  EXPECT_LT(relative_rms(out, s), 1e-12);
}

TEST(Pmd, SectionPreservesEnergy) {
  DualPolSignal s = make_signal(512, 20e9);
  Rng sig_rng(9);
  for (auto& v : s.x) v = sig_rng.cgauss();
  for (auto& v : s.y) v = sig_rng.cgauss();
  Rng rng(11);
  const DualPolSignal out = apply_pmd_section(s, 3.0, rng);
  EXPECT_NEAR(total_energy(out) / total_energy(s), 1.0, 1e-12);
}

TEST(Pmd, SectionMatchesJonesMatrixModel) {
  // The waveform path must agree with a direct 2x2 Jones cascade built from
  // the same Haar draws.
  DualPolSignal s = make_signal(256, 40e9);
  Rng sig_rng(21);
  for (auto& v : s.x) v = sig_rng.cgauss();
  for (auto& v : s.y) v = sig_rng.cgauss();

  const double dgd_ps = 2.0;
  DualPolSignal via_op = s;
  {
    Rng rng(77);
    for (int k = 0; k < 5; ++k) via_op = apply_pmd_section(via_op, dgd_ps, rng);
  }

  std::vector<cplx> sx = s.x, sy = s.y;
  fft_inplace(sx);
  fft_inplace(sy);
  const auto w = fft_angular_frequencies(s.size(), s.sample_rate_hz);
  {
    Rng rng(77);
    for (int k = 0; k < 5; ++k) {
      const Su2 u = haar_su2(rng);
      detail::apply_waveplate_freq(sx, sy, w, u, dgd_ps * 1e-12);
    }
  }
  ifft_inplace(sx);
  ifft_inplace(sy);
  DualPolSignal direct = s;
  direct.x = sx;
  direct.y = sy;
  EXPECT_LT(relative_rms(via_op, direct), 1e-12);
}

TEST(Pmd, CascadeMeanDgdNearExpectation) {
  // 100 one-km sections at 0.1 ps/sqrt(km): mean DGD about 1 ps +/- 20%.
  const double dgd_section = 0.1 * std::sqrt(1.0) * 1e-12;
  const double dw = 2.0 * M_PI * 1e9;
  Rng rng(2024);
  double acc_ps = 0.0;
  const int trials = 60;
  for (int trial = 0; trial < trials; ++trial) {
    cplx j0[2][2] = {{{1, 0}, {0, 0}}, {{0, 0}, {1, 0}}};
    cplx j1[2][2] = {{{1, 0}, {0, 0}}, {{0, 0}, {1, 0}}};
    for (int k = 0; k < 100; ++k) {
      const Su2 u = haar_su2(rng);
      auto mul_section = [&u, dgd_section](cplx j[2][2], double w) {
        const cplx dplus = std::polar(1.0, 0.5 * w * dgd_section);
        const cplx dminus = std::conj(dplus);
        const cplx a = u.a, b = u.b;
        for (int col = 0; col < 2; ++col) {
          const cplx x = j[0][col], y = j[1][col];
          j[0][col] = dplus * (a * x + b * y);
          j[1][col] = dminus * (-std::conj(b) * x + std::conj(a) * y);
        }
      };
      mul_section(j0, 0.0);
      mul_section(j1, dw);
    }
    // M = J(w + dw) J(w)^dagger; eigenvalue phase split gives the DGD.
    cplx m[2][2];
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c)
        m[r][c] = j1[r][0] * std::conj(j0[c][0]) + j1[r][1] * std::conj(j0[c][1]);
    const cplx tr = m[0][0] + m[1][1];
    const cplx det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    const cplx disc = std::sqrt(tr * tr - 4.0 * det);
    const cplx l1 = 0.5 * (tr + disc);
    const cplx l2 = 0.5 * (tr - disc);
    acc_ps += std::fabs(std::arg(l1 * std::conj(l2))) / dw * 1e12;
  }
  const double mean_ps = acc_ps / trials;
  EXPECT_GT(mean_ps, 0.8);
  EXPECT_LT(mean_ps, 1.2);
}

// --- full link ----------------------------------------------------------------

TEST(Link, LinearSpanIsInvertible) {
  SuperchannelConfig sc;
  sc.subcarrier_count = 1;
  sc.sps_global = 4;
  const TxRealization tx = make_tx_realization(sc, ModKind::QAM16, 2048, 8);
  LinkConfig link;
  link.n_spans = 1;
  link.fiber.gamma_per_w_km = 0.0;
  link.ase_enabled = false;
  link.pmd_enabled = false;

  const double p_dbm = -2.0;
  const DualPolSignal rx = propagate_link(tx.total, link, p_dbm, 1);
  const DualPolSignal restored = apply_cd(rx, link.fiber, -link.total_length_km());
  DualPolSignal ref = tx.total;
  scale_to_power(ref, dbm_to_watt(p_dbm));
  EXPECT_LT(relative_rms(restored, ref), std::pow(10.0, -40.0 / 20.0));
}

TEST(Link, PowerBudgetExactlyCompensated) {
  SuperchannelConfig sc;
  sc.sps_global = 16;
  const TxRealization tx = make_tx_realization(sc, ModKind::QAM16, 1024, 12);
  LinkConfig link;
  link.ase_enabled = false;
  link.pmd_enabled = false;
  link.forward_step_km = 1.0;
  const DualPolSignal rx = propagate_link(tx.total, link, 1.0, 4);
  EXPECT_NEAR(mean_power(rx) / (4.0 * dbm_to_watt(1.0)), 1.0, 1e-6);
}

TEST(Link, LinearRegimeEquivalence) {
  SuperchannelConfig sc;
  sc.subcarrier_count = 1;
  sc.sps_global = 4;
  const TxRealization tx = make_tx_realization(sc, ModKind::QAM16, 1024, 19);
  LinkConfig nonlinear;
  nonlinear.n_spans = 2;
  nonlinear.ase_enabled = false;
  nonlinear.pmd_enabled = false;
  nonlinear.forward_step_km = 0.5;
  LinkConfig linear = nonlinear;
  linear.fiber.gamma_per_w_km = 0.0;

  const DualPolSignal a = propagate_link(tx.total, nonlinear, -20.0, 1);
  const DualPolSignal b = propagate_link(tx.total, linear, -20.0, 1);
  EXPECT_LT(relative_rms(a, b), std::pow(10.0, -35.0 / 20.0));
}

TEST(Link, SeededDeterminism) {
  SuperchannelConfig sc;
  sc.sps_global = 16;
  const TxRealization tx = make_tx_realization(sc, ModKind::QAM16, 1024, 4);
  LinkConfig link;
  link.n_spans = 2;
  link.forward_step_km = 1.0;
  link.rng_seed = 555;
  const DualPolSignal a = propagate_link(tx.total, link, 0.0, 4, 3);
  const DualPolSignal b = propagate_link(tx.total, link, 0.0, 4, 3);
  EXPECT_EQ(waveform_hash(a), waveform_hash(b));
  // Different noise tag gives a different realization.
  const DualPolSignal c = propagate_link(tx.total, link, 0.0, 4, 4);
  EXPECT_NE(waveform_hash(a), waveform_hash(c));
}
