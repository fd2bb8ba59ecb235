#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "nlclab/fft.hpp"
#include "nlclab/modulation.hpp"
#include "nlclab/pulse.hpp"
#include "nlclab/rng.hpp"
#include "nlclab/rx_dsp.hpp"
#include "nlclab/superchannel.hpp"

using namespace nlclab;

namespace {

SuperchannelConfig small_config(int m_count, double delta, double rho,
                                int sps_global) {
  SuperchannelConfig cfg;
  cfg.subcarrier_count = m_count;
  cfg.symbol_rate_hz = 14e9;
  cfg.delta = delta;
  cfg.rho = rho;
  cfg.sps_global = sps_global;
  cfg.validate();
  return cfg;
}

DualPolSignal random_subcarrier(const SuperchannelConfig& cfg, int m,
                                std::size_t n_symbols, std::uint64_t seed,
                                ModKind mod, std::vector<cplx>* truth_x = nullptr) {
  const ModulationFormat& fmt = ModulationFormat::get(mod);
  auto sx = map_symbols(generate_prbs(derive_seed(seed, m, 0),
                                      n_symbols * fmt.bits_per_symbol),
                        fmt);
  auto sy = map_symbols(generate_prbs(derive_seed(seed, m, 1),
                                      n_symbols * fmt.bits_per_symbol),
                        fmt);
  if (truth_x) *truth_x = sx;
  return build_subcarrier_signal(sx, sy, cfg, m);
}

}  // namespace

// --- generate_prbs ---------------------------------------------------------

TEST(Prbs, DeterministicForFixedSeed) {
  EXPECT_EQ(generate_prbs(7, 8), generate_prbs(7, 8));
}

TEST(Prbs, BalancedAtMillionBits) {
  const auto bits = generate_prbs(7, 1000000);
  std::size_t ones = 0;
  for (auto b : bits) ones += b;
  const double frac = static_cast<double>(ones) / bits.size();
  EXPECT_GT(frac, 0.49);
  EXPECT_LT(frac, 0.51);
}

TEST(Prbs, SeedSensitivity) {
  EXPECT_NE(generate_prbs(7, 64), generate_prbs(8, 64));
}

TEST(Prbs, RejectsZeroLength) {
  EXPECT_THROW(generate_prbs(7, 0), std::invalid_argument);
}

// --- modulation ------------------------------------------------------------

TEST(Modulation, QpskGrayAnchor) {
  const auto& fmt = ModulationFormat::qpsk();
  const auto sym = map_symbols({0, 0}, fmt);
  ASSERT_EQ(sym.size(), 1u);
  EXPECT_NEAR(sym[0].real(), M_SQRT1_2, 1e-15);
  EXPECT_NEAR(sym[0].imag(), M_SQRT1_2, 1e-15);
}

TEST(Modulation, UnitAverageEnergyExact) {
  for (const auto* fmt : {&ModulationFormat::qpsk(), &ModulationFormat::qam16()}) {
    double acc = 0.0;
    for (const auto& p : fmt->constellation) acc += std::norm(p);
    EXPECT_DOUBLE_EQ(acc / fmt->constellation.size(), 1.0);
  }
}

TEST(Modulation, GrayAdjacencyProperty) {
  // Neighboring constellation points (minimum distance) differ in one bit.
  for (const auto* fmt : {&ModulationFormat::qpsk(), &ModulationFormat::qam16()}) {
    const auto& c = fmt->constellation;
    double dmin = 1e9;
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j)
        dmin = std::min(dmin, std::abs(c[i] - c[j]));
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j) {
        if (std::abs(c[i] - c[j]) < dmin * 1.01) {
          const unsigned diff = static_cast<unsigned>(i ^ j);
          EXPECT_EQ(__builtin_popcount(diff), 1)
              << "labels " << i << " and " << j << " for " << to_string(fmt->kind);
        }
      }
  }
}

TEST(Modulation, MapDecideRoundTrip) {
  for (const auto* fmt : {&ModulationFormat::qpsk(), &ModulationFormat::qam16()}) {
    const auto bits = generate_prbs(3, 4096 * fmt->bits_per_symbol);
    const auto syms = map_symbols(bits, *fmt);
    EXPECT_EQ(decide(syms, *fmt), bits);
  }
}

TEST(Modulation, LengthMismatchRejected) {
  EXPECT_THROW(map_symbols({1, 0, 1}, ModulationFormat::qpsk()),
               std::invalid_argument);
  EXPECT_THROW(map_symbols({1, 0, 1}, ModulationFormat::qam16()),
               std::invalid_argument);
}

TEST(Modulation, MidpointTieBreaksToSmallerLabel) {
  const auto& fmt = ModulationFormat::qam16();
  // Exact midpoint between the +1 and +3 I-rails at Q rail +1:
  // labels 1111 (15) and 1011 (11); the smaller Gray label must win.
  const double k = 1.0 / std::sqrt(10.0);
  const int label = decide_label(cplx(2.0 * k, k), fmt);
  EXPECT_EQ(label, 11);
  // QPSK: midpoint of labels 0 and 2 on the imaginary axis.
  EXPECT_EQ(decide_label(cplx(M_SQRT1_2, 0.0), ModulationFormat::qpsk()), 0);
}

TEST(Modulation, ZeroInputDecidesLeastInnerLabel) {
  // All four inner 16QAM points are equidistant from zero; least label is
  // 0101 = 5 (I rail -1, Q rail -1).
  EXPECT_EQ(decide_label(cplx(0.0, 0.0), ModulationFormat::qam16()), 5);
}

// --- RRC -------------------------------------------------------------------

TEST(Rrc, DcGainIsOne) {
  EXPECT_DOUBLE_EQ(rrc_frequency_response(0.0, 14e9, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(rrc_frequency_response(0.0, 14e9, 0.0), 1.0);
}

TEST(Rrc, MatchedCascadeImpulseOracle) {
  // Independent oracle: numerically convolve the truncated analytic taps
  // (span 64, rho 0.1) with themselves and sample at symbol spacing.
  const int sps = 8;
  const auto taps = rrc_time_taps(0.1, sps, 64);
  std::vector<double> cascade(2 * taps.size() - 1, 0.0);
  for (std::size_t i = 0; i < taps.size(); ++i)
    for (std::size_t j = 0; j < taps.size(); ++j)
      cascade[i + j] += taps[i] * taps[j] * sps;  // dt normalization
  const std::size_t mid = cascade.size() / 2;
  EXPECT_NEAR(cascade[mid], 1.0, 1e-3);
  for (int k = 1; k <= 28; ++k) {
    EXPECT_LT(std::fabs(cascade[mid + k * sps]), 1e-4) << "tail at +" << k;
    EXPECT_LT(std::fabs(cascade[mid - k * sps]), 1e-4) << "tail at -" << k;
  }
}

TEST(Rrc, ShapedCascadeRecoversSymbols) {
  // Frequency-domain TX shaping + matched filter is ISI-free at symbol
  // instants (circular block, exact response).
  const std::size_t n = 256;
  std::vector<cplx> symbols(n, cplx(0, 0));
  symbols[37] = cplx(1.0, 0.0);
  ComplexSequence shaped = rrc_shape(symbols, 0.1, 8, 64, 14e9);
  rrc_matched_filter_inplace(shaped.samples, shaped.sample_rate_hz, 14e9, 0.1);
  for (std::size_t k = 0; k < n; ++k) {
    const cplx v = shaped.samples[k * 8];
    if (k == 37)
      EXPECT_NEAR(std::abs(v), 1.0, 1e-9);
    else
      EXPECT_LT(std::abs(v), 1e-9) << "ISI at symbol " << k;
  }
}

TEST(Rrc, ZeroRollOffIsSincLimit) {
  const auto taps = rrc_time_taps(0.0, 4, 32, 1.0);
  const int mid = static_cast<int>(taps.size()) / 2;
  // Samples at symbol instants vanish except the center (sinc zeros).
  EXPECT_NEAR(taps[mid] * 4, 1.0, 1e-12);
  for (int k = 1; k <= 12; ++k)
    EXPECT_LT(std::fabs(taps[mid + 4 * k]), 1e-12);
}

TEST(Rrc, InvalidRollOffRejected) {
  EXPECT_THROW(rrc_shape({cplx(1, 0)}, -0.1, 4, 16, 1e9), std::invalid_argument);
  EXPECT_THROW(rrc_shape({cplx(1, 0)}, 1.5, 4, 16, 1e9), std::invalid_argument);
}

// --- mux / demux -----------------------------------------------------------

TEST(Superchannel, SingleSubcarrierMuxIsIdentity) {
  const auto cfg = small_config(1, 1.0, 0.1, 4);
  const auto sub = random_subcarrier(cfg, 1, 512, 11, ModKind::QPSK);
  const auto total = mux_subcarriers({sub}, cfg);
  EXPECT_LT(relative_rms(total, sub), 1e-12);
}

TEST(Superchannel, DisjointSpectraPowerAdditivity) {
  const auto cfg = small_config(4, 1.1, 0.1, 16);
  std::vector<DualPolSignal> subs;
  for (int m = 1; m <= 4; ++m)
    subs.push_back(random_subcarrier(cfg, m, 1024, 23, ModKind::QPSK));
  const auto total = mux_subcarriers(subs, cfg);
  const double ratio_db = 10.0 * std::log10(mean_power(total) / 4.0);
  EXPECT_NEAR(ratio_db, 0.0, 0.01);
}

TEST(Superchannel, SuperNyquistCentersAndFiniteness) {
  const auto cfg = small_config(4, 0.95, 0.1, 16);
  const double r = cfg.symbol_rate_hz;
  const std::size_t n_symbols = 4096;
  // Each subcarrier alone: spectral centroid sits at its configured offset.
  for (int m = 1; m <= 4; ++m) {
    std::vector<DualPolSignal> subs(4);
    for (int i = 1; i <= 4; ++i) {
      subs[i - 1] = (i == m)
                        ? random_subcarrier(cfg, i, n_symbols, 31, ModKind::QPSK)
                        : make_signal(n_symbols * cfg.sps_global,
                                      cfg.total_sample_rate_hz());
    }
    auto total = mux_subcarriers(subs, cfg);
    fft_inplace(total.x);
    fft_inplace(total.y);
    const auto freqs = fft_frequencies(total.x.size(), total.sample_rate_hz);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < total.x.size(); ++k) {
      const double p = std::norm(total.x[k]) + std::norm(total.y[k]);
      num += p * freqs[k];
      den += p;
    }
    const double expected = (m - 2.5) * 0.95 * r;
    EXPECT_NEAR(num / den, expected, 0.01 * r) << "subcarrier " << m;
  }
  // Full overlap case stays finite.
  std::vector<DualPolSignal> subs;
  for (int m = 1; m <= 4; ++m)
    subs.push_back(random_subcarrier(cfg, m, n_symbols, 37, ModKind::QPSK));
  EXPECT_TRUE(all_finite(mux_subcarriers(subs, cfg)));
}

TEST(Superchannel, MuxDemuxRoundTripEvm) {
  const auto cfg = small_config(1, 1.0, 0.1, 4);
  std::vector<cplx> truth;
  const auto sub = random_subcarrier(cfg, 1, 2048, 41, ModKind::QPSK, &truth);
  const auto total = mux_subcarriers({sub}, cfg);
  const auto back = demux_subcarrier(total, 1, cfg);
  std::vector<cplx> rx(truth.size());
  for (std::size_t k = 0; k < rx.size(); ++k) rx[k] = back.x[2 * k];
  EXPECT_LT(evm_db(rx, truth), -40.0);
}

TEST(Superchannel, OrthogonalCrosstalkBelowMinus30dB) {
  const auto cfg = small_config(4, 1.1, 0.1, 16);
  std::vector<DualPolSignal> subs(4);
  for (int i = 1; i <= 4; ++i)
    subs[i - 1] = (i == 2) ? random_subcarrier(cfg, i, 1024, 51, ModKind::QPSK)
                           : make_signal(1024 * cfg.sps_global,
                                         cfg.total_sample_rate_hz());
  const auto total = mux_subcarriers(subs, cfg);
  const auto wanted = demux_subcarrier(total, 2, cfg);
  const auto leak = demux_subcarrier(total, 3, cfg);
  const double leak_db =
      10.0 * std::log10(mean_power(leak) / mean_power(wanted));
  EXPECT_LT(leak_db, -30.0);
}

TEST(Superchannel, DemuxZeroInputGivesZero) {
  const auto cfg = small_config(2, 1.1, 0.1, 8);
  const auto total = make_signal(256 * cfg.sps_global, cfg.total_sample_rate_hz());
  const auto d = demux_subcarrier(total, 1, cfg);
  EXPECT_NEAR(mean_power(d), 0.0, 1e-300);
}

TEST(Superchannel, DemuxIndexOutOfRange) {
  const auto cfg = small_config(2, 1.1, 0.1, 8);
  const auto total = make_signal(256 * cfg.sps_global, cfg.total_sample_rate_hz());
  EXPECT_THROW(demux_subcarrier(total, 0, cfg), std::out_of_range);
  EXPECT_THROW(demux_subcarrier(total, 3, cfg), std::out_of_range);
}

TEST(Superchannel, MuxSampleRateMismatchRejected) {
  const auto cfg = small_config(2, 1.1, 0.1, 8);
  auto a = make_signal(256 * cfg.sps_global, cfg.total_sample_rate_hz());
  auto b = make_signal(256 * cfg.sps_global, cfg.total_sample_rate_hz() * 2);
  EXPECT_THROW(mux_subcarriers({a, b}, cfg), std::invalid_argument);
}

// --- module invariants -----------------------------------------------------

TEST(SignalCoreInvariants, ParsevalConsistency) {
  Rng rng(99);
  std::vector<cplx> x(4096);
  for (auto& v : x) v = rng.cgauss();
  double time_power = 0.0;
  for (const auto& v : x) time_power += std::norm(v);
  auto spec = fft(x);
  double freq_power = 0.0;
  for (const auto& v : spec) freq_power += std::norm(v);
  freq_power /= static_cast<double>(spec.size());
  EXPECT_NEAR(freq_power / time_power, 1.0, 1e-9);
}

TEST(SignalCoreInvariants, MuxDemuxBerZeroAt20dBSnr) {
  const auto cfg = small_config(4, 1.2, 0.1, 16);
  const ModulationFormat& fmt = ModulationFormat::qpsk();
  const std::size_t n_symbols = 4096;
  std::vector<DualPolSignal> subs;
  std::vector<std::vector<cplx>> truth(4);
  for (int m = 1; m <= 4; ++m)
    subs.push_back(
        random_subcarrier(cfg, m, n_symbols, 71, ModKind::QPSK, &truth[m - 1]));
  auto total = mux_subcarriers(subs, cfg);
  // AWGN at 20 dB SNR relative to the per-subcarrier power.
  Rng noise(123);
  const double snr_lin = std::pow(10.0, 20.0 / 10.0);
  const double sigma = std::sqrt(1.0 / snr_lin / 2.0);  // per pol
  for (std::size_t i = 0; i < total.size(); ++i) {
    total.x[i] += sigma * noise.cgauss();
    total.y[i] += sigma * noise.cgauss();
  }
  for (int m = 1; m <= 4; ++m) {
    const auto d = demux_subcarrier(total, m, cfg);
    std::vector<cplx> rx(n_symbols);
    for (std::size_t k = 0; k < n_symbols; ++k) rx[k] = d.x[2 * k];
    const auto report =
        count_ber(decide(truth[m - 1], fmt), decide(rx, fmt), fmt.bits_per_symbol);
    EXPECT_EQ(report.bit_errors, 0u) << "subcarrier " << m;
  }
}

TEST(SignalCoreInvariants, DeterministicWaveforms) {
  const auto cfg = small_config(2, 1.0, 0.1, 8);
  const auto a = random_subcarrier(cfg, 1, 512, 5, ModKind::QAM16);
  const auto b = random_subcarrier(cfg, 1, 512, 5, ModKind::QAM16);
  EXPECT_EQ(waveform_hash(a), waveform_hash(b));
}
