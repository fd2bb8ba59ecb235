#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nlclab/fiber.hpp"
#include "nlclab/modulation.hpp"
#include "nlclab/rng.hpp"
#include "nlclab/rx_dsp.hpp"
#include "nlclab/superchannel.hpp"
#include "nlclab/types.hpp"

namespace nlclab {

/// One transmitted superchannel realization: per-subcarrier symbol truth and
/// the unit-scale multiplexed field (launch power is applied by the link).
struct TxRealization {
  SymbolGrid grid;
  DualPolSignal total;
};

inline TxRealization make_tx_realization(const SuperchannelConfig& cfg,
                                         ModKind mod, std::size_t n_symbols,
                                         std::uint64_t seed) {
  cfg.validate();
  const ModulationFormat& fmt = ModulationFormat::get(mod);
  TxRealization tx;
  tx.grid.format = mod;
  tx.grid.symbol_rate_hz = cfg.symbol_rate_hz;
  tx.grid.subcarriers.resize(cfg.subcarrier_count);
  std::vector<DualPolSignal> subs;
  subs.reserve(cfg.subcarrier_count);
  for (int m = 1; m <= cfg.subcarrier_count; ++m) {
    auto& entry = tx.grid.subcarriers[m - 1];
    const std::size_t n_bits = n_symbols * fmt.bits_per_symbol;
    entry.x = map_symbols(
        generate_prbs(derive_seed(seed, static_cast<std::uint64_t>(m), 0), n_bits),
        fmt);
    entry.y = map_symbols(
        generate_prbs(derive_seed(seed, static_cast<std::uint64_t>(m), 1), n_bits),
        fmt);
    subs.push_back(build_subcarrier_signal(entry.x, entry.y, cfg, m));
  }
  tx.total = mux_subcarriers(subs, cfg);
  return tx;
}

struct RxChainOptions {
  bool adaptive = true;           // CMA/RDE + Viterbi-Viterbi when set
  std::size_t cma_train_symbols = 10000;
  std::size_t skip_symbols = 12288;  // excluded from BER/EVM counting
  std::size_t prefix_symbols = 1024; // known training prefix (alignment fits)
  std::size_t pilot_symbols = 64;    // ambiguity header inside the prefix
  std::size_t vv_block = 64;
  int n_taps = 13;
  double mu = 1e-3;
};

struct ChainResult {
  BerReport ber;
  double evm_db = 0.0;
  bool error_propagation_flag = false;  // set by callers for DFE regimes
  std::vector<cplx> symbols_x;          // aligned 1-sample-per-symbol outputs
  std::vector<cplx> symbols_y;
  AdaptiveEqState eq_state;
};

namespace detail {

inline void scalar_align_prefix(std::vector<cplx>& stream,
                                const std::vector<cplx>& ref,
                                std::size_t prefix) {
  const std::size_t n = std::min({stream.size(), ref.size(), prefix});
  if (n == 0) return;
  cplx num(0, 0);
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += std::conj(stream[i]) * ref[i];
    den += std::norm(stream[i]);
  }
  if (den <= 0.0) return;
  const cplx a = num / den;
  for (auto& v : stream) v *= a;
}

inline std::vector<cplx> downsample2(const std::vector<cplx>& in) {
  std::vector<cplx> out(in.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[2 * i];
  return out;
}

}  // namespace detail

/// Post-equalizer receive chain for one subcarrier at 2 samples/symbol.
/// Adaptive mode runs the CMA/RDE butterfly, Viterbi-Viterbi phase recovery
/// and pilot-header ambiguity resolution; the ideal mode (for noiseless
/// oracles) downsamples and applies a prefix-aided complex scalar per
/// polarization. BER and EVM are pooled over both polarizations and counted
/// after skip_symbols.
inline ChainResult run_rx_chain(const DualPolSignal& rx_2sps,
                                const std::vector<cplx>& tx_x,
                                const std::vector<cplx>& tx_y,
                                const ModulationFormat& fmt,
                                const RxChainOptions& opts,
                                const AdaptiveEqState* warm_start = nullptr) {
  rx_2sps.validate();
  const std::size_t n_symbols = rx_2sps.size() / 2;
  if (tx_x.size() != n_symbols || tx_y.size() != n_symbols)
    throw std::invalid_argument("run_rx_chain: truth length mismatch");
  if (opts.skip_symbols >= n_symbols)
    throw std::invalid_argument("run_rx_chain: skip region covers the whole run");

  ChainResult result;
  DualPolSignal sym;
  if (opts.adaptive) {
    DualPolSignal norm = rx_2sps;
    scale_to_power(norm, 1.0);
    AdaptiveEqState state = warm_start
                                ? *warm_start
                                : AdaptiveEqState::centered(opts.n_taps, opts.mu);
    const std::size_t train = warm_start ? 0 : opts.cma_train_symbols;
    sym = cma_rde_equalize(norm, state, fmt, train);
    result.eq_state = state;
    scale_to_power(sym, 1.0);
    sym.x = viterbi_viterbi_cpe(sym.x, opts.vv_block, fmt);
    sym.y = viterbi_viterbi_cpe(sym.y, opts.vv_block, fmt);
    const std::vector<cplx> pilot_x(tx_x.begin(), tx_x.begin() + opts.pilot_symbols);
    const std::vector<cplx> pilot_y(tx_y.begin(), tx_y.begin() + opts.pilot_symbols);
    resolve_ambiguity(sym, pilot_x, pilot_y);
  } else {
    sym.sample_rate_hz = rx_2sps.sample_rate_hz / 2.0;
    sym.x = detail::downsample2(rx_2sps.x);
    sym.y = detail::downsample2(rx_2sps.y);
  }
  detail::scalar_align_prefix(sym.x, tx_x, opts.prefix_symbols);
  detail::scalar_align_prefix(sym.y, tx_y, opts.prefix_symbols);

  const std::size_t skip = opts.skip_symbols;
  std::vector<cplx> rx_cnt_x(sym.x.begin() + skip, sym.x.end());
  std::vector<cplx> rx_cnt_y(sym.y.begin() + skip, sym.y.end());
  std::vector<cplx> tx_cnt_x(tx_x.begin() + skip, tx_x.end());
  std::vector<cplx> tx_cnt_y(tx_y.begin() + skip, tx_y.end());

  const BerReport bx = count_ber(decide(tx_cnt_x, fmt), decide(rx_cnt_x, fmt),
                                 fmt.bits_per_symbol);
  const BerReport by = count_ber(decide(tx_cnt_y, fmt), decide(rx_cnt_y, fmt),
                                 fmt.bits_per_symbol);
  result.ber = BerReport::from_counts(bx.bit_errors + by.bit_errors,
                                      bx.bits_total + by.bits_total);

  double err = 0.0, pref = 0.0;
  for (std::size_t i = 0; i < rx_cnt_x.size(); ++i) {
    err += std::norm(rx_cnt_x[i] - tx_cnt_x[i]) +
           std::norm(rx_cnt_y[i] - tx_cnt_y[i]);
    pref += std::norm(tx_cnt_x[i]) + std::norm(tx_cnt_y[i]);
  }
  result.evm_db = (err > 0.0 && pref > 0.0)
                      ? 10.0 * std::log10(err / pref)
                      : -std::numeric_limits<double>::infinity();

  result.symbols_x = std::move(sym.x);
  result.symbols_y = std::move(sym.y);
  return result;
}

}  // namespace nlclab
