#pragma once

#include <stdexcept>
#include <vector>

#include "nlclab/equalizers.hpp"
#include "nlclab/rxchain.hpp"
#include "nlclab/superchannel.hpp"

namespace nlclab {

struct SubcarrierEvaluation {
  ChainResult chain;
  double phi_used = 1.0;
};

namespace detail {

inline DualPolSignal apply_per_subcarrier_equalizer(const DualPolSignal& demuxed,
                                                    const EqualizerSpec& spec) {
  switch (spec.kind) {
    case EqKind::EDC: return edc(demuxed, spec.link);
    case EqKind::DBP: return dbp(demuxed, spec);
    case EqKind::VNLE: return vnle(demuxed, spec.link);
    case EqKind::PERTURBATION: return perturbation_rx(demuxed, spec.link);
    default:
      throw std::invalid_argument(
          "apply_per_subcarrier_equalizer: not a per-subcarrier kind");
  }
}

}  // namespace detail

/// Demultiplexes subcarrier m, applies the given per-subcarrier equalizer and
/// runs the receive chain against the transmitted truth. When the spec is a
/// single-step DBP with no pinned phi, the nonlinear-phase scalar is
/// grid-searched over {0.50 ... 1.00} and the lowest-EVM setting is kept.
inline SubcarrierEvaluation equalize_and_detect(
    const DualPolSignal& total_rx, int m, const EqualizerSpec& spec,
    const SuperchannelConfig& cfg, const SymbolGrid& grid,
    const RxChainOptions& opts, const AdaptiveEqState* warm_start = nullptr) {
  const auto& truth = grid.subcarriers.at(m - 1);
  const ModulationFormat& fmt = ModulationFormat::get(grid.format);
  const DualPolSignal demuxed = demux_subcarrier(total_rx, m, cfg);

  const bool search_phi = spec.kind == EqKind::DBP && spec.steps_per_span == 1 &&
                          !spec.phi.has_value();
  SubcarrierEvaluation best;
  bool have = false;
  if (search_phi) {
    for (int i = 0; i <= 10; ++i) {
      EqualizerSpec candidate = spec;
      candidate.phi = 0.50 + 0.05 * i;
      const DualPolSignal eq = dbp(demuxed, candidate);
      ChainResult r = run_rx_chain(eq, truth.x, truth.y, fmt, opts, warm_start);
      if (!have || r.evm_db < best.chain.evm_db) {
        best.chain = std::move(r);
        best.phi_used = *candidate.phi;
        have = true;
      }
    }
  } else {
    const DualPolSignal eq = detail::apply_per_subcarrier_equalizer(demuxed, spec);
    best.chain = run_rx_chain(eq, truth.x, truth.y, fmt, opts, warm_start);
    best.phi_used = spec.phi_value();
  }
  return best;
}

}  // namespace nlclab
