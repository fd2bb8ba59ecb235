#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "nlclab/types.hpp"

namespace nlclab {

enum class ModKind { QPSK, QAM16 };

inline std::string to_string(ModKind k) {
  return k == ModKind::QPSK ? "QPSK" : "16QAM";
}

/// Gray-labeled constellation with unit average symbol energy.
///
/// QPSK: label b1b0 with b0 = sign of I (0 -> +), b1 = sign of Q; this is the
/// counter-clockwise Gray circle 00 -> 01 -> 11 -> 10 starting at (1+i)/sqrt2.
/// 16QAM: label b3b2 b1b0, the high pair selects the I rail and the low pair
/// the Q rail with the Gray order 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3,
/// scaled by 1/sqrt(10).
struct ModulationFormat {
  ModKind kind = ModKind::QPSK;
  int bits_per_symbol = 2;
  std::vector<cplx> constellation;  // indexed by Gray label

  static const ModulationFormat& qpsk() {
    static const ModulationFormat f = make(ModKind::QPSK);
    return f;
  }
  static const ModulationFormat& qam16() {
    static const ModulationFormat f = make(ModKind::QAM16);
    return f;
  }
  static const ModulationFormat& get(ModKind k) {
    return k == ModKind::QPSK ? qpsk() : qam16();
  }

  static ModulationFormat make(ModKind kind) {
    ModulationFormat f;
    f.kind = kind;
    if (kind == ModKind::QPSK) {
      f.bits_per_symbol = 2;
      const double a = M_SQRT1_2;
      f.constellation.resize(4);
      for (int label = 0; label < 4; ++label) {
        const double i = (label & 1) ? -a : a;   // b0
        const double q = (label & 2) ? -a : a;   // b1
        f.constellation[label] = {i, q};
      }
    } else {
      f.bits_per_symbol = 4;
      const double a = 1.0 / std::sqrt(10.0);
      f.constellation.resize(16);
      for (int label = 0; label < 16; ++label) {
        const int ib = (label >> 2) & 3;
        const int qb = label & 3;
        f.constellation[label] = {gray_rail(ib) * a, gray_rail(qb) * a};
      }
    }
    return f;
  }

  static double gray_rail(int bits) {
    switch (bits) {
      case 0: return -3.0;
      case 1: return -1.0;
      case 3: return +1.0;
      default: return +3.0;  // bits == 2
    }
  }
};

/// Deterministic pseudo-random bit sequence.
inline std::vector<std::uint8_t> generate_prbs(std::uint64_t seed,
                                               std::size_t n_bits) {
  if (n_bits == 0) throw std::invalid_argument("generate_prbs: n_bits must be > 0");
  std::vector<std::uint8_t> bits(n_bits);
  std::mt19937_64 gen(seed);
  std::uint64_t word = 0;
  int avail = 0;
  for (std::size_t i = 0; i < n_bits; ++i) {
    if (avail == 0) {
      word = gen();
      avail = 64;
    }
    bits[i] = static_cast<std::uint8_t>(word & 1u);
    word >>= 1;
    --avail;
  }
  return bits;
}

inline std::vector<cplx> map_symbols(const std::vector<std::uint8_t>& bits,
                                     const ModulationFormat& fmt) {
  const int bps = fmt.bits_per_symbol;
  if (bits.size() % static_cast<std::size_t>(bps) != 0)
    throw std::invalid_argument("map_symbols: bit count not divisible by bits per symbol");
  std::vector<cplx> out(bits.size() / bps);
  for (std::size_t s = 0; s < out.size(); ++s) {
    int label = 0;
    for (int b = 0; b < bps; ++b)
      label = (label << 1) | bits[s * bps + b];  // MSB first
    out[s] = fmt.constellation[label];
  }
  return out;
}

namespace detail {

// Rail decision shared by both formats. Rails are Gray-ordered in amplitude;
// exact threshold hits go to the rail with the numerically smaller bit pair,
// which makes the full-symbol tie-break "smaller Gray label wins".
inline int decide_rail_qam16(double v) {
  const double a = 1.0 / std::sqrt(10.0);
  const double t = 2.0 * a;
  if (v < -t) return 0;          // -3
  if (v == -t) return 0;         // tie: bits 00 < 01
  if (v < 0.0) return 1;         // -1
  if (v == 0.0) return 1;        // tie: bits 01 < 11
  if (v < t) return 3;           // +1
  if (v == t) return 2;          // tie: bits 10 < 11
  return 2;                      // +3
}

}  // namespace detail

/// Nearest-constellation-point decision; exact midpoints resolve to the
/// smaller Gray label.
inline int decide_label(cplx v, const ModulationFormat& fmt) {
  if (fmt.kind == ModKind::QPSK) {
    const int b0 = (v.real() < 0.0) ? 1 : 0;
    const int b1 = (v.imag() < 0.0) ? 1 : 0;
    return (b1 << 1) | b0;
  }
  const int ib = detail::decide_rail_qam16(v.real());
  const int qb = detail::decide_rail_qam16(v.imag());
  return (ib << 2) | qb;
}

inline cplx decide_symbol(cplx v, const ModulationFormat& fmt) {
  return fmt.constellation[decide_label(v, fmt)];
}

inline std::vector<cplx> decide_symbols(const std::vector<cplx>& in,
                                        const ModulationFormat& fmt) {
  std::vector<cplx> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = decide_symbol(in[i], fmt);
  return out;
}

/// Hard decision to bits, the inverse of map_symbols on clean input.
inline std::vector<std::uint8_t> decide(const std::vector<cplx>& symbols,
                                        const ModulationFormat& fmt) {
  const int bps = fmt.bits_per_symbol;
  std::vector<std::uint8_t> bits(symbols.size() * bps);
  for (std::size_t s = 0; s < symbols.size(); ++s) {
    const int label = decide_label(symbols[s], fmt);
    for (int b = 0; b < bps; ++b)
      bits[s * bps + b] =
          static_cast<std::uint8_t>((label >> (bps - 1 - b)) & 1);
  }
  return bits;
}

/// Per-subcarrier, per-polarization transmitted symbols; ground truth for BER.
struct SymbolGrid {
  struct Entry {
    std::vector<cplx> x;
    std::vector<cplx> y;
  };
  std::vector<Entry> subcarriers;  // index m-1
  ModKind format = ModKind::QAM16;
  double symbol_rate_hz = 0.0;
};

}  // namespace nlclab
