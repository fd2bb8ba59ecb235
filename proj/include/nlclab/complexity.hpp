#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace nlclab {

enum class ComplexityKind {
  EDC,
  DBP,
  VNLE,
  TF_DBP,
  INIC_DBP,
  INIC_VS,
  ILIC,
};

inline std::string to_string(ComplexityKind k) {
  switch (k) {
    case ComplexityKind::EDC: return "EDC";
    case ComplexityKind::DBP: return "DBP";
    case ComplexityKind::VNLE: return "VNLE";
    case ComplexityKind::TF_DBP: return "TF_DBP";
    case ComplexityKind::INIC_DBP: return "INIC_DBP";
    case ComplexityKind::INIC_VS: return "INIC_VS";
    case ComplexityKind::ILIC: return "ILIC";
  }
  return "?";
}

struct ComplexityQuery {
  ComplexityKind kind = ComplexityKind::EDC;
  int n_spans = 10;          // N
  std::uint64_t fft_size = 1024;  // N_f, power of two
  int steps_per_span = 1;    // s, DBP family

  void validate() const {
    if (n_spans < 1) throw std::invalid_argument("complexity: N must be >= 1");
    if (fft_size == 0 || (fft_size & (fft_size - 1)) != 0)
      throw std::invalid_argument("complexity: FFT size must be a power of two");
    if (steps_per_span < 1)
      throw std::invalid_argument("complexity: steps_per_span must be >= 1");
  }
};

namespace detail {

inline std::uint64_t ilog2(std::uint64_t v) {
  std::uint64_t r = 0;
  while (v >>= 1) ++r;
  return r;
}

}  // namespace detail

/// Real-multiplication counts (exact integers):
///   EDC          4 Nf log2 Nf + 4 Nf               (N-independent)
///   DBP          s (4 N Nf log2 Nf + 10.5 N Nf)
///   VNLE         2 N Nf log2 Nf + 4.25 N Nf
///   TF-DBP       DBP formula with its own s over the total field
///   INIC-DBP/VS  3x the single-step inner equalizer
///   ILIC         3x EDC
inline std::uint64_t real_mults(const ComplexityQuery& q) {
  q.validate();
  const std::uint64_t nf = q.fft_size;
  const std::uint64_t lg = detail::ilog2(nf);
  const std::uint64_t n = static_cast<std::uint64_t>(q.n_spans);
  const std::uint64_t s = static_cast<std::uint64_t>(q.steps_per_span);
  const std::uint64_t edc_cost = 4 * nf * lg + 4 * nf;
  const std::uint64_t dbp_one = 4 * n * nf * lg + (21 * n * nf) / 2;
  const std::uint64_t vnle_cost = 2 * n * nf * lg + (17 * n * nf) / 4;
  switch (q.kind) {
    case ComplexityKind::EDC: return edc_cost;
    case ComplexityKind::DBP: return s * dbp_one;
    case ComplexityKind::VNLE: return vnle_cost;
    case ComplexityKind::TF_DBP: return s * dbp_one;
    case ComplexityKind::INIC_DBP: return 3 * dbp_one;
    case ComplexityKind::INIC_VS: return 3 * vnle_cost;
    case ComplexityKind::ILIC: return 3 * edc_cost;
  }
  throw std::invalid_argument("real_mults: invalid kind");
}

}  // namespace nlclab
