#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "nlclab/complexity.hpp"
#include "nlclab/evaluate.hpp"
#include "nlclab/inic.hpp"
#include "nlclab/rxchain.hpp"

namespace nlclab {

enum class SweepEqKind {
  EDC,
  DBP,
  TF_DBP,
  VNLE,
  PERTURBATION,
  PCTW,
  INIC_DBP,
  INIC_VS,
  ILIC,
};

inline std::string to_string(SweepEqKind k) {
  switch (k) {
    case SweepEqKind::EDC: return "EDC";
    case SweepEqKind::DBP: return "DBP";
    case SweepEqKind::TF_DBP: return "TF_DBP";
    case SweepEqKind::VNLE: return "VNLE";
    case SweepEqKind::PERTURBATION: return "PERTURBATION";
    case SweepEqKind::PCTW: return "PCTW";
    case SweepEqKind::INIC_DBP: return "INIC_DBP";
    case SweepEqKind::INIC_VS: return "INIC_VS";
    case SweepEqKind::ILIC: return "ILIC";
  }
  return "?";
}

inline std::optional<SweepEqKind> sweep_kind_from_string(const std::string& s) {
  static const std::map<std::string, SweepEqKind> table = {
      {"EDC", SweepEqKind::EDC},           {"DBP", SweepEqKind::DBP},
      {"TF_DBP", SweepEqKind::TF_DBP},     {"VNLE", SweepEqKind::VNLE},
      {"PERTURBATION", SweepEqKind::PERTURBATION},
      {"PCTW", SweepEqKind::PCTW},         {"INIC_DBP", SweepEqKind::INIC_DBP},
      {"INIC_VS", SweepEqKind::INIC_VS},   {"ILIC", SweepEqKind::ILIC}};
  auto it = table.find(s);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

struct EqualizerEntry {
  std::string id;  // CSV label; defaults to kind[-steps]
  SweepEqKind kind = SweepEqKind::EDC;
  int steps_per_span = 1;
  std::optional<double> phi;

  std::string display_id() const {
    if (!id.empty()) return id;
    switch (kind) {
      case SweepEqKind::DBP:
      case SweepEqKind::TF_DBP:
        return to_string(kind) + "-" + std::to_string(steps_per_span);
      default:
        return to_string(kind);
    }
  }
};

struct ExperimentConfig {
  SuperchannelConfig superchannel;
  ModKind modulation = ModKind::QAM16;
  LinkConfig link;
  std::vector<EqualizerEntry> equalizers;
  std::vector<double> power_grid_dbm;
  std::vector<std::uint64_t> seeds;
  std::size_t n_symbols = 65536;
  std::vector<int> target_subcarriers;

  void validate() const {
    std::vector<std::string> errors;
    auto guard = [&errors](const auto& fn, const std::string& field) {
      try {
        fn();
      } catch (const std::exception& e) {
        errors.push_back(field + ": " + e.what());
      }
    };
    guard([this] { superchannel.validate(); }, "superchannel");
    guard([this] { link.validate(); }, "link");
    if (equalizers.empty()) errors.push_back("equalizers: list must not be empty");
    if (power_grid_dbm.empty())
      errors.push_back("power_grid_dbm: list must not be empty");
    if (seeds.empty()) errors.push_back("seeds: list must not be empty");
    if (n_symbols < (1u << 14))
      errors.push_back("n_symbols: must be >= 16384 for a usable BER floor");
    if ((n_symbols & (n_symbols - 1)) != 0)
      errors.push_back("n_symbols: must be a power of two");
    if (target_subcarriers.empty())
      errors.push_back("target_subcarriers: list must not be empty");
    for (int m : target_subcarriers)
      if (m < 1 || m > superchannel.subcarrier_count)
        errors.push_back("target_subcarriers: index " + std::to_string(m) +
                         " out of range");
    for (const auto& eq : equalizers) {
      if (eq.steps_per_span < 1)
        errors.push_back(eq.display_id() + ": steps_per_span must be >= 1");
      if (eq.phi && (*eq.phi <= 0.0 || *eq.phi > 1.0))
        errors.push_back(eq.display_id() + ": phi must be in (0, 1]");
      if (eq.kind == SweepEqKind::PCTW && superchannel.subcarrier_count != 1)
        errors.push_back("PCTW: requires a single-subcarrier configuration");
    }
    if (!errors.empty()) {
      std::string msg = "invalid experiment config:";
      for (const auto& e : errors) msg += "\n  - " + e;
      throw std::invalid_argument(msg);
    }
  }
};

// ---------------------------------------------------------------------------
// Config file I/O (strict JSON: unknown keys are rejected, all invariant
// violations are reported together).
// ---------------------------------------------------------------------------

namespace detail {

using nlohmann::json;

inline void reject_unknown_keys(const json& obj, const std::string& where,
                                std::initializer_list<const char*> known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok)
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " +
                                  where);
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using detail::reject_unknown_keys;
  ExperimentConfig cfg;
  reject_unknown_keys(j, "top level",
                      {"superchannel", "modulation", "link", "equalizers",
                       "power_grid_dbm", "seeds", "n_symbols",
                       "target_subcarriers"});

  const auto& sc = j.at("superchannel");
  reject_unknown_keys(sc, "superchannel",
                      {"subcarrier_count", "symbol_rate_hz", "delta", "rho",
                       "sps_global", "sps_rx", "rrc_span_symbols"});
  cfg.superchannel.subcarrier_count = sc.at("subcarrier_count").get<int>();
  cfg.superchannel.symbol_rate_hz = sc.at("symbol_rate_hz").get<double>();
  cfg.superchannel.delta = sc.at("delta").get<double>();
  cfg.superchannel.rho = sc.at("rho").get<double>();
  cfg.superchannel.sps_global = sc.at("sps_global").get<int>();
  if (sc.contains("sps_rx")) cfg.superchannel.sps_rx = sc.at("sps_rx").get<int>();
  if (sc.contains("rrc_span_symbols"))
    cfg.superchannel.rrc_span_symbols = sc.at("rrc_span_symbols").get<int>();

  const std::string mod = j.at("modulation").get<std::string>();
  if (mod == "QPSK")
    cfg.modulation = ModKind::QPSK;
  else if (mod == "16QAM")
    cfg.modulation = ModKind::QAM16;
  else
    throw std::invalid_argument("config: modulation must be QPSK or 16QAM");

  const auto& lk = j.at("link");
  reject_unknown_keys(
      lk, "link",
      {"n_spans", "span_length_km", "alpha_db_per_km", "dispersion_ps_nm_km",
       "gamma_per_w_km", "pmd_coeff_ps_sqrt_km", "wavelength_nm", "edfa_gain_db",
       "edfa_noise_figure_db", "forward_step_km", "ase_enabled", "pmd_enabled",
       "rng_seed"});
  cfg.link.n_spans = lk.at("n_spans").get<int>();
  cfg.link.fiber.span_length_km = lk.at("span_length_km").get<double>();
  cfg.link.fiber.alpha_db_per_km = lk.at("alpha_db_per_km").get<double>();
  cfg.link.fiber.dispersion_ps_nm_km = lk.at("dispersion_ps_nm_km").get<double>();
  cfg.link.fiber.gamma_per_w_km = lk.at("gamma_per_w_km").get<double>();
  cfg.link.fiber.pmd_coeff_ps_sqrt_km =
      lk.at("pmd_coeff_ps_sqrt_km").get<double>();
  if (lk.contains("wavelength_nm"))
    cfg.link.fiber.wavelength_nm = lk.at("wavelength_nm").get<double>();
  cfg.link.amp.gain_db = lk.at("edfa_gain_db").get<double>();
  cfg.link.amp.noise_figure_db = lk.at("edfa_noise_figure_db").get<double>();
  cfg.link.forward_step_km = lk.at("forward_step_km").get<double>();
  cfg.link.ase_enabled = lk.at("ase_enabled").get<bool>();
  cfg.link.pmd_enabled = lk.at("pmd_enabled").get<bool>();
  cfg.link.rng_seed = lk.at("rng_seed").get<std::uint64_t>();

  for (const auto& je : j.at("equalizers")) {
    detail::reject_unknown_keys(je, "equalizers[]",
                                {"id", "kind", "steps_per_span", "phi"});
    EqualizerEntry e;
    const std::string kind = je.at("kind").get<std::string>();
    auto parsed = sweep_kind_from_string(kind);
    if (!parsed)
      throw std::invalid_argument("config: unknown equalizer kind '" + kind + "'");
    e.kind = *parsed;
    if (je.contains("id")) e.id = je.at("id").get<std::string>();
    if (je.contains("steps_per_span"))
      e.steps_per_span = je.at("steps_per_span").get<int>();
    if (je.contains("phi") && !je.at("phi").is_null())
      e.phi = je.at("phi").get<double>();
    cfg.equalizers.push_back(std::move(e));
  }

  cfg.power_grid_dbm = j.at("power_grid_dbm").get<std::vector<double>>();
  cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  cfg.n_symbols = j.at("n_symbols").get<std::size_t>();
  cfg.target_subcarriers = j.at("target_subcarriers").get<std::vector<int>>();
  cfg.validate();
  return cfg;
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["superchannel"] = {
      {"subcarrier_count", cfg.superchannel.subcarrier_count},
      {"symbol_rate_hz", cfg.superchannel.symbol_rate_hz},
      {"delta", cfg.superchannel.delta},
      {"rho", cfg.superchannel.rho},
      {"sps_global", cfg.superchannel.sps_global},
      {"sps_rx", cfg.superchannel.sps_rx},
      {"rrc_span_symbols", cfg.superchannel.rrc_span_symbols}};
  j["modulation"] = to_string(cfg.modulation);
  j["link"] = {{"n_spans", cfg.link.n_spans},
               {"span_length_km", cfg.link.fiber.span_length_km},
               {"alpha_db_per_km", cfg.link.fiber.alpha_db_per_km},
               {"dispersion_ps_nm_km", cfg.link.fiber.dispersion_ps_nm_km},
               {"gamma_per_w_km", cfg.link.fiber.gamma_per_w_km},
               {"pmd_coeff_ps_sqrt_km", cfg.link.fiber.pmd_coeff_ps_sqrt_km},
               {"wavelength_nm", cfg.link.fiber.wavelength_nm},
               {"edfa_gain_db", cfg.link.amp.gain_db},
               {"edfa_noise_figure_db", cfg.link.amp.noise_figure_db},
               {"forward_step_km", cfg.link.forward_step_km},
               {"ase_enabled", cfg.link.ase_enabled},
               {"pmd_enabled", cfg.link.pmd_enabled},
               {"rng_seed", cfg.link.rng_seed}};
  j["equalizers"] = nlohmann::json::array();
  for (const auto& e : cfg.equalizers) {
    nlohmann::json je = {{"kind", to_string(e.kind)},
                         {"steps_per_span", e.steps_per_span}};
    if (!e.id.empty()) je["id"] = e.id;
    if (e.phi) je["phi"] = *e.phi;
    j["equalizers"].push_back(je);
  }
  j["power_grid_dbm"] = cfg.power_grid_dbm;
  j["seeds"] = cfg.seeds;
  j["n_symbols"] = cfg.n_symbols;
  j["target_subcarriers"] = cfg.target_subcarriers;
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config: parse error in '" + path +
                                "': " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config: '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Sweep execution
// ---------------------------------------------------------------------------

struct SweepRow {
  std::string equalizer;
  double power_dbm = 0.0;
  std::uint64_t seed = 0;
  int subcarrier = 0;
  bool failed = false;
  std::string error;
  BerReport report;
  std::uint64_t real_mult_count = 0;
  double wall_time_s = 0.0;
  double phi_used = 1.0;
  bool error_propagation_flag = false;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::map<std::pair<std::size_t, std::size_t>, std::uint64_t> field_hashes;
};

namespace detail {

inline std::uint64_t row_real_mults(const EqualizerEntry& eq, int n_spans) {
  ComplexityQuery q;
  q.n_spans = n_spans;
  q.fft_size = 1024;
  q.steps_per_span = eq.steps_per_span;
  switch (eq.kind) {
    case SweepEqKind::EDC: q.kind = ComplexityKind::EDC; break;
    case SweepEqKind::DBP: q.kind = ComplexityKind::DBP; break;
    case SweepEqKind::TF_DBP: q.kind = ComplexityKind::TF_DBP; break;
    case SweepEqKind::VNLE: q.kind = ComplexityKind::VNLE; break;
    case SweepEqKind::INIC_DBP: q.kind = ComplexityKind::INIC_DBP; break;
    case SweepEqKind::INIC_VS: q.kind = ComplexityKind::INIC_VS; break;
    case SweepEqKind::ILIC: q.kind = ComplexityKind::ILIC; break;
    case SweepEqKind::PERTURBATION:
    case SweepEqKind::PCTW:
      return 0;  // no closed-form count in scope
  }
  return real_mults(q);
}

inline RxChainOptions sweep_chain_options(std::size_t n_symbols) {
  RxChainOptions opts;
  opts.adaptive = true;
  opts.cma_train_symbols = 10000;
  opts.skip_symbols = 12288;
  opts.prefix_symbols = 1024;
  opts.pilot_symbols = 64;
  if (opts.skip_symbols >= n_symbols) opts.skip_symbols = n_symbols / 2;
  return opts;
}

}  // namespace detail

struct PctwOutcome {
  BerReport ber;
  double evm_db = 0.0;
};

/// Dedicated single-subcarrier PCTW run: conjugate-twin transmission with 50%
/// electronic dispersion pre-compensation, coherent twin combining at the
/// receiver. With twin=false the same machinery transmits x only (the
/// single-polarization baseline). PMD must be disabled (the experiment has no
/// butterfly stage in front of the combiner).
inline PctwOutcome run_pctw_experiment(const SuperchannelConfig& sc_in,
                                       ModKind mod, const LinkConfig& link,
                                       double power_dbm, std::uint64_t seed,
                                       std::size_t n_symbols, bool twin,
                                       std::uint64_t realization_tag = 0) {
  if (link.pmd_enabled)
    throw std::invalid_argument("pctw experiment requires pmd_enabled=false");
  SuperchannelConfig sc = sc_in;
  sc.subcarrier_count = 1;
  sc.validate();
  const ModulationFormat& fmt = ModulationFormat::get(mod);

  const std::size_t n_bits = n_symbols * fmt.bits_per_symbol;
  const auto sym_x =
      map_symbols(generate_prbs(derive_seed(seed, 0x9c7c), n_bits), fmt);
  std::vector<cplx> sym_y(sym_x.size(), cplx(0, 0));
  if (twin) sym_y = pctw_encode(sym_x).second;

  DualPolSignal tx = build_subcarrier_signal(sym_x, sym_y, sc, 1);
  tx = apply_cd(tx, link.fiber, -0.5 * link.total_length_km());
  DualPolSignal rx = propagate_link(tx, link, power_dbm, 1, realization_tag);
  rx = apply_cd(rx, link.fiber, -0.5 * link.total_length_km());

  DualPolSignal d = demux_subcarrier(rx, 1, sc);
  std::vector<cplx> rx_x = detail::downsample2(d.x);
  std::vector<cplx> rx_y = detail::downsample2(d.y);
  const std::size_t prefix = 1024;
  detail::scalar_align_prefix(rx_x, sym_x, prefix);
  if (twin) detail::scalar_align_prefix(rx_y, sym_y, prefix);

  std::vector<cplx> combined = twin ? pctw_combine(rx_x, rx_y) : rx_x;
  const std::size_t skip = std::min<std::size_t>(prefix, n_symbols / 2);
  std::vector<cplx> rx_cnt(combined.begin() + skip, combined.end());
  std::vector<cplx> tx_cnt(sym_x.begin() + skip, sym_x.end());
  PctwOutcome out;
  out.ber = count_ber(decide(tx_cnt, fmt), decide(rx_cnt, fmt), fmt.bits_per_symbol);
  out.evm_db = evm_db(rx_cnt, tx_cnt);
  return out;
}

namespace detail {

inline void evaluate_equalizer_on_cell(
    const ExperimentConfig& cfg, const EqualizerEntry& eq,
    const DualPolSignal& rx, const TxRealization& tx, const LinkConfig& link,
    double power_dbm, std::uint64_t seed, std::size_t power_idx,
    bool collect_timing, std::vector<SweepRow>& rows_out) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<SweepRow> local;
  const RxChainOptions opts = sweep_chain_options(cfg.n_symbols);

  auto make_row = [&](int m) {
    SweepRow row;
    row.equalizer = eq.display_id();
    row.power_dbm = power_dbm;
    row.seed = seed;
    row.subcarrier = m;
    row.real_mult_count = row_real_mults(eq, link.n_spans);
    return row;
  };

  EqualizerSpec spec;
  spec.steps_per_span = eq.steps_per_span;
  spec.phi = eq.phi;
  spec.link = link;

  switch (eq.kind) {
    case SweepEqKind::EDC:
    case SweepEqKind::DBP:
    case SweepEqKind::VNLE:
    case SweepEqKind::PERTURBATION: {
      spec.kind = eq.kind == SweepEqKind::EDC          ? EqKind::EDC
                  : eq.kind == SweepEqKind::DBP        ? EqKind::DBP
                  : eq.kind == SweepEqKind::VNLE       ? EqKind::VNLE
                                                       : EqKind::PERTURBATION;
      for (int m : cfg.target_subcarriers) {
        SweepRow row = make_row(m);
        auto eval = equalize_and_detect(rx, m, spec, cfg.superchannel, tx.grid, opts);
        row.report = eval.chain.ber;
        row.phi_used = eval.phi_used;
        local.push_back(std::move(row));
      }
      break;
    }
    case SweepEqKind::TF_DBP: {
      spec.kind = EqKind::TF_DBP;
      const DualPolSignal compensated = tf_dbp(rx, spec);
      const ModulationFormat& fmt = ModulationFormat::get(cfg.modulation);
      for (int m : cfg.target_subcarriers) {
        SweepRow row = make_row(m);
        const auto& truth = tx.grid.subcarriers.at(m - 1);
        DualPolSignal d = demux_subcarrier(compensated, m, cfg.superchannel);
        ChainResult r = run_rx_chain(d, truth.x, truth.y, fmt, opts);
        row.report = r.ber;
        local.push_back(std::move(row));
      }
      break;
    }
    case SweepEqKind::INIC_DBP:
    case SweepEqKind::INIC_VS:
    case SweepEqKind::ILIC: {
      InicSpec ispec;
      ispec.inner = spec;
      if (eq.kind == SweepEqKind::INIC_DBP) {
        ispec.inner.kind = EqKind::DBP;
        ispec.regen = RegenModel::NonlinearForward;
      } else if (eq.kind == SweepEqKind::INIC_VS) {
        ispec.inner.kind = EqKind::VNLE;
        ispec.regen = RegenModel::NonlinearForward;
      } else {
        ispec.inner.kind = EqKind::EDC;
        ispec.regen = RegenModel::LinearForward;
      }
      for (int m : cfg.target_subcarriers) {
        SweepRow row = make_row(m);
        ispec.target = m;
        InicResult r = inic_run(rx, ispec, cfg.superchannel, tx.grid, power_dbm, opts);
        row.report = r.step3.ber;
        row.phi_used = r.phi_used;
        row.error_propagation_flag = r.error_propagation_flag;
        local.push_back(std::move(row));
      }
      break;
    }
    case SweepEqKind::PCTW: {
      SweepRow row = make_row(1);
      PctwOutcome out = run_pctw_experiment(
          cfg.superchannel, cfg.modulation, link, power_dbm, seed, cfg.n_symbols,
          /*twin=*/true, static_cast<std::uint64_t>(power_idx));
      row.report = out.ber;
      local.push_back(std::move(row));
      break;
    }
  }

  if (collect_timing) {
    const double dt =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    for (auto& row : local) row.wall_time_s = dt;
  }
  for (auto& row : local) rows_out.push_back(std::move(row));
}

}  // namespace detail

/// Runs the configured power x seed grid. Each (power, seed) cell propagates
/// one channel realization and evaluates every equalizer against the same
/// stored received field. Cells may run in parallel (n_threads, capped by the
/// NLC_LAB_THREADS environment variable at the CLI level); row order and
/// content are independent of the schedule. A failing equalizer yields an
/// error row and the sweep continues.
inline SweepResult run_sweep(const ExperimentConfig& cfg, int n_threads = 1,
                             bool collect_timing = false) {
  cfg.validate();
  struct Cell {
    std::size_t power_idx;
    std::size_t seed_idx;
  };
  std::vector<Cell> cells;
  for (std::size_t p = 0; p < cfg.power_grid_dbm.size(); ++p)
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) cells.push_back({p, s});

  std::vector<std::vector<SweepRow>> cell_rows(cells.size());
  std::vector<std::uint64_t> cell_hashes(cells.size(), 0);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= cells.size()) return;
      const Cell cell = cells[idx];
      const double power_dbm = cfg.power_grid_dbm[cell.power_idx];
      const std::uint64_t seed = cfg.seeds[cell.seed_idx];

      LinkConfig link = cfg.link;
      link.rng_seed = derive_seed(cfg.link.rng_seed, seed);

      std::vector<SweepRow>& rows = cell_rows[idx];
      const bool has_non_pctw = std::any_of(
          cfg.equalizers.begin(), cfg.equalizers.end(),
          [](const EqualizerEntry& e) { return e.kind != SweepEqKind::PCTW; });

      TxRealization tx;
      DualPolSignal rx;
      bool cell_ok = true;
      std::string cell_error;
      if (has_non_pctw) {
        try {
          tx = make_tx_realization(cfg.superchannel, cfg.modulation,
                                   cfg.n_symbols, seed);
          rx = propagate_link(tx.total, link, power_dbm,
                              cfg.superchannel.subcarrier_count,
                              static_cast<std::uint64_t>(cell.power_idx));
          cell_hashes[idx] = waveform_hash(rx);
        } catch (const std::exception& e) {
          cell_ok = false;
          cell_error = e.what();
        }
      }

      for (const auto& eq : cfg.equalizers) {
        const bool needs_field = eq.kind != SweepEqKind::PCTW;
        if (needs_field && !cell_ok) {
          for (int m : cfg.target_subcarriers) {
            SweepRow row;
            row.equalizer = eq.display_id();
            row.power_dbm = power_dbm;
            row.seed = seed;
            row.subcarrier = m;
            row.failed = true;
            row.error = cell_error;
            row.real_mult_count = detail::row_real_mults(eq, link.n_spans);
            rows.push_back(std::move(row));
          }
          continue;
        }
        try {
          detail::evaluate_equalizer_on_cell(cfg, eq, rx, tx, link, power_dbm,
                                             seed, cell.power_idx,
                                             collect_timing, rows);
        } catch (const std::exception& e) {
          const std::vector<int> marks = eq.kind == SweepEqKind::PCTW
                                             ? std::vector<int>{1}
                                             : cfg.target_subcarriers;
          for (int m : marks) {
            SweepRow row;
            row.equalizer = eq.display_id();
            row.power_dbm = power_dbm;
            row.seed = seed;
            row.subcarrier = m;
            row.failed = true;
            row.error = e.what();
            row.real_mult_count = detail::row_real_mults(eq, link.n_spans);
            rows.push_back(std::move(row));
          }
        }
      }
    }
  };

  const int threads = std::max(1, n_threads);
  if (threads == 1 || cells.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Deterministic merge: equalizer (config order), power, seed, subcarrier.
  SweepResult result;
  for (std::size_t c = 0; c < cells.size(); ++c)
    result.field_hashes[{cells[c].power_idx, cells[c].seed_idx}] = cell_hashes[c];
  for (const auto& eq : cfg.equalizers) {
    const std::string id = eq.display_id();
    for (std::size_t p = 0; p < cfg.power_grid_dbm.size(); ++p)
      for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
        const std::size_t idx = p * cfg.seeds.size() + s;
        for (const auto& row : cell_rows[idx])
          if (row.equalizer == id) result.rows.push_back(row);
      }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Result emission and summaries
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_sig6(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace detail

inline std::string results_csv(const SweepResult& result) {
  std::ostringstream out;
  out << "equalizer,power_dbm,seed,subcarrier,ber,q_db,real_mults,wall_time_s\n";
  for (const auto& row : result.rows) {
    out << row.equalizer << ',' << detail::format_sig6(row.power_dbm) << ','
        << row.seed << ',' << row.subcarrier << ',';
    if (row.failed) {
      out << "nan,nan";
    } else {
      out << detail::format_sig6(row.report.ber) << ','
          << detail::format_sig6(row.report.q_db);
    }
    out << ',' << row.real_mult_count << ','
        << detail::format_sig6(row.wall_time_s) << '\n';
  }
  return out.str();
}

/// Pooled Q at one (equalizer, power): total errors over total bits across
/// seeds and target subcarriers, then the Q mapping.
inline double pooled_q_db(const SweepResult& result, const std::string& equalizer,
                          double power_dbm) {
  std::size_t errors = 0, bits = 0;
  for (const auto& row : result.rows) {
    if (row.failed || row.equalizer != equalizer || row.power_dbm != power_dbm)
      continue;
    errors += row.report.bit_errors;
    bits += row.report.bits_total;
  }
  if (bits == 0) return std::numeric_limits<double>::quiet_NaN();
  return BerReport::from_counts(errors, bits).q_db;
}

struct EqualizerSummary {
  std::string equalizer;
  double optimum_power_dbm = 0.0;
  double peak_q_db = 0.0;
};

inline std::vector<EqualizerSummary> summarize(const SweepResult& result,
                                               const ExperimentConfig& cfg) {
  std::vector<EqualizerSummary> out;
  for (const auto& eq : cfg.equalizers) {
    EqualizerSummary s;
    s.equalizer = eq.display_id();
    s.peak_q_db = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (double p : cfg.power_grid_dbm) {
      const double q = pooled_q_db(result, s.equalizer, p);
      if (std::isnan(q)) continue;
      if (!any || q > s.peak_q_db) {
        s.peak_q_db = q;
        s.optimum_power_dbm = p;
        any = true;
      }
    }
    if (any) out.push_back(std::move(s));
  }
  return out;
}

inline std::string summary_csv(const SweepResult& result,
                               const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "equalizer,optimum_power_dbm,peak_q_db\n";
  for (const auto& s : summarize(result, cfg))
    out << s.equalizer << ',' << detail::format_sig6(s.optimum_power_dbm) << ','
        << detail::format_sig6(s.peak_q_db) << '\n';
  return out.str();
}

/// Power at which the pooled Q curve crosses q_level on its falling
/// (high-power) side, linearly interpolated; NaN when it never crosses.
inline double threshold_crossing_dbm(const SweepResult& result,
                                     const ExperimentConfig& cfg,
                                     const std::string& equalizer,
                                     double q_level) {
  double crossing = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 1; i < cfg.power_grid_dbm.size(); ++i) {
    const double p0 = cfg.power_grid_dbm[i - 1];
    const double p1 = cfg.power_grid_dbm[i];
    const double q0 = pooled_q_db(result, equalizer, p0);
    const double q1 = pooled_q_db(result, equalizer, p1);
    if (std::isnan(q0) || std::isnan(q1)) continue;
    if (q0 >= q_level && q1 < q_level) {
      const double t = (q0 - q_level) / (q0 - q1);
      crossing = p0 + t * (p1 - p0);
    }
  }
  return crossing;
}

inline void emit_results(const SweepResult& result, const ExperimentConfig& cfg,
                         const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  {
    std::ofstream f(fs::path(out_dir) / "results.csv", std::ios::binary);
    if (!f) throw std::runtime_error("emit_results: cannot write results.csv");
    f << results_csv(result);
  }
  {
    std::ofstream f(fs::path(out_dir) / "summary.csv", std::ios::binary);
    if (!f) throw std::runtime_error("emit_results: cannot write summary.csv");
    f << summary_csv(result, cfg);
  }
}

}  // namespace nlclab
