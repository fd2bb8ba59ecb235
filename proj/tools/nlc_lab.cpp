// Command-line front end: power-sweep experiments, complexity tables and
// config validation for the superchannel NLC laboratory.

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "nlclab/experiment.hpp"

namespace {

int effective_threads(int requested) {
  int n = requested;
  if (const char* env = std::getenv("NLC_LAB_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1 && (n <= 0 || cap < n)) n = cap;
    } catch (...) {
      std::cerr << "warning: ignoring malformed NLC_LAB_THREADS\n";
    }
  }
  if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, n);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void print_complexity_table(std::uint64_t nf, int spans) {
  using nlclab::ComplexityKind;
  using nlclab::ComplexityQuery;
  struct Row {
    std::string label;
    ComplexityKind kind;
    int steps;
  };
  const std::vector<Row> entries = {
      {"EDC", ComplexityKind::EDC, 1},
      {"VNLE", ComplexityKind::VNLE, 1},
      {"DBP-1", ComplexityKind::DBP, 1},
      {"DBP-64", ComplexityKind::DBP, 64},
      {"ILIC", ComplexityKind::ILIC, 1},
      {"INIC-VS", ComplexityKind::INIC_VS, 1},
      {"INIC-DBP", ComplexityKind::INIC_DBP, 1},
      {"TF-DBP-4", ComplexityKind::TF_DBP, 4},
      {"TF-DBP-64", ComplexityKind::TF_DBP, 64},
  };
  std::cout << "equalizer,real_mults (N_f=" << nf << ", N=" << spans << ")\n";
  for (const auto& e : entries) {
    ComplexityQuery q;
    q.kind = e.kind;
    q.fft_size = nf;
    q.n_spans = spans;
    q.steps_per_span = e.steps;
    std::cout << e.label << "," << nlclab::real_mults(q) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nyquist superchannel nonlinearity-compensation laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string equalizer_filter;
  long long seed_override = -1;
  bool timings = false;
  int threads = 0;

  CLI::App* run = app.add_subcommand("run", "execute a power sweep");
  run->add_option("--config", config_path, "experiment config file")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--equalizers", equalizer_filter,
                  "comma-separated equalizer ids to keep");
  run->add_option("--seed", seed_override, "replace the configured seed list");
  run->add_flag("--timings", timings,
                "record wall-clock times (breaks byte-reproducibility)");
  run->add_option("--threads", threads, "parallel sweep cells (default: cores)");

  std::uint64_t nf = 1024;
  int spans = 10;
  CLI::App* cx = app.add_subcommand("complexity", "print the real-multiplication table");
  cx->add_option("--nf", nf, "FFT size");
  cx->add_option("--spans", spans, "number of spans");

  std::string validate_path;
  CLI::App* val = app.add_subcommand("validate", "check a config file");
  val->add_option("--config", validate_path, "experiment config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cx->parsed()) {
      print_complexity_table(nf, spans);
      return 0;
    }
    if (val->parsed()) {
      nlclab::load_config(validate_path);
      std::cout << "config ok\n";
      return 0;
    }

    nlclab::ExperimentConfig cfg;
    try {
      cfg = nlclab::load_config(config_path);
      if (!equalizer_filter.empty()) {
        const auto keep = split_csv(equalizer_filter);
        std::vector<nlclab::EqualizerEntry> filtered;
        for (const auto& eq : cfg.equalizers)
          for (const auto& k : keep)
            if (eq.display_id() == k) filtered.push_back(eq);
        if (filtered.empty())
          throw std::invalid_argument("--equalizers matched nothing");
        cfg.equalizers = std::move(filtered);
      }
      if (seed_override >= 0)
        cfg.seeds = {static_cast<std::uint64_t>(seed_override)};
      cfg.validate();
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return 1;
    }

    const int n_threads = effective_threads(threads);
    nlclab::SweepResult result = nlclab::run_sweep(cfg, n_threads, timings);
    std::size_t failed = 0;
    for (const auto& row : result.rows)
      if (row.failed) {
        ++failed;
        std::cerr << "error row: " << row.equalizer << " @ " << row.power_dbm
                  << " dBm seed " << row.seed << ": " << row.error << "\n";
      } else if (row.error_propagation_flag) {
        std::cerr << "note: " << row.equalizer << " @ " << row.power_dbm
                  << " dBm seed " << row.seed
                  << ": step-1 BER > 0.2, DFE error propagation likely\n";
      }
    for (const auto& [cell, hash] : result.field_hashes)
      std::cerr << "cell power_idx=" << cell.first << " seed_idx=" << cell.second
                << " field_hash=" << std::hex << hash << std::dec << "\n";
    nlclab::emit_results(result, cfg, out_dir);
    std::cout << "wrote " << out_dir << "/results.csv (" << result.rows.size()
              << " rows, " << failed << " failed)\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "simulation error: " << e.what() << "\n";
    return 2;
  }
}
