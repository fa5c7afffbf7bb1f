#include "traceiht/experiments.hpp"
#include "traceiht/sparse_iht.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumerical = 3, kIo = 4 };

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<long long> workers;
  std::optional<long long> replicates;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON experiment config")->required();
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--workers", o.workers, "worker threads");
  cmd->add_option("--replicates", o.replicates, "replicates per grid point");
}

int simulate(traceiht::ExperimentMode mode, const Overrides& o) {
  traceiht::ExperimentConfig config = traceiht::load_config(o.config, mode);
  if (o.seed) config.seed = *o.seed;
  if (o.out) config.output_dir = *o.out;
  if (o.workers) config.workers = *o.workers;
  if (o.replicates) config.replicates = *o.replicates;
  if (config.output_dir.empty()) throw traceiht::ConfigError("no output directory (use --out)");
  config.validate();
  const auto result = traceiht::run_experiment(config);
  std::cout << "wrote " << result.rows.size() << " replicate rows and "
            << result.aggregates.size() << " aggregate rows to " << config.output_dir << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank trace regression experiments"};
  app.require_subcommand(1);

  Overrides matrix, quantum, sparse;
  auto* sm = app.add_subcommand("simulate-matrix", "Gaussian or basis-design trace regression");
  add_overrides(sm, matrix);
  auto* sq = app.add_subcommand("simulate-quantum", "Pauli-measurement tomography");
  add_overrides(sq, quantum);
  auto* ss = app.add_subcommand("simulate-sparse", "sparse linear regression");
  add_overrides(ss, sparse);
  std::string report_dir;
  auto* rep = app.add_subcommand("report", "re-aggregate replicates.csv into aggregates.csv");
  rep->add_option("--out", report_dir, "directory holding replicates.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (sm->parsed()) return simulate(traceiht::ExperimentMode::matrix_sim, matrix);
    if (sq->parsed()) return simulate(traceiht::ExperimentMode::quantum, quantum);
    if (ss->parsed()) return simulate(traceiht::ExperimentMode::sparse, sparse);
    const auto rows = traceiht::report(report_dir);
    std::cout << "wrote " << rows.size() << " aggregate rows to " << report_dir << '\n';
    return kOk;
  } catch (const traceiht::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const traceiht::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    // NumericalError, AssumptionViolation, InfeasibleProgram and friends.
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  }
}
