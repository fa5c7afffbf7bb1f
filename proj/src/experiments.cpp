#include "traceiht/experiments.hpp"

#include "traceiht/quantum.hpp"
#include "traceiht/random.hpp"
#include "traceiht/sparse_iht.hpp"
#include "traceiht/trace_model.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace traceiht {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stream purposes under derive_seed(master, {cell, replicate, purpose}).
enum Purpose : std::uint64_t {
  kTheta = 0,
  kDesign = 1,
  kNoise = 2,
  kSettings = 3,
  kShots = 4,
};

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// ---------------------------------------------------------------- config

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T get_as(const json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::vector<Index> positive_list(const json& value, const std::string& key) {
  if (!value.is_array() || value.empty()) {
    throw ConfigError("config key '" + key + "' must be a non-empty list");
  }
  std::vector<Index> out;
  for (const auto& item : value) {
    if (!item.is_number_integer()) throw ConfigError("config key '" + key + "' must hold integers");
    const auto x = item.get<long long>();
    if (x <= 0) throw ConfigError("config key '" + key + "' must hold positive values");
    out.push_back(static_cast<Index>(x));
  }
  return out;
}

void parse_iht(const json& obj, IhtConfig& iht) {
  check_keys(obj, {"rho", "e", "max_iters", "delta", "upsilon", "upsilon_quantile", "start"},
             "iht");
  if (obj.contains("rho")) iht.rho = get_as<double>(obj["rho"], "iht.rho");
  if (obj.contains("e")) iht.e = get_as<double>(obj["e"], "iht.e");
  if (obj.contains("delta")) iht.delta = get_as<double>(obj["delta"], "iht.delta");
  if (obj.contains("max_iters")) iht.max_iters = get_as<Index>(obj["max_iters"], "iht.max_iters");
  if (obj.contains("upsilon")) {
    const json& u = obj["upsilon"];
    if (u.is_number()) {
      iht.upsilon = FixedUpsilon{u.get<double>()};
    } else if (u.is_string() && u.get<std::string>() == "data_driven") {
      iht.upsilon = DataDrivenUpsilon{};
    } else {
      throw ConfigError("iht.upsilon must be a number or \"data_driven\"");
    }
  }
  if (obj.contains("upsilon_quantile")) {
    if (!std::holds_alternative<DataDrivenUpsilon>(iht.upsilon)) {
      throw ConfigError("iht.upsilon_quantile only applies to the data-driven upsilon");
    }
    iht.upsilon = DataDrivenUpsilon{get_as<double>(obj["upsilon_quantile"], "iht.upsilon_quantile")};
  }
  if (obj.contains("start")) {
    const json& s = obj["start"];
    if (s.is_number()) {
      iht.start = FixedStart{s.get<double>()};
    } else if (s.is_string() && s.get<std::string>() == "data_driven") {
      iht.start = DataDrivenStart{};
    } else {
      throw ConfigError("iht.start must be a number or \"data_driven\"");
    }
  }
}

void parse_ci(const json& obj, CiOptions& ci) {
  check_keys(obj, {"level", "convention"}, "ci");
  if (obj.contains("level")) ci.level = get_as<double>(obj["level"], "ci.level");
  if (obj.contains("convention")) {
    const auto c = get_as<std::string>(obj["convention"], "ci.convention");
    if (c == "paper_literal") {
      ci.convention = QuantileConvention::paper_literal;
    } else if (c == "two_sided") {
      ci.convention = QuantileConvention::two_sided;
    } else {
      throw ConfigError("ci.convention must be paper_literal or two_sided");
    }
  }
}

void parse_sparse_estimator(const json& obj, SparseEstimatorConfig& s) {
  check_keys(obj, {"strategy", "mu", "max_sparsity", "delta", "start", "upsilon", "level"},
             "sparse_estimator");
  if (obj.contains("strategy")) s.strategy = get_as<std::string>(obj["strategy"], "strategy");
  if (obj.contains("mu")) s.mu = get_as<double>(obj["mu"], "mu");
  if (obj.contains("max_sparsity")) s.max_sparsity = get_as<Index>(obj["max_sparsity"], "max_sparsity");
  if (obj.contains("delta")) s.delta = get_as<double>(obj["delta"], "delta");
  if (obj.contains("start")) s.start = get_as<double>(obj["start"], "start");
  if (obj.contains("upsilon")) s.upsilon = get_as<double>(obj["upsilon"], "upsilon");
  if (obj.contains("level")) s.level = get_as<double>(obj["level"], "level");
}

// ---------------------------------------------------------------- running

struct Task {
  Index cell;
  Index replicate;
};

// Runs fn over all tasks with up to `workers` threads; results land in task
// order, so output never depends on scheduling.
std::vector<MetricRow> run_tasks(const std::vector<Task>& tasks, Index workers,
                                 const std::function<MetricRow(const Task&)>& fn) {
  std::vector<MetricRow> rows(tasks.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      {
        std::lock_guard lock(failure_mutex);
        if (failure) return;
      }
      try {
        const auto start = std::chrono::steady_clock::now();
        MetricRow row = fn(tasks[i]);
        row.runtime_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - start)
                             .count();
        rows[i] = std::move(row);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const auto count = static_cast<std::size_t>(std::max<Index>(1, workers));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return rows;
}

void prepare_output_dir(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
  const fs::path probe = fs::path(dir) / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw IoError("output directory is not writable: " + dir);
  }
  fs::remove(probe, ec);
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void finish_output(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

void write_timings_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "# schema=1\ncell,replicate,runtime_ms\n";
  for (const auto& r : rows) {
    out << r.cell << ',' << r.replicate << ',' << format_double(r.runtime_ms) << '\n';
  }
}

void write_outputs(const ExperimentConfig& config, const ExperimentOutput& result) {
  if (config.output_dir.empty()) return;
  const fs::path dir(config.output_dir);
  const std::pair<const char*, std::function<void(std::ostream&)>> files[] = {
      {"replicates.csv", [&](std::ostream& o) { write_replicates_csv(o, result.rows); }},
      {"aggregates.csv", [&](std::ostream& o) { write_aggregates_csv(o, result.aggregates); }},
      {"timings.csv", [&](std::ostream& o) { write_timings_csv(o, result.rows); }},
  };
  for (const auto& [name, writer] : files) {
    auto out = open_output(dir / name);
    writer(out);
    finish_output(out, dir / name);
  }
}

std::vector<Task> make_tasks(Index cells, Index replicates) {
  std::vector<Task> tasks;
  for (Index c = 0; c < cells; ++c) {
    for (Index r = 0; r < replicates; ++r) tasks.push_back({c, r});
  }
  return tasks;
}

fs::path detail_path(const ExperimentConfig& config, const std::string& stem, const Task& t) {
  const fs::path dir = fs::path(config.output_dir) / "details";
  std::error_code ec;
  fs::create_directories(dir, ec);
  return dir / (stem + "_c" + std::to_string(t.cell) + "_r" + std::to_string(t.replicate) + ".csv");
}

void append_matrix_metrics(NamedValues& metrics, const CMatrix& estimate, const CMatrix& theta) {
  const MatrixMetrics m = compute_metrics(estimate, theta);
  metrics.emplace_back("frobenius_sq", m.frobenius_sq);
  metrics.emplace_back("operator", m.operator_norm);
  metrics.emplace_back("entrywise_inf", m.entrywise_inf);
  metrics.emplace_back("schatten1", m.schatten1);
}

void append_iht_metrics(NamedValues& metrics, const IhtResult& fit) {
  const Index rank = fit.state.trace.empty() ? 0 : fit.state.trace.back().rank;
  metrics.emplace_back("rank_hat", static_cast<double>(rank));
  metrics.emplace_back("r_hat", static_cast<double>(fit.iterations()));
  metrics.emplace_back("converged", fit.converged ? 1.0 : 0.0);
  metrics.emplace_back("within_bound",
                       static_cast<double>(fit.iterations()) <= fit.iteration_bound ? 1.0 : 0.0);
  metrics.emplace_back("sigma_hat", fit.final_sigma());
}

void append_inference_metrics(NamedValues& metrics, const ExperimentConfig& config,
                              const Task& task, const IhtResult& fit, const DesignBatch& design,
                              const Observations& obs, const CMatrix& theta) {
  if (!config.inference) return;
  const CMatrix debiased = debias(fit.estimate, design, obs);
  const double sigma = empirical_sigma(design, obs, fit.estimate);
  InferenceReport report = confidence_intervals(debiased, design, sigma, config.ci);
  report.coverage = coverage_report(theta, report);
  metrics.emplace_back("coverage", *report.coverage);
  metrics.emplace_back("mean_ci_length", report.mean_ci_length);
  if (config.export_details) {
    const fs::path path = detail_path(config, "intervals", task);
    auto out = open_output(path);
    write_inference_csv(out, report, &theta);
    finish_output(out, path);
  }
}

void export_trace(const ExperimentConfig& config, const Task& task, const IhtResult& fit) {
  if (!config.export_details) return;
  const fs::path path = detail_path(config, "trace", task);
  auto out = open_output(path);
  write_trace_csv(out, fit.state);
  finish_output(out, path);
}

ExperimentOutput finish(const ExperimentConfig& config, std::vector<MetricRow> rows) {
  ExperimentOutput result;
  result.rows = std::move(rows);
  result.aggregates = aggregate(result.rows);
  write_outputs(config, result);
  return result;
}

void require_mode(const ExperimentConfig& config, ExperimentMode mode) {
  if (config.mode != mode) {
    throw ConfigError("config mode is " + mode_name(config.mode) + ", expected " +
                      mode_name(mode));
  }
}

}  // namespace

std::string mode_name(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::matrix_sim: return "matrix_sim";
    case ExperimentMode::quantum: return "quantum";
    case ExperimentMode::sparse: return "sparse";
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  if (replicates < 1) throw ConfigError("replicates must be positive");
  if (workers < 1) throw ConfigError("workers must be positive");
  try {
    iht.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(ci.level > 0.0 && ci.level < 1.0)) throw ConfigError("ci.level must lie in (0,1)");
  switch (mode) {
    case ExperimentMode::matrix_sim:
      if (matrix.design != "gaussian" && matrix.design != "orthonormal_basis") {
        throw ConfigError("design must be gaussian or orthonormal_basis");
      }
      if (!(matrix.noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
      for (Index d : matrix.d) {
        for (Index k : matrix.k) {
          if (k > d) throw ConfigError("grid has k > d");
        }
      }
      break;
    case ExperimentMode::quantum:
      for (Index m : quantum.m) {
        if (m > 10) throw ConfigError("quantum grid supports at most 10 qubits");
        for (Index k : quantum.k) {
          if (k > (Index{1} << m)) throw ConfigError("grid has k > d");
        }
      }
      break;
    case ExperimentMode::sparse:
      if (sparse.design != "gaussian" && sparse.design != "orthogonal") {
        throw ConfigError("design must be gaussian or orthogonal");
      }
      if (!(sparse.noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
      if (sparse_estimator.strategy != "identity" && sparse_estimator.strategy != "row_program") {
        throw ConfigError("sparse_estimator.strategy must be identity or row_program");
      }
      if (!(sparse_estimator.level > 0.0 && sparse_estimator.level < 1.0)) {
        throw ConfigError("sparse_estimator.level must lie in (0,1)");
      }
      for (Index p : sparse.p) {
        for (Index k : sparse.k) {
          if (k > p) throw ConfigError("grid has k > p");
        }
        for (Index n : sparse.n) {
          if (sparse.design == "orthogonal" && n < p) {
            throw ConfigError("orthogonal design needs n >= p");
          }
        }
      }
      break;
  }
}

ExperimentConfig parse_config(const std::string& json_text, ExperimentMode mode) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  check_keys(doc, {"mode", "grid", "design", "noise_std", "replicates", "seed", "iht", "inference",
                   "ci", "sparse_estimator", "output_dir", "workers", "export_details"},
             "config");
  ExperimentConfig config;
  config.mode = mode;
  if (doc.contains("mode") && get_as<std::string>(doc["mode"], "mode") != mode_name(mode)) {
    throw ConfigError("config mode does not match the subcommand (expected " + mode_name(mode) +
                      ")");
  }
  if (doc.contains("grid")) {
    const json& g = doc["grid"];
    switch (mode) {
      case ExperimentMode::matrix_sim:
        check_keys(g, {"d", "k", "n"}, "grid");
        if (g.contains("d")) config.matrix.d = positive_list(g["d"], "grid.d");
        if (g.contains("k")) config.matrix.k = positive_list(g["k"], "grid.k");
        if (g.contains("n")) config.matrix.n = positive_list(g["n"], "grid.n");
        break;
      case ExperimentMode::quantum:
        check_keys(g, {"m", "k", "alpha", "t_factor"}, "grid");
        if (g.contains("m")) config.quantum.m = positive_list(g["m"], "grid.m");
        if (g.contains("k")) config.quantum.k = positive_list(g["k"], "grid.k");
        if (g.contains("alpha")) config.quantum.alpha = positive_list(g["alpha"], "grid.alpha");
        if (g.contains("t_factor")) {
          config.quantum.t_factor = positive_list(g["t_factor"], "grid.t_factor");
        }
        break;
      case ExperimentMode::sparse:
        check_keys(g, {"p", "k", "n"}, "grid");
        if (g.contains("p")) config.sparse.p = positive_list(g["p"], "grid.p");
        if (g.contains("k")) config.sparse.k = positive_list(g["k"], "grid.k");
        if (g.contains("n")) config.sparse.n = positive_list(g["n"], "grid.n");
        break;
    }
  }
  if (doc.contains("design")) {
    const auto design = get_as<std::string>(doc["design"], "design");
    if (mode == ExperimentMode::sparse) {
      config.sparse.design = design;
    } else {
      config.matrix.design = design;
    }
  }
  if (doc.contains("noise_std")) {
    const auto s = get_as<double>(doc["noise_std"], "noise_std");
    config.matrix.noise_std = s;
    config.sparse.noise_std = s;
  }
  if (doc.contains("replicates")) config.replicates = get_as<Index>(doc["replicates"], "replicates");
  if (doc.contains("seed")) config.seed = get_as<std::uint64_t>(doc["seed"], "seed");
  if (doc.contains("inference")) config.inference = get_as<bool>(doc["inference"], "inference");
  if (doc.contains("output_dir")) config.output_dir = get_as<std::string>(doc["output_dir"], "output_dir");
  if (doc.contains("workers")) config.workers = get_as<Index>(doc["workers"], "workers");
  if (doc.contains("export_details")) {
    config.export_details = get_as<bool>(doc["export_details"], "export_details");
  }
  if (doc.contains("iht")) parse_iht(doc["iht"], config.iht);
  if (doc.contains("ci")) parse_ci(doc["ci"], config.ci);
  if (doc.contains("sparse_estimator")) {
    parse_sparse_estimator(doc["sparse_estimator"], config.sparse_estimator);
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::string& path, ExperimentMode mode) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), mode);
}

MatrixMetrics compute_metrics(const CMatrix& estimate, const CMatrix& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols()) {
    throw std::invalid_argument("compute_metrics: shape mismatch");
  }
  const CMatrix diff = estimate - truth;
  const RVector s = svd(diff).singular_values;
  MatrixMetrics m;
  m.frobenius_sq = diff.squaredNorm();
  m.operator_norm = s.size() ? s.maxCoeff() : 0.0;
  m.entrywise_inf = entrywise_inf_norm(diff);
  m.schatten1 = s.sum();
  return m;
}

ExperimentOutput run_matrix_experiment(const ExperimentConfig& config) {
  require_mode(config, ExperimentMode::matrix_sim);
  config.validate();
  prepare_output_dir(config.output_dir);

  struct Cell {
    Index d, k, n;
  };
  std::vector<Cell> cells;
  for (Index d : config.matrix.d) {
    for (Index k : config.matrix.k) {
      if (config.matrix.design == "orthonormal_basis") {
        cells.push_back({d, k, d * d});
        continue;
      }
      for (Index n : config.matrix.n) cells.push_back({d, k, n});
    }
  }
  // The basis design is deterministic, so build it once per dimension.
  std::map<Index, DesignBatch> basis;
  if (config.matrix.design == "orthonormal_basis") {
    for (Index d : config.matrix.d) basis.emplace(d, orthonormal_basis_design(d));
  }

  auto fn = [&](const Task& t) {
    const Cell& c = cells[static_cast<std::size_t>(t.cell)];
    const auto cell_id = static_cast<std::uint64_t>(t.cell);
    const auto rep_id = static_cast<std::uint64_t>(t.replicate);
    const CMatrix theta =
        gen_low_rank_theta(c.d, c.k, derive_seed(config.seed, {cell_id, rep_id, kTheta}));
    const DesignBatch design =
        config.matrix.design == "orthonormal_basis"
            ? basis.at(c.d)
            : gen_gaussian_design(c.n, c.d, derive_seed(config.seed, {cell_id, rep_id, kDesign}));
    const Observations obs = simulate_observations(
        design, theta, config.matrix.noise_std,
        derive_seed(config.seed, {cell_id, rep_id, kNoise}));
    const IhtResult fit = run_iht(design, obs, config.iht);

    MetricRow row;
    row.cell = t.cell;
    row.replicate = t.replicate;
    row.params = {{"d", static_cast<double>(c.d)},
                  {"k", static_cast<double>(c.k)},
                  {"n", static_cast<double>(c.n)}};
    append_matrix_metrics(row.metrics, fit.estimate, theta);
    row.metrics.emplace_back("relative_frobenius",
                             std::sqrt(row.metrics[0].second) / frobenius_norm(theta));
    append_iht_metrics(row.metrics, fit);
    append_inference_metrics(row.metrics, config, t, fit, design, obs, theta);
    export_trace(config, t, fit);
    return row;
  };
  return finish(config, run_tasks(make_tasks(static_cast<Index>(cells.size()), config.replicates),
                                  config.workers, fn));
}

ExperimentOutput run_quantum_experiment(const ExperimentConfig& config) {
  require_mode(config, ExperimentMode::quantum);
  config.validate();
  prepare_output_dir(config.output_dir);

  struct Cell {
    Index m, k, alpha, t_factor;
  };
  std::vector<Cell> cells;
  for (Index m : config.quantum.m) {
    for (Index k : config.quantum.k) {
      for (Index a : config.quantum.alpha) {
        for (Index tf : config.quantum.t_factor) cells.push_back({m, k, a, tf});
      }
    }
  }
  for (const Cell& c : cells) {
    const Index d = Index{1} << c.m;
    const Index settings = c.alpha * c.k * d;
    const double distinct = std::pow(3.0, static_cast<double>(c.m));
    if (static_cast<double>(settings) > distinct) {
      std::clog << "warning: N = " << settings << " settings exceeds the " << distinct
                << " distinct Pauli settings for m = " << c.m << "; settings will repeat\n";
    }
  }

  auto fn = [&](const Task& t) {
    const Cell& c = cells[static_cast<std::size_t>(t.cell)];
    const Index d = Index{1} << c.m;
    const Index settings_count = c.alpha * c.k * d;
    const Index reps = c.t_factor * d;
    const auto cell_id = static_cast<std::uint64_t>(t.cell);
    const auto rep_id = static_cast<std::uint64_t>(t.replicate);
    const CMatrix theta =
        gen_density_matrix(d, c.k, derive_seed(config.seed, {cell_id, rep_id, kTheta}));
    const std::vector<PauliSetting> settings = gen_random_settings(
        settings_count, c.m, derive_seed(config.seed, {cell_id, rep_id, kSettings}));
    const RandomStream shots(derive_seed(config.seed, {cell_id, rep_id, kShots}));
    std::vector<OutcomeBatch> batches;
    batches.reserve(settings.size());
    for (std::size_t s = 0; s < settings.size(); ++s) {
      batches.push_back(sample_outcomes(settings[s], theta, reps, shots.child_seed(s)));
    }
    const TomographyDataset data = build_rescaled_dataset(settings, batches);
    const IhtResult fit = run_iht(data.design, data.observations, config.iht);

    MetricRow row;
    row.cell = t.cell;
    row.replicate = t.replicate;
    row.params = {{"m", static_cast<double>(c.m)},
                  {"k", static_cast<double>(c.k)},
                  {"alpha", static_cast<double>(c.alpha)},
                  {"T", static_cast<double>(reps)},
                  {"N", static_cast<double>(settings_count)},
                  {"n", static_cast<double>(data.design.size())}};
    append_matrix_metrics(row.metrics, fit.estimate, theta);
    append_iht_metrics(row.metrics, fit);
    append_inference_metrics(row.metrics, config, t, fit, data.design, data.observations, theta);
    export_trace(config, t, fit);
    if (config.export_details) {
      const fs::path path = detail_path(config, "dataset", t);
      auto out = open_output(path);
      write_dataset_manifest(out, data);
      finish_output(out, path);
    }
    return row;
  };
  return finish(config, run_tasks(make_tasks(static_cast<Index>(cells.size()), config.replicates),
                                  config.workers, fn));
}

ExperimentOutput run_sparse_experiment(const ExperimentConfig& config) {
  require_mode(config, ExperimentMode::sparse);
  config.validate();
  prepare_output_dir(config.output_dir);

  struct Cell {
    Index p, k, n;
  };
  std::vector<Cell> cells;
  for (Index p : config.sparse.p) {
    for (Index k : config.sparse.k) {
      for (Index n : config.sparse.n) cells.push_back({p, k, n});
    }
  }
  const SparseEstimatorConfig& est = config.sparse_estimator;

  std::mutex block_mutex;
  std::map<std::pair<Index, Index>, std::string> blocks;

  auto fn = [&](const Task& t) {
    const Cell& c = cells[static_cast<std::size_t>(t.cell)];
    const auto cell_id = static_cast<std::uint64_t>(t.cell);
    const auto rep_id = static_cast<std::uint64_t>(t.replicate);
    SparseInstance inst = gen_sparse_instance(
        c.n, c.p, c.k, config.sparse.noise_std,
        derive_seed(config.seed, {cell_id, rep_id, kTheta}));
    if (config.sparse.design == "orthogonal") {
      inst.x = orthogonal_design(c.n, c.p, derive_seed(config.seed, {cell_id, rep_id, kDesign}));
      inst.y = inst.x * *inst.theta + *inst.noise;
    }
    const Index max_sparsity = std::min(c.p, est.max_sparsity.value_or(2 * c.k));
    DecorrelatorStrategy strategy = IdentityStrategy{};
    if (est.strategy == "row_program") strategy = RowProgramStrategy{est.mu, 1e-6};
    const Decorrelator v = build_decorrelator(inst.x, strategy, {max_sparsity});

    SparseConfig sc;
    sc.max_sparsity = max_sparsity;
    sc.delta = est.delta;
    sc.upsilon = est.upsilon;
    sc.start = est.start.value_or(
        2.0 * (v.v * inst.x.transpose() * inst.y / static_cast<double>(c.n)).cwiseAbs().maxCoeff());
    const SparseResult fit = sparse_iht_run(inst, v, sc);
    const RVector theta_hat = desparsify(fit.theta_hat, inst, v.v);
    const double sigma = sparse_sigma(inst, fit.theta_hat);
    const SparseIntervals ci = sparse_confidence_intervals(theta_hat, inst, v.v, sigma, est.level);

    const RVector& theta = *inst.theta;
    const RVector err = fit.theta_hat - theta;
    Index covered = 0;
    bool included = true;
    for (Index j = 0; j < c.p; ++j) {
      if (ci.lower(j) <= theta(j) && theta(j) <= ci.upper(j)) ++covered;
      if (theta(j) != 0.0 && fit.theta_hat(j) == 0.0) included = false;
    }

    MetricRow row;
    row.cell = t.cell;
    row.replicate = t.replicate;
    row.params = {{"p", static_cast<double>(c.p)},
                  {"k", static_cast<double>(c.k)},
                  {"n", static_cast<double>(c.n)}};
    row.metrics = {{"l2_sq", err.squaredNorm()},
                   {"linf", err.cwiseAbs().maxCoeff()},
                   {"l1", err.lpNorm<1>()},
                   {"support_size", static_cast<double>((fit.theta_hat.array() != 0.0).count())},
                   {"support_included", included ? 1.0 : 0.0},
                   {"coverage", static_cast<double>(covered) / static_cast<double>(c.p)},
                   {"mean_ci_length", 2.0 * ci.half_widths.mean()},
                   {"iterations", static_cast<double>(fit.iterations)},
                   {"r_k", fit.r_k},
                   {"sigma_hat", sigma}};

    std::ostringstream block;
    std::ostringstream table;
    write_coordinate_csv(table, ci, fit.theta_hat);
    std::istringstream lines(table.str());
    std::string line;
    std::getline(lines, line);  // header
    Index j = 0;
    while (std::getline(lines, line)) {
      block << t.cell << ',' << t.replicate << ',' << line << ',' << format_double(theta(j)) << '\n';
      ++j;
    }
    std::lock_guard lock(block_mutex);
    blocks[{t.cell, t.replicate}] = block.str();
    return row;
  };
  ExperimentOutput result = finish(
      config, run_tasks(make_tasks(static_cast<Index>(cells.size()), config.replicates),
                        config.workers, fn));
  if (!config.output_dir.empty()) {
    const fs::path path = fs::path(config.output_dir) / "coordinates.csv";
    auto out = open_output(path);
    out << "# schema=1\ncell,replicate,j,theta_hat,ci_lower,ci_upper,in_support,theta\n";
    for (const auto& [key, text] : blocks) out << text;
    finish_output(out, path);
  }
  return result;
}

ExperimentOutput run_experiment(const ExperimentConfig& config) {
  switch (config.mode) {
    case ExperimentMode::matrix_sim: return run_matrix_experiment(config);
    case ExperimentMode::quantum: return run_quantum_experiment(config);
    case ExperimentMode::sparse: return run_sparse_experiment(config);
  }
  throw ConfigError("unknown mode");
}

double empirical_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("empirical_quantile: no values");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("empirical_quantile: q outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<AggregateRow> aggregate(const std::vector<MetricRow>& rows) {
  std::map<Index, std::vector<const MetricRow*>> by_cell;
  for (const auto& r : rows) by_cell[r.cell].push_back(&r);
  std::vector<AggregateRow> out;
  for (const auto& [cell, members] : by_cell) {
    AggregateRow agg;
    agg.cell = cell;
    agg.params = members.front()->params;
    agg.replicates = static_cast<Index>(members.size());
    const NamedValues& names = members.front()->metrics;
    for (std::size_t m = 0; m < names.size(); ++m) {
      std::vector<double> values;
      double sum = 0.0;
      for (const MetricRow* r : members) {
        if (r->metrics.size() != names.size() || r->metrics[m].first != names[m].first) {
          throw std::invalid_argument("aggregate: metric columns differ within a cell");
        }
        values.push_back(r->metrics[m].second);
        sum += r->metrics[m].second;
      }
      agg.metrics.emplace_back(names[m].first, sum / static_cast<double>(values.size()),
                               empirical_quantile(values, 0.025),
                               empirical_quantile(values, 0.975));
    }
    out.push_back(std::move(agg));
  }
  return out;
}

void write_replicates_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "# schema=1\n";
  if (rows.empty()) {
    out << "# params=0\ncell,replicate\n";
    return;
  }
  const MetricRow& first = rows.front();
  out << "# params=" << first.params.size() << "\ncell,replicate";
  for (const auto& [name, _] : first.params) out << ',' << name;
  for (const auto& [name, _] : first.metrics) out << ',' << name;
  out << '\n';
  for (const auto& r : rows) {
    out << r.cell << ',' << r.replicate;
    for (const auto& [_, v] : r.params) out << ',' << format_double(v);
    for (const auto& [_, v] : r.metrics) out << ',' << format_double(v);
    out << '\n';
  }
}

std::vector<MetricRow> read_replicates_csv(std::istream& in) {
  std::string line;
  std::size_t param_count = 0;
  bool have_schema = false;
  std::vector<std::string> header;
  std::vector<MetricRow> rows;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line == "# schema=1") have_schema = true;
      if (line.rfind("# params=", 0) == 0) param_count = std::stoul(line.substr(9));
      continue;
    }
    if (header.empty()) {
      if (!have_schema) throw ConfigError("replicates CSV lacks the '# schema=1' line");
      header = split(line);
      if (header.size() < 2 + param_count || header[0] != "cell" || header[1] != "replicate") {
        throw ConfigError("replicates CSV header is malformed");
      }
      continue;
    }
    const auto fields = split(line);
    if (fields.size() != header.size()) throw ConfigError("replicates CSV row has wrong width");
    MetricRow r;
    try {
      r.cell = std::stoll(fields[0]);
      r.replicate = std::stoll(fields[1]);
      for (std::size_t i = 2; i < fields.size(); ++i) {
        const double v = std::stod(fields[i]);
        if (i < 2 + param_count) {
          r.params.emplace_back(header[i], v);
        } else {
          r.metrics.emplace_back(header[i], v);
        }
      }
    } catch (const std::logic_error&) {
      throw ConfigError("replicates CSV holds a non-numeric field");
    }
    rows.push_back(std::move(r));
  }
  if (header.empty()) throw ConfigError("replicates CSV has no header");
  return rows;
}

void write_aggregates_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << "# schema=1\n";
  if (rows.empty()) {
    out << "cell,replicates\n";
    return;
  }
  out << "cell";
  for (const auto& [name, _] : rows.front().params) out << ',' << name;
  out << ",replicates";
  for (const auto& m : rows.front().metrics) {
    const std::string& name = std::get<0>(m);
    out << ',' << name << "_mean," << name << "_q025," << name << "_q975";
  }
  out << '\n';
  for (const auto& r : rows) {
    out << r.cell;
    for (const auto& [_, v] : r.params) out << ',' << format_double(v);
    out << ',' << r.replicates;
    for (const auto& [name, mean, lo, hi] : r.metrics) {
      out << ',' << format_double(mean) << ',' << format_double(lo) << ',' << format_double(hi);
    }
    out << '\n';
  }
}

std::vector<AggregateRow> report(const std::string& dir) {
  const fs::path in_path = fs::path(dir) / "replicates.csv";
  std::ifstream in(in_path);
  if (!in) throw IoError("cannot read " + in_path.string());
  const auto rows = read_replicates_csv(in);
  auto aggregates = aggregate(rows);
  const fs::path out_path = fs::path(dir) / "aggregates.csv";
  auto out = open_output(out_path);
  write_aggregates_csv(out, aggregates);
  finish_output(out, out_path);
  return aggregates;
}

}  // namespace traceiht
