#include "helpers.hpp"
#include "traceiht/experiments.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace traceiht;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("traceiht_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double column_max(const ExperimentOutput& out, const std::string& name) {
  double best = 0.0;
  for (const auto& row : out.rows) {
    for (const auto& [key, value] : row.metrics) {
      if (key == name) best = std::max(best, value);
    }
  }
  return best;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TRACEIHT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("compute_metrics") {
  CMatrix zero = CMatrix::Zero(3, 3);
  const MatrixMetrics none = compute_metrics(zero, zero);
  CHECK(none.frobenius_sq == 0.0);
  CHECK(none.operator_norm == 0.0);
  CHECK(none.entrywise_inf == 0.0);
  CHECK(none.schatten1 == 0.0);

  CMatrix diff = CMatrix::Zero(2, 2);
  diff.diagonal() << 3.0, 4.0;
  const MatrixMetrics m = compute_metrics(diff, CMatrix::Zero(2, 2));
  CHECK(m.frobenius_sq == doctest::Approx(25.0));
  CHECK(m.operator_norm == doctest::Approx(4.0));
  CHECK(m.entrywise_inf == doctest::Approx(4.0));
  CHECK(m.schatten1 == doctest::Approx(7.0));

  std::mt19937 gen(61);
  const CMatrix a = random_complex(5, 5, gen), b = random_complex(5, 5, gen);
  const MatrixMetrics r = compute_metrics(a, b);
  CHECK(r.frobenius_sq == doctest::Approx(naive_trace_inner(a - b, a - b)).epsilon(1e-10));
  CHECK(r.operator_norm == doctest::Approx(operator_norm(a - b)).epsilon(1e-10));
  CHECK(r.schatten1 == doctest::Approx(schatten_norm(a - b, 1.0)).epsilon(1e-10));
  CHECK_THROWS_AS(compute_metrics(a, CMatrix::Zero(4, 4)), std::invalid_argument);
}

TEST_CASE("empirical quantiles interpolate linearly") {
  CHECK(empirical_quantile({3.0, 1.0, 2.0, 4.0}, 0.5) == doctest::Approx(2.5));
  CHECK(empirical_quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.025) == doctest::Approx(1.1));
  CHECK(empirical_quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.975) == doctest::Approx(4.9));
  CHECK(empirical_quantile({7.0}, 0.975) == 7.0);
  CHECK_THROWS_AS(empirical_quantile({}, 0.5), std::invalid_argument);
}

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse_config(
      R"({"grid": {"d": [8, 16], "k": [1], "n": [500]}, "replicates": 3, "seed": 9,
          "iht": {"rho": 0.6, "upsilon": 0.01, "start": "data_driven"},
          "ci": {"convention": "two_sided"}})",
      ExperimentMode::matrix_sim);
  CHECK(c.matrix.d == std::vector<Index>{8, 16});
  CHECK(c.replicates == 3);
  CHECK(c.seed == 9);
  CHECK(c.iht.rho == 0.6);
  CHECK(std::get<FixedUpsilon>(c.iht.upsilon).value == 0.01);
  CHECK(c.ci.convention == QuantileConvention::two_sided);

  CHECK_THROWS_AS(parse_config("{", ExperimentMode::matrix_sim), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"replicate": 3})", ExperimentMode::matrix_sim), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"replicates": "3"})", ExperimentMode::matrix_sim), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"grid": {"d": [0]}})", ExperimentMode::matrix_sim), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"grid": {"d": [2], "k": [3]}})", ExperimentMode::matrix_sim),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"mode": "quantum"})", ExperimentMode::matrix_sim), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"iht": {"rho": 2}})", ExperimentMode::matrix_sim), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"grid": {"alpha": [2]}})", ExperimentMode::matrix_sim),
                  ConfigError);
  CHECK_NOTHROW(parse_config(R"({"grid": {"alpha": [2], "t_factor": [1]}})", ExperimentMode::quantum));
  CHECK_THROWS_AS(parse_config(R"({"sparse_estimator": {"strategy": "lasso"}})",
                               ExperimentMode::sparse),
                  ConfigError);
}

TEST_CASE("matrix experiments are byte-identical under a fixed seed") {
  ExperimentConfig c = parse_config(
      R"({"grid": {"d": [6], "k": [1, 2], "n": [300]}, "replicates": 2, "seed": 5, "workers": 3})",
      ExperimentMode::matrix_sim);
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  c.output_dir = a.string();
  const ExperimentOutput first = run_matrix_experiment(c);
  c.output_dir = b.string();
  c.workers = 1;
  run_matrix_experiment(c);
  CHECK(slurp(a / "replicates.csv") == slurp(b / "replicates.csv"));
  CHECK(slurp(a / "aggregates.csv") == slurp(b / "aggregates.csv"));
  CHECK(slurp(a / "replicates.csv").rfind("# schema=1\n", 0) == 0);
  CHECK(first.rows.size() == 4);
  CHECK(first.aggregates.size() == 2);
  for (const auto& row : first.rows) {
    for (const auto& [name, value] : row.metrics) CHECK(value >= 0.0);
  }
  CHECK(column_max(first, "rank_hat") <= 6.0);

  // Aggregates are a pure function of the per-replicate file.
  const std::string before = slurp(a / "aggregates.csv");
  fs::remove(a / "aggregates.csv");
  report(a.string());
  CHECK(slurp(a / "aggregates.csv") == before);

  std::ifstream in(a / "replicates.csv");
  const auto rows = read_replicates_csv(in);
  REQUIRE(rows.size() == first.rows.size());
  CHECK(rows[3].metrics == first.rows[3].metrics);
  CHECK(rows[3].params == first.rows[3].params);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("noiseless exact-isometry experiment has zero error") {
  const ExperimentConfig c = parse_config(
      R"({"grid": {"d": [6], "k": [2]}, "design": "orthonormal_basis", "noise_std": 0,
          "iht": {"upsilon": 1e-8}, "replicates": 3, "inference": false})",
      ExperimentMode::matrix_sim);
  const ExperimentOutput out = run_matrix_experiment(c);
  CHECK(out.rows.size() == 3);
  CHECK(column_max(out, "frobenius_sq") <= 1e-16);
}

TEST_CASE("unwritable output fails before computing") {
  ExperimentConfig c;
  c.output_dir = "/proc/traceiht_cannot_write_here";
  c.matrix.d = {4096};  // would be far too slow if computation started
  c.matrix.n = {100000};
  CHECK_THROWS_AS(run_matrix_experiment(c), IoError);
}

TEST_CASE("quantum experiments") {
  const ExperimentConfig c = parse_config(
      R"({"grid": {"m": [3], "k": [1], "alpha": [3], "t_factor": [2]}, "replicates": 2})",
      ExperimentMode::quantum);
  const ExperimentOutput a = run_quantum_experiment(c);
  const ExperimentOutput b = run_quantum_experiment(c);
  REQUIRE(a.rows.size() == 2);
  CHECK(a.rows[1].metrics == b.rows[1].metrics);
  const NamedValues& params = a.rows[0].params;
  CHECK(params[4].first == "N");
  CHECK(params[4].second == 24.0);
  CHECK(params[5].second == 24.0 * 8.0);
  for (const auto& row : a.rows) {
    for (const auto& [name, value] : row.metrics) {
      CHECK(std::isfinite(value));
      CHECK(value >= 0.0);
    }
  }
}

TEST_CASE("sparse experiments") {
  const ExperimentConfig c = parse_config(
      R"({"grid": {"p": [30], "k": [3], "n": [60]}, "design": "orthogonal", "noise_std": 0,
          "replicates": 3, "sparse_estimator": {"max_sparsity": 6}})",
      ExperimentMode::sparse);
  const fs::path dir = scratch("sparse");
  ExperimentConfig with_dir = c;
  with_dir.output_dir = dir.string();
  const ExperimentOutput a = run_sparse_experiment(with_dir);
  CHECK(column_max(a, "l2_sq") < 1e-20);
  CHECK(column_max(a, "linf") < 1e-12);
  const ExperimentOutput b = run_sparse_experiment(c);
  CHECK(a.rows[2].metrics == b.rows[2].metrics);

  const std::string coords = slurp(dir / "coordinates.csv");
  CHECK(coords.rfind("# schema=1\ncell,replicate,j,theta_hat,ci_lower,ci_upper,in_support,theta\n", 0) == 0);
  CHECK(std::count(coords.begin(), coords.end(), '\n') == 2 + 3 * 30);
  fs::remove_all(dir);
}

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  const fs::path good = dir / "good.json", bad = dir / "bad.json";
  std::ofstream(good) << R"({"grid": {"d": [4], "k": [1], "n": [100]}, "replicates": 1})";
  std::ofstream(bad) << R"({"grid": {"d": [4], "k": [1], "n": [100]}, "replicatez": 1})";
  const std::string out = (dir / "out").string();

  CHECK(run_cli("simulate-matrix --config " + good.string() + " --out " + out + " --seed 3") == 0);
  CHECK(fs::exists(fs::path(out) / "replicates.csv"));
  CHECK(run_cli("report --out " + out) == 0);
  CHECK(run_cli("simulate-matrix --config " + bad.string() + " --out " + out) == 2);
  CHECK(run_cli("simulate-matrix --config " + (dir / "missing.json").string() + " --out " + out) == 4);
  CHECK(run_cli("simulate-matrix --config " + good.string() + " --out /proc/traceiht_no") == 4);
  CHECK(run_cli("simulate-matrix --config " + good.string() + " --out " + out + " --replicates 0") == 2);
  CHECK(run_cli("simulate-quantum --config " + good.string() + " --out " + out) == 2);
  CHECK(run_cli("report --out " + (dir / "nothing").string()) == 4);
  CHECK(run_cli("frobnicate") == 2);
  fs::remove_all(dir);
}
