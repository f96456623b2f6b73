#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kvp/ground_truth.hpp"
#include "kvp/krr.hpp"
#include "kvp/market.hpp"
#include "kvp/valuation.hpp"

namespace kvp {

/// Full configuration of one experiment run. Defaults reproduce the
/// two-period Black-Scholes study.
struct ExperimentConfig {
  BSConfig market;
  std::vector<PayoffId> payoffs;  ///< empty means all six

  KernelFamily family = KernelFamily::gauss_exp;
  std::vector<double> alphas{0.0, 2.0, 4.0, 6.0};
  std::vector<double> betas{0.0, 0.15, 0.3, 0.45};  ///< gauss_exp
  std::vector<int> degrees{1, 2, 3};                ///< gauss_poly
  std::vector<double> lambdas{1e-9, 1e-7, 1e-5, 1e-3};
  double gamma = 0.45;

  std::size_t n_train = 2000;
  std::size_t n_val = 500;
  std::size_t n_test = 5000;
  std::size_t n_repeats = 10;

  GroundTruthSource ground_truth;
  std::filesystem::path ground_truth_cache;  ///< directory; empty disables

  std::size_t nested_outer = 200;
  std::size_t nested_inner = 10;
  std::size_t nested_repeats = 10;

  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
  int threads = 1;

  void validate() const;
  std::vector<PayoffId> payoff_list() const;
  /// Size of the second grid axis (betas or degrees).
  std::size_t second_axis_size() const;
  /// Kernel at grid coordinates (alpha, second-axis index).
  KernelSpec kernel(double alpha, std::size_t j) const;
  double second_axis_value(std::size_t j) const;
  MeasureSpec training_measure(std::size_t repeat) const;
  /// Key/value view used by the manifest and `--help-config`.
  std::vector<std::pair<std::string, std::string>> entries() const;
};

/// INI-style text: [market] [kernel] [sample] [ground_truth] [nested] [run].
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& p);

struct GridPoint {
  double alpha = 0.0;
  double second = 0.0;  ///< beta, or the degree for gauss_poly
  std::size_t second_index = 0;
  double lambda = 0.0;
  double error = 0.0;   ///< relative L2 validation error; NaN when the fit failed
  double residual = 0.0;
  bool ok = false;
};

struct GridResult {
  std::string second_name = "beta";
  std::vector<GridPoint> surface;  ///< alpha outer, second axis middle, lambda inner
  std::size_t best = 0;
  std::optional<Estimator> best_fit;

  const GridPoint& best_point() const { return surface.at(best); }
  /// Indices sorted by error, ties by grid order; failed points last.
  std::vector<std::size_t> ranking() const;
  /// Rank (0-based) of the grid point with these coordinates.
  std::optional<std::size_t> rank_of(double alpha, double second, double lambda) const;
  /// The lambda sweep at the optimum has its minimum away from both ends.
  bool lambda_interior() const;
  double max_residual() const;
};

/// Paths and payoff values of one validation sample under the nominal measure.
struct ValidationSet {
  PathSet paths;
  std::vector<double> values;
};

ValidationSet validation_set(const ExperimentConfig& cfg, PayoffId id, std::size_t repeat);
TrainingSet training_set(const ExperimentConfig& cfg, PayoffId id, std::size_t repeat);

/// Every grid point fitted on `train` and scored on `val`; the argmin uses
/// first-occurrence tie-breaking in grid order.
GridResult grid_search(const ExperimentConfig& cfg, const TrainingSet& train,
                       const ValidationSet& val);
/// Same on the samples of repeat 0.
GridResult grid_search(const ExperimentConfig& cfg, PayoffId id);

/// Test paths under the nominal measure, shared by all repeats.
PathSet test_paths(const ExperimentConfig& cfg);

struct PayoffRun {
  PayoffId id{};
  GridResult grid;
  ErrorReport kernel;
  ErrorReport nested;
  std::vector<ValueErrors> errors;  ///< per repeat; trajectories kept for repeat 0
  GroundTruthTable truth;
  std::size_t budget_per_repeat = 0;  ///< training + validation payoff calls
};

struct RunOptions {
  bool nested = true;
  bool keep_trajectories = false;
  std::optional<std::size_t> n_repeats;  ///< overrides cfg.n_repeats
};

/// Grid search on repeat 0, refits at the optimum for the remaining repeats,
/// value-process errors against the ground truth, and the nested-MC baseline.
PayoffRun run_payoff(const ExperimentConfig& cfg, PayoffId id, const RunOptions& opt = {});

/// Nested-MC relative L1 errors at t = 0, 1 over cfg.nested_repeats runs.
ErrorReport nested_mc_report(const ExperimentConfig& cfg, PayoffId id,
                             GroundTruthCache* cache = nullptr);

GroundTruthCache load_cache(const ExperimentConfig& cfg, PayoffId id);
void save_cache(const ExperimentConfig& cfg, PayoffId id, const GroundTruthCache& cache);

/// Table rows for all runs (kernel rows t = 0..T, nested rows t = 0, 1).
std::string table2_csv(const std::vector<PayoffRun>& runs);

std::string grid_csv(const GridResult& g);
/// Error against the kernel parameters at the optimal lambda.
std::string fig1_csv(const GridResult& g);
/// Error against lambda at the optimal kernel parameters.
std::string fig2_csv(const GridResult& g);
/// (V_t - Vhat_t) / V_0 per test trajectory and t.
std::string fig3_csv(const ValueErrors& e, int T);

}  // namespace kvp
