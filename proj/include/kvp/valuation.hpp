#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kvp/ground_truth.hpp"
#include "kvp/krr.hpp"
#include "kvp/market.hpp"

namespace kvp {

/// Estimated values (V_0, ..., V_T) along one path.
struct ValueSeries {
  std::vector<double> values;
};

/// V_t = E_Q[f_X(X) | F_t] from the first t steps.
double value_at(const Estimator& est, std::span<const double> prefix, int t);
ValueSeries value_series(const Estimator& est, std::span<const double> x);

/// ||f - f_X||_{2,mu} / ||f||_{2,mu} over the given nominal-measure paths.
double payoff_l2_error(const Estimator& est, const PathSet& paths,
                       std::span<const double> payoff_values);
/// Same over n_val fresh paths under mu (n_val payoff calls).
double payoff_l2_error(const Estimator& est, const BSConfig& cfg, PayoffId id,
                       std::size_t n_val, std::uint64_t seed);

/// Reference values V_t on a set of test paths; vt[t][i] for path i.
struct GroundTruthTable {
  double v0 = 0.0;
  std::vector<std::vector<double>> vt;
};

/// Looks up and fills `cache` when given (keyed by x_1; T = 2 layout).
GroundTruthTable ground_truth_table(const BSConfig& cfg, PayoffId id, const PathSet& test,
                                    const GroundTruthSource& source,
                                    GroundTruthCache* cache = nullptr);

struct ValueErrors {
  /// mean_i |V_t - Vhat_t| / V_0 for t = 0..T.
  std::vector<double> rel_l1;
  /// (V_t - Vhat_t) / V_0 per path and t (path-major), when requested.
  std::vector<double> trajectories;
  /// Estimated values per path and t (path-major).
  std::vector<double> vhat;
};

ValueErrors value_process_error(const Estimator& est, const PathSet& test,
                                const GroundTruthTable& truth,
                                bool keep_trajectories = false);

/// Error statistics in percent, one row per time step, over training
/// repetitions.
struct ErrorReport {
  std::string payoff;
  std::string estimator;
  std::vector<std::vector<double>> per_repeat;  ///< [repeat][t], percent
  std::vector<double> mean_pct;
  std::vector<double> std_pct;
  std::vector<double> payoff_l2;  ///< relative validation error per repeat
  std::size_t payoff_calls = 0;

  /// Fills mean_pct and std_pct from per_repeat.
  void summarize();
  /// Rows "payoff,estimator,t,mean_pct,std_pct" for the time steps in
  /// [0, t_count).
  std::string csv_rows(int t_count = -1) const;
};

inline constexpr const char* kErrorReportHeader = "payoff,estimator,t,mean_pct,std_pct\n";

struct DoobCheck {
  double lhs = 0.0;     ///< (1/2) || max_t |V_t - Vhat_t| ||_{2,Q}
  double rhs = 0.0;     ///< || f - f_X ||_{2,Q}
  double lhs_se = 0.0;  ///< standard error of the squared-mean estimates
  double rhs_se = 0.0;
  bool holds = false;   ///< lhs <= rhs + 3 combined standard errors
};

/// From the errors of value_process_error (absolute, i.e. multiplied back by
/// V_0) on paths drawn from Q.
DoobCheck doob_check(const ValueErrors& errors, const GroundTruthTable& truth, int T);

}  // namespace kvp
