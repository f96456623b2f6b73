#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kvp/krr.hpp"
#include "kvp/market.hpp"

namespace kvp {

/// Problem used by the bound and limit-theorem experiments. All quantities
/// refer to the tilted problem (f/sqrt(w), the sampling measure, and the
/// tilted kernel). The population solution f_lambda is replaced by a
/// high-budget reference fit.
struct DiagnosticSetup {
  BSConfig market;
  PayoffId payoff = PayoffId::european_put;
  bool primal = false;    ///< monomial features of total degree <= primal_degree
  int primal_degree = 4;
  double alpha = 4.0;     ///< Gaussian-exponentiated kernel (dual mode)
  double beta = 0.3;
  double gamma = 0.45;
  double lambda = 1e-5;
  std::size_t n = 2000;
  std::uint64_t seed = 1;
  std::size_t n_probe = 100000;  ///< sup-norm probe sample
  std::size_t n_embed = 2000;    ///< points in the J* U-statistic (dual mode)
  std::size_t n_l2 = 5000;       ///< probe points for L2 distances per refit
  bool drop_jstar = false;

  KernelSpec kernel() const;
  MeasureSpec measure(std::uint64_t seed) const;
  /// Training sample with index `repeat` (disjoint streams per repeat).
  TrainingSet training_set(std::size_t n, std::uint64_t stream) const;
  Estimator fit(const TrainingSet& ts) const;
};

/// Fit at the setup's lambda on an independent sample of size n_ref >= 4n.
/// With a cache path, reuses the estimator JSON stored there.
Estimator reference_estimator(const DiagnosticSetup& s, std::size_t n_ref,
                              const std::filesystem::path* cache = nullptr);

/// <h_a, h_b> in the tilted RKHS for two estimators with the same kernel.
double h_inner(const Estimator& a, const Estimator& b);
double h_distance(const Estimator& a, const Estimator& b, double b_self = -1.0);

/// (1/lambda) sqrt((resid^2 - jstar^2) / n).
double mse_bound_value(double resid_kappa_l2, double jstar_h, double lambda, std::size_t n);
/// (2/lambda)^2 sup^2.
double c2_value(double resid_kappa_sup, double lambda);

struct BoundReport {
  std::string name;
  std::size_t n = 0, n_ref = 0, n_repeats = 0, n_probe = 0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  bool applicable = true;
  std::string reference_note =
      "f_lambda replaced by a high-budget reference fit; sup-norms are maxima over the "
      "probe sample (lower bounds of the true sup)";

  double resid_kappa_l2 = 0.0;   ///< ||(f - f_ref) kappa||_2 (tilted)
  double jstar_h = 0.0;          ///< ||J^*(f - f_ref)||_H (U-statistic)
  bool jstar_dropped = false;
  double resid_kappa_sup = 0.0;  ///< probe max of |f - f_ref| kappa
  double kappa_sup = 0.0;
  double kappa_l2 = 0.0;

  double mse_bound = 0.0;
  double mse_bound_truncated = 0.0;  ///< delta = 1/2, S-indicator taken as 1
  double c2 = 0.0;
  double c1 = 0.0;
  double prob_s_lower = 0.0;         ///< lower bound on P[S], delta = 1/2

  std::vector<double> h_errors;      ///< ||h_X - h_ref||_H per refit
  std::vector<double> l2_errors;     ///< ||f_X - f_ref||_2 per refit
  double empirical_rms_h = 0.0;
  double empirical_rms_l2 = 0.0;

  std::vector<double> tau, bound_prob, empirical_freq;
  std::vector<bool> tau_ok;

  bool holds = true;
  std::string to_json() const;
};

struct ResidualStats {
  double resid_kappa_l2 = 0.0;
  double resid_kappa_sup = 0.0;
  double kappa_sup = 0.0;
  double kappa_l2 = 0.0;
  double jstar_h = 0.0;
};

/// Probe-sample estimates of the residual f - f_ref against the kernel diagonal.
ResidualStats residual_stats(const DiagnosticSetup& s, const Estimator& ref);

BoundReport mse_bound_check(const DiagnosticSetup& s, const Estimator& ref,
                            std::size_t n_repeats);
/// tau_grid empty: use the empirical 50th, 90th and 99th percentiles of the
/// refit errors.
BoundReport concentration_check(const DiagnosticSetup& s, const Estimator& ref,
                                std::size_t n_repeats, std::vector<double> tau_grid = {});

struct NormalityReport {
  std::size_t n = 0, n_repeats = 0;
  std::vector<double> probe;
  std::vector<double> statistic;  ///< sqrt(n) (f_X(z) - f_ref(z)), tilted
  double mean = 0.0, variance = 0.0, std_error = 0.0;
  double ad_statistic = 0.0;
  bool degenerate = false;
  bool mean_ok = false;       ///< |mean| <= 3 SE
  bool normal_ok = false;     ///< Anderson-Darling not rejected at 1%
  double kappa_z = 0.0;       ///< ||k(., z)||_H
  double c2 = 0.0;
  double q_proxy = 0.0;       ///< variance / kappa_z^2
  bool q_ok = false;          ///< q_proxy <= C2/4 + 3 sd
  bool holds = false;
  std::string to_json() const;
};

NormalityReport clt_experiment(const DiagnosticSetup& s, const Estimator& ref,
                               std::size_t n_repeats, std::vector<double> probe);

struct RobustnessReport {
  double epsilon = 0.0;
  std::size_t n_repeats = 0;
  std::vector<double> diffs;  ///< ||h_X - h'_X||_H per sample
  double mean_diff = 0.0, rms_diff = 0.0;
  double kappa_l2 = 0.0, kappa_sup = 0.0, perturbation_l2 = 0.0;
  double bound_mean = 0.0;  ///< (1/lambda) ||kappa||_2 ||f - f'||_2
  double bound_rms = 0.0;   ///< (1/lambda) ||kappa||_inf ||f - f'||_2
  bool holds = false;
  std::string to_json() const;
};

/// f' = f + epsilon (constant perturbation) on identical samples.
RobustnessReport robustness_check(const DiagnosticSetup& s, double epsilon,
                                  std::size_t n_repeats);

}  // namespace kvp
