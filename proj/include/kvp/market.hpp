#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvp/path.hpp"
#include "kvp/sampling.hpp"

namespace kvp {

/// Discrete Black-Scholes model driven by one standard normal innovation per
/// step. S_t is the discounted price, N_t = e^{rt} S_t the nominal price.
struct BSConfig {
  double S0 = 1.0;
  double sigma = 0.2;  ///< per-step volatility
  double r = 0.0;      ///< per-step rate
  int T = 2;
  double A = 1.0;  ///< strike
  double B = 2.24;  ///< up-and-out barrier

  void validate() const;
  Shape shape() const { return {1, T}; }
};

enum class PayoffId {
  european_put,
  asian_put,
  up_and_out_call,
  european_call,
  asian_call,
  lookback_float,
};

/// In the order of the result tables.
const std::array<PayoffId, 6>& all_payoffs();
std::string_view payoff_name(PayoffId id);
/// InputError on unknown names.
PayoffId parse_payoff(std::string_view name);

/// (S_0, ..., S_T).
std::vector<double> stock_path(const BSConfig& cfg, std::span<const double> x);

double payoff(const BSConfig& cfg, PayoffId id, std::span<const double> x);
PayoffFn payoff_fn(const BSConfig& cfg, PayoffId id);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Plain MC price E_mu[f(X)] over n paths.
McEstimate mc_price(const BSConfig& cfg, PayoffId id, std::size_t n, std::uint64_t seed);

/// MC value V_t given the first t innovations: mean payoff over n_inner fresh
/// tails. t = T returns the payoff itself.
double ground_truth_value(const BSConfig& cfg, PayoffId id, std::span<const double> prefix,
                          int t, std::size_t n_inner, std::uint64_t seed);
/// Same, with the standard error of the mean.
McEstimate ground_truth_mc(const BSConfig& cfg, PayoffId id, std::span<const double> prefix,
                           int t, std::size_t n_inner, std::uint64_t seed);

/// V_t by adaptive Gauss-Kronrod quadrature over the remaining innovations,
/// with the integration range split where the payoff has kinks or jumps.
/// Supported for T <= 3 (CapabilityError otherwise).
double ground_truth_quadrature(const BSConfig& cfg, PayoffId id,
                               std::span<const double> prefix, int t);

/// Black-Scholes call price with zero rate, spot s, strike k and total
/// volatility v = sigma sqrt(tau).
double bs_call(double s, double k, double v);
double bs_put(double s, double k, double v);

struct NestedMcResult {
  double v0_hat = 0.0;
  std::vector<double> outer_x1;
  std::vector<double> v1_hat;
  std::size_t payoff_calls = 0;
};

/// Nested MC: n_outer first-step draws, each followed by n_inner tails.
NestedMcResult nested_mc_estimate(const BSConfig& cfg, PayoffId id, std::size_t n_outer,
                                  std::size_t n_inner, std::uint64_t seed);

struct VarEs {
  double var = 0.0;
  double es = 0.0;
};

/// VaR is the order statistic at index ceil(level * N) (1-based); ES is the
/// mean of the losses >= VaR.
VarEs var_es(std::span<const double> losses, double level);

/// psi = E[dG dG^T]^{-1} E[dG dV] from samples (dG as rows).
std::vector<double> hedge_ratio(const std::vector<std::vector<double>>& delta_g,
                                std::span<const double> delta_v);

}  // namespace kvp
