#pragma once

#include <span>

namespace kvp::stats {

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double stddev(std::span<const double> v);
double std_error(std::span<const double> v);

double normal_cdf(double x);
double normal_quantile(double p);

struct AndersonDarling {
  double a2 = 0.0;        ///< A^2 against N(mean, var) with estimated parameters
  double a2_star = 0.0;   ///< A^2 (1 + 0.75/n + 2.25/n^2)
  bool reject_1pct = false;  ///< a2_star > 1.035
};

/// Normality test with mean and variance estimated from the sample.
AndersonDarling anderson_darling_normal(std::span<const double> v);

}  // namespace kvp::stats
