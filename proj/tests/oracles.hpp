#pragma once
// Independent reference computations used by the tests.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

/// Gauss-Hermite rule for the standard normal weight (Golub-Welsch).
inline std::pair<std::vector<double>, std::vector<double>> gauss_hermite(int n) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    j(k, k - 1) = j(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  std::vector<double> x(n), w(n);
  for (int k = 0; k < n; ++k) {
    x[k] = es.eigenvalues()(k);
    const double v = es.eigenvectors()(0, k);
    w[k] = v * v;
  }
  return {x, w};
}

/// E[g(X)] for X ~ N(0, 1) with an n-point rule.
inline double gh_expect(const std::function<double(double)>& g, int n = 200) {
  const auto [x, w] = gauss_hermite(n);
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += w[k] * g(x[k]);
  return s;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  long double s = 0.0, s2 = 0.0;
  for (double x : v) s += x;
  const long double m = s / v.size();
  for (double x : v) s2 += (x - m) * (x - m);
  return {static_cast<double>(m), static_cast<double>(std::sqrt(s2 / (v.size() - 1) / v.size()))};
}

/// Sample mean and standard error of g over n standard normal draws of
/// dimension dim.
inline MeanSe mc(std::size_t n, int dim, std::uint64_t seed,
                 const std::function<double(const std::vector<double>&)>& g) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> z(dim), vals(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : z) v = nd(rng);
    vals[i] = g(z);
  }
  return mean_se(vals);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Black-Scholes call with zero rate and total volatility v.
inline double bs_call(double s, double k, double v) {
  const double d1 = std::log(s / k) / v + 0.5 * v;
  return s * normal_cdf(d1) - k * normal_cdf(d1 - v);
}

}  // namespace oracle
