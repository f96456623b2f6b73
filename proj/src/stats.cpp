#include "kvp/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <vector>

#include "kvp/common.hpp"

namespace kvp::stats {

double mean(std::span<const double> v) {
  if (v.empty()) throw InputError("mean of an empty sample");
  return pairwise_sum(v) / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - m) * (v[i] - m);
  return std::sqrt(pairwise_sum(sq) / static_cast<double>(v.size() - 1));
}

double std_error(std::span<const double> v) {
  return v.empty() ? 0.0 : stddev(v) / std::sqrt(static_cast<double>(v.size()));
}

double normal_cdf(double x) {
  static const boost::math::normal_distribution<double> nd;
  return boost::math::cdf(nd, x);
}

double normal_quantile(double p) {
  static const boost::math::normal_distribution<double> nd;
  return boost::math::quantile(nd, p);
}

AndersonDarling anderson_darling_normal(std::span<const double> v) {
  const auto n = v.size();
  if (n < 8) throw InputError("Anderson-Darling test needs at least 8 values");
  const double m = mean(v);
  const double s = stddev(v);
  if (!(s > 0.0)) throw DataError("Anderson-Darling test on a constant sample");
  std::vector<double> z(v.begin(), v.end());
  std::sort(z.begin(), z.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lo = std::clamp(normal_cdf((z[i] - m) / s), 1e-300, 1.0 - 1e-16);
    const double hi = std::clamp(normal_cdf((z[n - 1 - i] - m) / s), 1e-300, 1.0 - 1e-16);
    acc += (2.0 * static_cast<double>(i) + 1.0) * (std::log(lo) + std::log1p(-hi));
  }
  const double nn = static_cast<double>(n);
  AndersonDarling r;
  r.a2 = -nn - acc / nn;
  r.a2_star = r.a2 * (1.0 + 0.75 / nn + 2.25 / (nn * nn));
  r.reject_1pct = r.a2_star > 1.035;
  return r;
}

}  // namespace kvp::stats
