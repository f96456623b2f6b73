#include "kvp/market.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <random>

namespace kvp {

void BSConfig::validate() const {
  if (!(S0 > 0.0) || !(sigma > 0.0)) throw InputError("market: S0 and sigma must be > 0");
  if (T < 1) throw InputError("market: T must be >= 1");
  if (!(A > 0.0) || !(B > 0.0)) throw InputError("market: strike and barrier must be > 0");
  if (!(B > A)) throw InputError("market: barrier must exceed the strike");
  if (!std::isfinite(r)) throw InputError("market: rate must be finite");
}

const std::array<PayoffId, 6>& all_payoffs() {
  static const std::array<PayoffId, 6> ids = {
      PayoffId::european_put, PayoffId::asian_put,  PayoffId::up_and_out_call,
      PayoffId::european_call, PayoffId::asian_call, PayoffId::lookback_float};
  return ids;
}

std::string_view payoff_name(PayoffId id) {
  switch (id) {
    case PayoffId::european_put: return "european_put";
    case PayoffId::asian_put: return "asian_put";
    case PayoffId::up_and_out_call: return "up_and_out_call";
    case PayoffId::european_call: return "european_call";
    case PayoffId::asian_call: return "asian_call";
    case PayoffId::lookback_float: return "lookback_float";
  }
  throw InputError("unknown payoff id");
}

PayoffId parse_payoff(std::string_view name) {
  for (auto id : all_payoffs()) {
    if (payoff_name(id) == name) return id;
  }
  throw InputError("unknown payoff '" + std::string(name) + "'");
}

std::vector<double> stock_path(const BSConfig& cfg, std::span<const double> x) {
  check_shape(cfg.shape(), x, "stock_path");
  std::vector<double> s(static_cast<std::size_t>(cfg.T) + 1);
  s[0] = cfg.S0;
  const double drift = -0.5 * cfg.sigma * cfg.sigma;
  for (int t = 1; t <= cfg.T; ++t) {
    s[static_cast<std::size_t>(t)] =
        s[static_cast<std::size_t>(t - 1)] * std::exp(cfg.sigma * x[static_cast<std::size_t>(t - 1)] + drift);
  }
  return s;
}

namespace {

// Payoff from the discounted price path.
double payoff_from_prices(const BSConfig& cfg, PayoffId id, const std::vector<double>& s) {
  const int T = cfg.T;
  const double disc = std::exp(-cfg.r * T);
  const double sT = s.back();
  auto nominal = [&](int t) { return std::exp(cfg.r * t) * s[static_cast<std::size_t>(t)]; };
  auto running_max = [&] {
    double m = nominal(0);
    for (int t = 1; t <= T; ++t) m = std::max(m, nominal(t));
    return m;
  };
  auto average = [&] {
    double a = 0.0;
    for (int t = 1; t <= T; ++t) a += nominal(t);
    return a / T;
  };
  switch (id) {
    case PayoffId::european_put: return std::max(disc * cfg.A - sT, 0.0);
    case PayoffId::asian_put: return disc * std::max(cfg.A - average(), 0.0);
    case PayoffId::up_and_out_call:
      return running_max() <= cfg.B ? std::max(sT - disc * cfg.A, 0.0) : 0.0;
    case PayoffId::european_call: return std::max(sT - disc * cfg.A, 0.0);
    case PayoffId::asian_call: return disc * std::max(average() - cfg.A, 0.0);
    case PayoffId::lookback_float: return disc * running_max() - sT;
  }
  throw InputError("unknown payoff id");
}

}  // namespace

double payoff(const BSConfig& cfg, PayoffId id, std::span<const double> x) {
  return payoff_from_prices(cfg, id, stock_path(cfg, x));
}

PayoffFn payoff_fn(const BSConfig& cfg, PayoffId id) {
  cfg.validate();
  return [cfg, id](std::span<const double> x) { return payoff(cfg, id, x); };
}

namespace {

McEstimate mean_and_se(const std::vector<double>& v) {
  McEstimate e;
  e.mean = pairwise_sum(v) / static_cast<double>(v.size());
  if (v.size() > 1) {
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - e.mean) * (v[i] - e.mean);
    e.std_error = std::sqrt(pairwise_sum(sq) / static_cast<double>(v.size() - 1) /
                            static_cast<double>(v.size()));
  }
  return e;
}

}  // namespace

McEstimate mc_price(const BSConfig& cfg, PayoffId id, std::size_t n, std::uint64_t seed) {
  return ground_truth_mc(cfg, id, {}, 0, n, seed);
}

McEstimate ground_truth_mc(const BSConfig& cfg, PayoffId id, std::span<const double> prefix,
                           int t, std::size_t n_inner, std::uint64_t seed) {
  cfg.validate();
  if (t < 0 || t > cfg.T) throw InputError("ground truth: time index out of range");
  if (prefix.size() != static_cast<std::size_t>(t)) {
    throw InputError("ground truth: prefix must hold t innovations");
  }
  if (t == cfg.T) return {payoff(cfg, id, prefix), 0.0};
  if (n_inner == 0) throw InputError("ground truth: n_inner must be >= 1");
  std::vector<double> vals(n_inner);
  parallel_for(n_inner, [&](std::size_t k) {
    std::mt19937_64 rng(stream_seed(seed, k));
    std::normal_distribution<double> normal;
    std::vector<double> x(prefix.begin(), prefix.end());
    x.resize(static_cast<std::size_t>(cfg.T));
    for (int s = t; s < cfg.T; ++s) x[static_cast<std::size_t>(s)] = normal(rng);
    vals[k] = payoff(cfg, id, x);
  });
  return mean_and_se(vals);
}

double ground_truth_value(const BSConfig& cfg, PayoffId id, std::span<const double> prefix,
                          int t, std::size_t n_inner, std::uint64_t seed) {
  return ground_truth_mc(cfg, id, prefix, t, n_inner, seed).mean;
}

double bs_call(double s, double k, double v) {
  if (!(v > 0.0)) return std::max(s - k, 0.0);
  static const boost::math::normal_distribution<double> nd;
  const double d1 = std::log(s / k) / v + 0.5 * v;
  return s * boost::math::cdf(nd, d1) - k * boost::math::cdf(nd, d1 - v);
}

double bs_put(double s, double k, double v) { return bs_call(s, k, v) - s + k; }

NestedMcResult nested_mc_estimate(const BSConfig& cfg, PayoffId id, std::size_t n_outer,
                                  std::size_t n_inner, std::uint64_t seed) {
  cfg.validate();
  if (n_outer == 0 || n_inner == 0) throw InputError("nested MC: counts must be >= 1");
  NestedMcResult res;
  res.outer_x1.resize(n_outer);
  res.v1_hat.resize(n_outer);
  std::vector<double> all(n_outer * n_inner);
  parallel_for(n_outer, [&](std::size_t i) {
    std::mt19937_64 rng(stream_seed(seed, i));
    std::normal_distribution<double> normal;
    std::vector<double> x(static_cast<std::size_t>(cfg.T));
    x[0] = normal(rng);
    res.outer_x1[i] = x[0];
    for (std::size_t k = 0; k < n_inner; ++k) {
      for (int s = 1; s < cfg.T; ++s) x[static_cast<std::size_t>(s)] = normal(rng);
      all[i * n_inner + k] = payoff(cfg, id, x);
    }
    res.v1_hat[i] = pairwise_sum(std::span<const double>(all).subspan(i * n_inner, n_inner)) /
                    static_cast<double>(n_inner);
  });
  res.v0_hat = pairwise_sum(all) / static_cast<double>(all.size());
  res.payoff_calls = all.size();
  return res;
}

VarEs var_es(std::span<const double> losses, double level) {
  if (losses.empty()) throw InputError("var_es: empty sample");
  if (!(level > 0.0 && level < 1.0)) throw InputError("var_es: level must lie in (0, 1)");
  std::vector<double> v(losses.begin(), losses.end());
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  auto idx = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n)));
  idx = std::clamp<std::size_t>(idx, 1, n);
  VarEs out;
  out.var = v[idx - 1];
  const auto first = std::lower_bound(v.begin(), v.end(), out.var);
  const std::span<const double> tail(&*first, static_cast<std::size_t>(v.end() - first));
  out.es = pairwise_sum(tail) / static_cast<double>(tail.size());
  return out;
}

std::vector<double> hedge_ratio(const std::vector<std::vector<double>>& delta_g,
                                std::span<const double> delta_v) {
  if (delta_g.empty() || delta_g.size() != delta_v.size()) {
    throw InputError("hedge_ratio: samples must be nonempty and of equal length");
  }
  const auto k = delta_g.front().size();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < delta_g.size(); ++i) {
    if (delta_g[i].size() != k) throw InputError("hedge_ratio: ragged instrument vectors");
    const Eigen::Map<const Eigen::VectorXd> g(delta_g[i].data(), static_cast<Eigen::Index>(k));
    m.noalias() += g * g.transpose();
    b += g * delta_v[i];
  }
  const double n = static_cast<double>(delta_g.size());
  m /= n;
  b /= n;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  const double rc = ldlt.rcond();
  if (ldlt.info() != Eigen::Success || !(rc > 1e-12)) {
    throw SolverError("hedge_ratio: singular second-moment matrix", rc);
  }
  const Eigen::VectorXd psi = ldlt.solve(b);
  return {psi.data(), psi.data() + psi.size()};
}

}  // namespace kvp
