#include "kvp/valuation.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "kvp/io.hpp"
#include "kvp/simd.hpp"
#include "kvp/stats.hpp"

namespace kvp {

double value_at(const Estimator& est, std::span<const double> prefix, int t) {
  const auto& shape = est.kernel().shape();
  if (t < 0 || t > shape.T) throw InputError("value_at: time index out of range");
  if (t == shape.T) return est.predict(prefix);
  if (est.mode() == FitMode::primal) {
    const auto e = est.kernel().feature_map()->cond_expect(prefix, t);
    return simd::dot(e.data(), est.solution().data(), e.size());
  }
  const auto& centers = est.centers();
  std::vector<double> k(centers.size());
  est.kernel().cond_expect_row(prefix, t, centers, est.center_shift().data(), k.data());
  return simd::dot(k.data(), est.eval_coefficients().data(), k.size()) /
         static_cast<double>(est.n());
}

ValueSeries value_series(const Estimator& est, std::span<const double> x) {
  const auto& shape = est.kernel().shape();
  check_shape(shape, x, "value_series");
  ValueSeries vs;
  vs.values.resize(static_cast<std::size_t>(shape.T) + 1);
  for (int t = 0; t <= shape.T; ++t) {
    vs.values[static_cast<std::size_t>(t)] =
        value_at(est, x.first(static_cast<std::size_t>(t * shape.d)), t);
  }
  return vs;
}

double payoff_l2_error(const Estimator& est, const PathSet& paths,
                       std::span<const double> payoff_values) {
  if (paths.size() == 0 || paths.size() != payoff_values.size()) {
    throw InputError("payoff_l2_error: need one payoff value per path");
  }
  const auto pred = est.predict(paths);
  std::vector<double> num(pred.size()), den(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    num[i] = (payoff_values[i] - pred[i]) * (payoff_values[i] - pred[i]);
    den[i] = payoff_values[i] * payoff_values[i];
  }
  const double d = pairwise_sum(den);
  if (!(d > 0.0)) throw DataError("payoff_l2_error: payoff has zero L2 norm on the sample");
  return std::sqrt(pairwise_sum(num) / d);
}

double payoff_l2_error(const Estimator& est, const BSConfig& cfg, PayoffId id,
                       std::size_t n_val, std::uint64_t seed) {
  if (n_val == 0) throw InputError("payoff_l2_error: n_val must be >= 1");
  const auto paths = draw_paths(MeasureSpec{0.0, cfg.shape(), seed}, n_val);
  std::vector<double> f(n_val);
  parallel_for(n_val, [&](std::size_t i) { f[i] = payoff(cfg, id, paths.row(i)); });
  return payoff_l2_error(est, paths, f);
}

GroundTruthTable ground_truth_table(const BSConfig& cfg, PayoffId id, const PathSet& test,
                                    const GroundTruthSource& source, GroundTruthCache* cache) {
  const int T = cfg.T;
  const auto n = test.size();
  const bool cacheable = cache && T == 2;
  const auto n_inner = source.method == GroundTruthSource::Method::quadrature ? 0 : source.n_inner;
  const auto seed = source.method == GroundTruthSource::Method::quadrature ? 0 : source.seed;

  GroundTruthTable g;
  if (auto hit = cacheable ? cache->find(0, 0.0) : std::nullopt) {
    g.v0 = *hit;
  } else {
    g.v0 = source.value(cfg, id, {}, 0);
    if (cacheable) cache->insert({0, 0.0, g.v0, n_inner, seed});
  }
  if (!(g.v0 > 0.0)) throw DataError("ground truth V_0 is not positive");

  g.vt.assign(static_cast<std::size_t>(T) + 1, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) g.vt[0][i] = g.v0;
  for (int t = 1; t <= T; ++t) {
    auto& col = g.vt[static_cast<std::size_t>(t)];
    std::vector<char> missing(n, 1);
    if (cacheable && t == 1) {
      for (std::size_t i = 0; i < n; ++i) {
        if (auto hit = cache->find(1, test.row(i)[0])) {
          col[i] = *hit;
          missing[i] = 0;
        }
      }
    }
    parallel_for(n, [&](std::size_t i) {
      if (missing[i]) col[i] = source.value(cfg, id, test.row(i).first(static_cast<std::size_t>(t)), t);
    });
    if (cacheable && t == 1) {
      for (std::size_t i = 0; i < n; ++i) {
        if (missing[i]) cache->insert({1, test.row(i)[0], col[i], n_inner, seed});
      }
    }
  }
  return g;
}

ValueErrors value_process_error(const Estimator& est, const PathSet& test,
                                const GroundTruthTable& truth, bool keep_trajectories) {
  const int T = est.kernel().shape().T;
  const auto n = test.size();
  const auto stride = static_cast<std::size_t>(T) + 1;
  if (truth.vt.size() != stride) throw DataError("ground truth table has the wrong time range");
  for (const auto& col : truth.vt) {
    if (col.size() != n) throw DataError("ground truth missing for some test paths");
  }
  ValueErrors out;
  out.vhat.resize(n * stride);
  parallel_for(n, [&](std::size_t i) {
    const auto vs = value_series(est, test.row(i));
    std::copy(vs.values.begin(), vs.values.end(), out.vhat.begin() + static_cast<std::ptrdiff_t>(i * stride));
  });
  out.rel_l1.resize(stride);
  if (keep_trajectories) out.trajectories.resize(n * stride);
  std::vector<double> abs_err(n);
  for (std::size_t t = 0; t < stride; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = (truth.vt[t][i] - out.vhat[i * stride + t]) / truth.v0;
      abs_err[i] = std::abs(diff);
      if (keep_trajectories) out.trajectories[i * stride + t] = diff;
    }
    out.rel_l1[t] = pairwise_sum(abs_err) / static_cast<double>(n);
  }
  return out;
}

void ErrorReport::summarize() {
  mean_pct.clear();
  std_pct.clear();
  if (per_repeat.empty()) return;
  const auto tc = per_repeat.front().size();
  for (std::size_t t = 0; t < tc; ++t) {
    std::vector<double> col;
    for (const auto& r : per_repeat) col.push_back(r[t]);
    mean_pct.push_back(stats::mean(col));
    std_pct.push_back(stats::stddev(col));
  }
}

std::string ErrorReport::csv_rows(int t_count) const {
  std::ostringstream os;
  const auto n = t_count < 0 ? mean_pct.size() : static_cast<std::size_t>(t_count);
  for (std::size_t t = 0; t < n && t < mean_pct.size(); ++t) {
    os << payoff << ',' << estimator << ',' << t << ',' << io::format_double(mean_pct[t]) << ','
       << io::format_double(std_pct[t]) << '\n';
  }
  return os.str();
}

DoobCheck doob_check(const ValueErrors& errors, const GroundTruthTable& truth, int T) {
  const auto stride = static_cast<std::size_t>(T) + 1;
  const auto n = errors.vhat.size() / stride;
  if (n < 2) throw InputError("doob_check: need at least two paths");
  std::vector<double> max_sq(n), end_sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0.0;
    for (std::size_t t = 0; t < stride; ++t) {
      m = std::max(m, std::abs(truth.vt[t][i] - errors.vhat[i * stride + t]));
    }
    max_sq[i] = m * m;
    const double e = truth.vt[T][i] - errors.vhat[i * stride + static_cast<std::size_t>(T)];
    end_sq[i] = e * e;
  }
  DoobCheck c;
  const double ms = stats::mean(max_sq), es = stats::mean(end_sq);
  c.lhs = 0.5 * std::sqrt(ms);
  c.rhs = std::sqrt(es);
  // Delta method for the square roots.
  c.lhs_se = ms > 0.0 ? 0.5 * stats::std_error(max_sq) / (2.0 * std::sqrt(ms)) : 0.0;
  c.rhs_se = es > 0.0 ? stats::std_error(end_sq) / (2.0 * std::sqrt(es)) : 0.0;
  c.holds = c.lhs <= c.rhs + 3.0 * std::hypot(c.lhs_se, c.rhs_se);
  return c;
}

}  // namespace kvp
