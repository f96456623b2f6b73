#include "kvp/sampling.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "kvp/io.hpp"

namespace kvp {

void MeasureSpec::validate() const {
  shape.validate();
  if (!(gamma < 0.5) || !std::isfinite(gamma)) {
    throw InputError("measure-change parameter gamma must be < 1/2");
  }
}

PathSet draw_paths(const MeasureSpec& m, std::size_t n) {
  m.validate();
  if (n == 0) throw InputError("draw_paths: n must be >= 1");
  PathSet out(m.shape, n);
  const double sd = std::sqrt(m.variance());
  parallel_for(n, [&](std::size_t i) {
    std::mt19937_64 rng(stream_seed(m.seed, i));
    std::normal_distribution<double> normal(0.0, sd);
    for (auto& v : out.row(i)) v = normal(rng);
  });
  return out;
}

double log_rn_weight(const MeasureSpec& m, std::span<const double> x) {
  check_shape(m.shape, x, "rn_weight");
  double sq = 0.0;
  for (double v : x) sq += v * v;
  return 0.5 * m.shape.size() * std::log1p(-2.0 * m.gamma) + m.gamma * sq;
}

double rn_weight(const MeasureSpec& m, std::span<const double> x) {
  const double e = log_rn_weight(m, x);
  check_exponent(e, "rn_weight");
  return std::exp(e);
}

std::optional<double> optimal_gamma(const KernelSpec& k) {
  if (const auto* p = k.gauss_exp_params()) return p->beta;
  return std::nullopt;
}

MixtureSampler::MixtureSampler(FeatureMap features) : features_(std::move(features)) {
  const auto& shape = features_.shape();
  const std::size_t m = features_.size();
  c_.resize(m);
  for (std::size_t i = 0; i < m; ++i) c_[i] = features_.feature_squared_norm(i);
  kappa_sq_ = features_.kappa_squared_norm();
  if (!(kappa_sq_ > 0.0) || !std::isfinite(kappa_sq_)) {
    throw CapabilityError("mixture sampler: ||kappa||^2 is not positive and finite");
  }
  for (auto& c : c_) c /= kappa_sq_;

  for (std::size_t i = 0; i < m; ++i) {
    for (int t = 0; t < shape.T; ++t) {
      const auto& poly = features_.feature(i).steps[static_cast<std::size_t>(t)];
      StepSampler s;
      if (poly.is_monomial()) {
        s.exponents = poly.terms()[0].exponents;
        const bool trivial =
            std::all_of(s.exponents.begin(), s.exponents.end(), [](int e) { return e == 0; });
        s.kind = trivial ? StepSampler::Kind::normal : StepSampler::Kind::gamma;
        if (poly.terms()[0].coef == 0.0) {
          throw CapabilityError("mixture sampler: zero step factor");
        }
      } else if (shape.d == 1) {
        // Inverse CDF of p(x)^2 phi(x) tabulated on [-10, 10].
        constexpr int kGrid = 4096;
        s.kind = StepSampler::Kind::table;
        s.grid.resize(kGrid);
        s.cdf.assign(kGrid, 0.0);
        double prev = 0.0;
        for (int g = 0; g < kGrid; ++g) {
          const double x = -10.0 + 20.0 * g / (kGrid - 1);
          s.grid[static_cast<std::size_t>(g)] = x;
          const double px = poly(std::span<const double>(&x, 1));
          const double dens = px * px * std::exp(-0.5 * x * x);
          if (g > 0) {
            s.cdf[static_cast<std::size_t>(g)] =
                s.cdf[static_cast<std::size_t>(g - 1)] + 0.5 * (prev + dens) * (20.0 / (kGrid - 1));
          }
          prev = dens;
        }
        const double total = s.cdf.back();
        if (!(total > 0.0) || !std::isfinite(total)) {
          throw CapabilityError("mixture sampler: step marginal is not normalizable");
        }
        for (auto& v : s.cdf) v /= total;
      } else {
        throw CapabilityError(
            "mixture sampler: multi-term step factors are supported only for d = 1");
      }
      steps_.push_back(std::move(s));
    }
  }

  // phi(x) must not vanish identically on a probe sample.
  std::mt19937_64 rng(derive_seed(0, SeedPurpose::probe, 0));
  std::normal_distribution<double> normal;
  std::vector<double> x(static_cast<std::size_t>(shape.size()));
  std::vector<double> phi(m);
  for (int p = 0; p < 10000; ++p) {
    for (auto& v : x) v = normal(rng);
    features_.eval_into(x, phi);
    double s = 0.0;
    for (double v : phi) s += v * v;
    if (s == 0.0) throw InputError("mixture sampler: feature vector vanishes on a probe draw");
  }
}

void MixtureSampler::draw_step(const StepSampler& s, std::mt19937_64& rng,
                               double* out) const {
  const int d = features_.shape().d;
  switch (s.kind) {
    case StepSampler::Kind::normal: {
      std::normal_distribution<double> normal;
      for (int k = 0; k < d; ++k) out[k] = normal(rng);
      break;
    }
    case StepSampler::Kind::gamma: {
      // Density of x_k proportional to x^{2e} exp(-x^2/2): x^2 ~ Gamma(e + 1/2, 2).
      std::uniform_int_distribution<int> coin(0, 1);
      for (int k = 0; k < d; ++k) {
        const int e = s.exponents[static_cast<std::size_t>(k)];
        if (e == 0) {
          out[k] = std::normal_distribution<double>()(rng);
          continue;
        }
        std::gamma_distribution<double> g(e + 0.5, 2.0);
        const double r = std::sqrt(g(rng));
        out[k] = coin(rng) ? r : -r;
      }
      break;
    }
    case StepSampler::Kind::table: {
      const double u = std::uniform_real_distribution<double>()(rng);
      auto it = std::upper_bound(s.cdf.begin(), s.cdf.end(), u);
      std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - s.cdf.begin()),
                                             s.cdf.size() - 1);
      std::size_t lo = hi == 0 ? 0 : hi - 1;
      const double span = s.cdf[hi] - s.cdf[lo];
      const double frac = span > 0.0 ? (u - s.cdf[lo]) / span : 0.0;
      out[0] = s.grid[lo] + frac * (s.grid[hi] - s.grid[lo]);
      break;
    }
  }
}

PathSet MixtureSampler::draw(std::size_t n, std::uint64_t seed) const {
  if (n == 0) throw InputError("mixture sampler: n must be >= 1");
  const auto& shape = features_.shape();
  PathSet out(shape, n);
  std::vector<double> cum(c_.size());
  std::partial_sum(c_.begin(), c_.end(), cum.begin());
  parallel_for(n, [&](std::size_t j) {
    std::mt19937_64 rng(stream_seed(seed, j));
    const double u = std::uniform_real_distribution<double>()(rng) * cum.back();
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()),
                                         cum.size() - 1);
    auto row = out.row(j);
    for (int t = 0; t < shape.T; ++t) {
      draw_step(steps_[i * static_cast<std::size_t>(shape.T) + static_cast<std::size_t>(t)],
                rng, row.data() + static_cast<std::size_t>(t * shape.d));
    }
  });
  return out;
}

double MixtureSampler::weight(std::span<const double> x) const {
  const auto phi = features_(x);
  double s = 0.0;
  for (double v : phi) s += v * v;
  return s / kappa_sq_;
}

MixtureSampler mixture_sampler(const FeatureMap& features) {
  return MixtureSampler(features);
}

std::vector<double> TrainingSet::weights() const {
  std::vector<double> w(log_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i]);
  return w;
}

std::vector<double> TrainingSet::tilted_values() const {
  std::vector<double> f(payoff_values.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = payoff_values[i] * std::exp(-0.5 * log_weights[i]);
  }
  return f;
}

void TrainingSet::validate() const {
  const auto n = paths.size();
  if (n == 0) throw InputError("training set is empty");
  if (payoff_values.size() != n || log_weights.size() != n) {
    throw InputError("training set: lengths of paths, payoffs and weights differ");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(payoff_values[i])) {
      throw DataError("training set: non-finite payoff at path " + std::to_string(i));
    }
    if (!std::isfinite(log_weights[i])) {
      throw DataError("training set: invalid weight at path " + std::to_string(i));
    }
  }
}

TrainingSet make_training_set(PathSet paths, std::vector<double> log_weights,
                              const PayoffFn& payoff, MeasureSpec m,
                              std::string payoff_id) {
  const auto n = paths.size();
  if (n == 0) throw InputError("training set: n must be >= 1");
  TrainingSet ts;
  ts.payoff_values.assign(n, 0.0);
  parallel_for(n, [&](std::size_t i) { ts.payoff_values[i] = payoff(paths.row(i)); });
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(ts.payoff_values[i])) {
      throw DataError("payoff returned a non-finite value at path " + std::to_string(i));
    }
  }
  ts.paths = std::move(paths);
  ts.log_weights = std::move(log_weights);
  ts.measure = m;
  ts.payoff_id = std::move(payoff_id);
  ts.payoff_calls = n;
  ts.validate();
  return ts;
}

TrainingSet build_training_set(const MeasureSpec& m, const PayoffFn& payoff,
                               std::size_t n, std::string payoff_id) {
  if (n == 0) throw InputError("build_training_set: n must be >= 1");
  auto paths = draw_paths(m, n);
  std::vector<double> lw(n);
  for (std::size_t i = 0; i < n; ++i) lw[i] = log_rn_weight(m, paths.row(i));
  return make_training_set(std::move(paths), std::move(lw), payoff, m,
                           std::move(payoff_id));
}

void write_training_csv(const TrainingSet& ts, std::ostream& os) {
  const auto& shape = ts.paths.shape();
  os << "path_id";
  for (int t = 1; t <= shape.T; ++t) {
    for (int k = 1; k <= shape.d; ++k) os << ",x_" << k << '_' << t;
  }
  os << ",payoff,weight\n";
  for (std::size_t i = 0; i < ts.size(); ++i) {
    os << i;
    for (double v : ts.paths.row(i)) os << ',' << io::format_double(v);
    os << ',' << io::format_double(ts.payoff_values[i]) << ','
       << io::format_double(std::exp(ts.log_weights[i])) << '\n';
  }
}

std::string training_csv(const TrainingSet& ts) {
  std::ostringstream ss;
  write_training_csv(ts, ss);
  return ss.str();
}

TrainingSet read_training_csv(std::istream& is, const MeasureSpec& m,
                              std::string payoff_id) {
  std::string line;
  if (!std::getline(is, line)) throw InputError("training CSV: missing header");
  const auto header = io::split_csv(line);
  const auto D = static_cast<std::size_t>(m.shape.size());
  if (header.size() != D + 3 || header.front() != "path_id" ||
      header[D + 1] != "payoff" || header[D + 2] != "weight") {
    throw InputError("training CSV: header does not match the path shape");
  }
  TrainingSet ts;
  ts.paths = PathSet(m.shape, 0);
  std::vector<double> row(D);
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = io::split_csv(line);
    if (cells.size() != D + 3) {
      throw InputError("training CSV: wrong column count on line " + std::to_string(line_no));
    }
    for (std::size_t k = 0; k < D; ++k) row[k] = io::parse_double(cells[k + 1]);
    ts.paths.push_back(row);
    ts.payoff_values.push_back(io::parse_double(cells[D + 1]));
    const double w = io::parse_double(cells[D + 2]);
    if (!(w > 0.0)) {
      throw DataError("training CSV: nonpositive weight on line " + std::to_string(line_no));
    }
    ts.log_weights.push_back(std::log(w));
  }
  ts.measure = m;
  ts.payoff_id = std::move(payoff_id);
  ts.validate();
  return ts;
}

}  // namespace kvp
