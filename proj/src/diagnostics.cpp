#include "kvp/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "kvp/io.hpp"
#include "kvp/simd.hpp"
#include "kvp/stats.hpp"

namespace kvp {

using json = nlohmann::json;

KernelSpec DiagnosticSetup::kernel() const {
  const Shape shape = market.shape();
  if (primal) return KernelSpec::features(FeatureMap::monomials(shape, primal_degree), gamma);
  return KernelSpec::gauss_exp(shape, alpha, beta, gamma);
}

MeasureSpec DiagnosticSetup::measure(std::uint64_t s) const {
  return MeasureSpec{gamma, market.shape(), s};
}

TrainingSet DiagnosticSetup::training_set(std::size_t size, std::uint64_t stream) const {
  return build_training_set(measure(derive_seed(seed, SeedPurpose::diagnostics, stream)),
                            payoff_fn(market, payoff), size, std::string(payoff_name(payoff)));
}

Estimator DiagnosticSetup::fit(const TrainingSet& ts) const {
  if (!(lambda > 0.0)) throw InputError("diagnostics require lambda > 0");
  const auto k = kernel();
  if (primal) return fit_primal(ts, *k.feature_map(), lambda);
  return fit_dual_unsorted(ts, k, lambda);
}

Estimator reference_estimator(const DiagnosticSetup& s, std::size_t n_ref,
                              const std::filesystem::path* cache) {
  if (n_ref < 4 * s.n) {
    throw InputError("reference_estimator: n_ref must be at least 4 n");
  }
  if (cache && std::filesystem::exists(*cache)) {
    auto est = Estimator::from_json(io::read_file(*cache));
    if (est.n() == n_ref && est.lambda() == s.lambda) return est;
  }
  const auto ts = build_training_set(s.measure(derive_seed(s.seed, SeedPurpose::reference, n_ref)),
                                     payoff_fn(s.market, s.payoff), n_ref,
                                     std::string(payoff_name(s.payoff)));
  auto est = s.fit(ts);
  if (cache) io::write_file(*cache, est.to_json());
  return est;
}

double h_inner(const Estimator& a, const Estimator& b) {
  if (a.mode() == FitMode::primal && b.mode() == FitMode::primal) {
    if (a.solution().size() != b.solution().size()) {
      throw InputError("h_inner: feature maps differ");
    }
    return simd::dot(a.solution().data(), b.solution().data(), a.solution().size());
  }
  if (a.mode() == FitMode::primal) return h_inner(b, a);
  // h_a = (1/n) sum_j a_j k~(., Y_j), so <h_a, h_b> = (1/n) sum_j a_j f~_b(Y_j).
  const auto& centers = a.centers();
  std::vector<double> fb(centers.size());
  parallel_for(centers.size(), [&](std::size_t j) {
    fb[j] = b.predict(centers.paths().row(j)) * std::exp(a.center_shift()[j]);
  });
  return simd::dot(a.eval_coefficients().data(), fb.data(), fb.size()) /
         static_cast<double>(a.n());
}

double h_distance(const Estimator& a, const Estimator& b, double b_self) {
  const double bb = b_self >= 0.0 ? b_self : h_inner(b, b);
  return std::sqrt(std::max(0.0, h_inner(a, a) - 2.0 * h_inner(a, b) + bb));
}

double mse_bound_value(double resid_kappa_l2, double jstar_h, double lambda, std::size_t n) {
  double num = resid_kappa_l2 * resid_kappa_l2 - jstar_h * jstar_h;
  if (num < 0.0) num = resid_kappa_l2 * resid_kappa_l2;
  return std::sqrt(num / static_cast<double>(n)) / lambda;
}

double c2_value(double resid_kappa_sup, double lambda) {
  const double c = 2.0 / lambda * resid_kappa_sup;
  return c * c;
}

namespace {

struct Probe {
  PathSet paths;
  std::vector<double> resid;      // f~ - f~_ref
  std::vector<double> kappa_sq;   // k~(z, z)
  std::vector<double> log_w;
};

double tilted_diag(const KernelSpec& k, std::span<const double> z, double log_w) {
  if (k.family() == KernelFamily::feature_map) {
    const auto phi = (*k.feature_map())(z);
    double s = 0.0;
    for (double v : phi) s += v * v;
    return s * std::exp(-log_w);
  }
  return k.diag(z) * std::exp(-log_w);
}

Probe make_probe(const DiagnosticSetup& s, const Estimator& ref, std::size_t n) {
  Probe p;
  const auto m = s.measure(derive_seed(s.seed, SeedPurpose::probe, 0));
  p.paths = draw_paths(m, n);
  p.resid.resize(n);
  p.kappa_sq.resize(n);
  p.log_w.resize(n);
  const auto k = s.kernel();
  parallel_for(n, [&](std::size_t i) {
    const auto z = p.paths.row(i);
    p.log_w[i] = log_rn_weight(m, z);
    const double scale = std::exp(-0.5 * p.log_w[i]);
    p.resid[i] = (payoff(s.market, s.payoff, z) - ref.predict(z)) * scale;
    p.kappa_sq[i] = tilted_diag(k, z, p.log_w[i]);
  });
  return p;
}

// U-statistic for ||(1/N) sum_i r_i k~(., z_i)||_H^2 without the diagonal.
double jstar_squared(const DiagnosticSetup& s, const Probe& p) {
  const auto k = s.kernel();
  if (k.family() == KernelFamily::feature_map) {
    const auto& fm = *k.feature_map();
    const auto n = p.paths.size();
    std::vector<double> sum(fm.size(), 0.0);
    double diag = 0.0;
    std::vector<double> phi(fm.size());
    for (std::size_t i = 0; i < n; ++i) {
      fm.eval_into(p.paths.row(i), phi);
      const double c = p.resid[i] * std::exp(-0.5 * p.log_w[i]);
      double sq = 0.0;
      for (std::size_t j = 0; j < phi.size(); ++j) {
        sum[j] += c * phi[j];
        sq += c * phi[j] * c * phi[j];
      }
      diag += sq;
    }
    double total = 0.0;
    for (double v : sum) total += v * v;
    const double nn = static_cast<double>(n);
    return (total - diag) / (nn * (nn - 1.0));
  }
  const auto N = std::min(s.n_embed, p.paths.size());
  PathSet pts(p.paths.shape(), 0);
  std::vector<double> shift(N);
  for (std::size_t i = 0; i < N; ++i) {
    pts.push_back(p.paths.row(i));
    shift[i] = -0.5 * p.log_w[i];
  }
  const KernelCenters centers(std::move(pts));
  std::vector<double> rows(N);
  parallel_for(N, [&](std::size_t i) {
    std::vector<double> row(N);
    k.row(centers.paths().row(i), shift[i], centers, 0, N, shift.data(), row.data());
    double acc = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      if (j != i) acc += p.resid[j] * row[j];
    }
    rows[i] = p.resid[i] * acc;
  });
  const double nn = static_cast<double>(N);
  return pairwise_sum(rows) / (nn * (nn - 1.0));
}

ResidualStats stats_from_probe(const DiagnosticSetup& s, const Probe& p) {
  ResidualStats r;
  const auto n = p.paths.size();
  std::vector<double> rk(n), kk(n);
  for (std::size_t i = 0; i < n; ++i) {
    rk[i] = p.resid[i] * p.resid[i] * p.kappa_sq[i];
    kk[i] = p.kappa_sq[i];
    r.resid_kappa_sup = std::max(r.resid_kappa_sup, std::sqrt(rk[i]));
    r.kappa_sup = std::max(r.kappa_sup, std::sqrt(kk[i]));
  }
  r.resid_kappa_l2 = std::sqrt(stats::mean(rk));
  r.kappa_l2 = std::sqrt(stats::mean(kk));
  r.jstar_h = std::sqrt(std::max(0.0, jstar_squared(s, p)));
  return r;
}

struct Refits {
  std::vector<double> h, l2;
};

Refits refit_errors(const DiagnosticSetup& s, const Estimator& ref, const Probe& p,
                    std::size_t n_repeats) {
  Refits out;
  const double ref_self = h_inner(ref, ref);
  const auto n_l2 = std::min(s.n_l2, p.paths.size());
  for (std::size_t r = 0; r < n_repeats; ++r) {
    const auto est = s.fit(s.training_set(s.n, r));
    out.h.push_back(h_distance(est, ref, ref_self));
    std::vector<double> sq(n_l2);
    parallel_for(n_l2, [&](std::size_t i) {
      const auto z = p.paths.row(i);
      // f~_X - f~_ref = (f - f~_ref) - (f - f~_X) in tilted units.
      const double d = est.predict(z) * std::exp(-0.5 * p.log_w[i]);
      const double ref_t = payoff(s.market, s.payoff, z) * std::exp(-0.5 * p.log_w[i]) - p.resid[i];
      sq[i] = (d - ref_t) * (d - ref_t);
    });
    out.l2.push_back(std::sqrt(stats::mean(sq)));
  }
  return out;
}

double rms(const std::vector<double>& v) {
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = v[i] * v[i];
  return std::sqrt(stats::mean(sq));
}

// Standard error of rms(v) by the delta method.
double rms_se(const std::vector<double>& v) {
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = v[i] * v[i];
  const double m = stats::mean(sq);
  return m > 0.0 ? stats::std_error(sq) / (2.0 * std::sqrt(m)) : 0.0;
}

void fill_common(BoundReport& b, const DiagnosticSetup& s, const Estimator& ref,
                 const ResidualStats& r, std::size_t n_repeats) {
  b.n = s.n;
  b.n_ref = ref.n();
  b.n_repeats = n_repeats;
  b.n_probe = s.n_probe;
  b.lambda = s.lambda;
  b.seed = s.seed;
  b.resid_kappa_l2 = r.resid_kappa_l2;
  b.jstar_h = s.drop_jstar ? 0.0 : r.jstar_h;
  b.jstar_dropped = s.drop_jstar;
  b.resid_kappa_sup = r.resid_kappa_sup;
  b.kappa_sup = r.kappa_sup;
  b.kappa_l2 = r.kappa_l2;
  b.mse_bound = mse_bound_value(b.resid_kappa_l2, b.jstar_h, s.lambda, s.n);
  constexpr double delta = 0.5;
  // ||(J^*J + lambda)^{-1}|| = 1/lambda for an infinite-dimensional H.
  b.mse_bound_truncated = b.mse_bound / (1.0 - delta);
  b.c2 = c2_value(r.resid_kappa_sup, s.lambda);
  b.c1 = b.c2 / ((1.0 - delta) * (1.0 - delta));
  const double k4 = std::pow(r.kappa_sup, 4.0);
  b.prob_s_lower = 1.0 - 2.0 * std::exp(-delta * delta * static_cast<double>(s.n) * s.lambda *
                                        s.lambda / (4.0 * k4));
}

}  // namespace

ResidualStats residual_stats(const DiagnosticSetup& s, const Estimator& ref) {
  return stats_from_probe(s, make_probe(s, ref, s.n_probe));
}

BoundReport mse_bound_check(const DiagnosticSetup& s, const Estimator& ref,
                            std::size_t n_repeats) {
  if (n_repeats < 2) throw InputError("mse_bound_check: need at least two repeats");
  const auto probe = make_probe(s, ref, s.n_probe);
  const auto r = stats_from_probe(s, probe);
  BoundReport b;
  b.name = "mse_bound";
  fill_common(b, s, ref, r, n_repeats);
  const auto fits = refit_errors(s, ref, probe, n_repeats);
  b.h_errors = fits.h;
  b.l2_errors = fits.l2;
  b.empirical_rms_h = rms(fits.h);
  b.empirical_rms_l2 = rms(fits.l2);
  const bool h_ok = b.empirical_rms_h <= b.mse_bound + 3.0 * rms_se(fits.h);
  const bool l2_ok = b.empirical_rms_l2 <= b.kappa_sup * b.mse_bound + 3.0 * rms_se(fits.l2);
  b.holds = h_ok && l2_ok;
  return b;
}

BoundReport concentration_check(const DiagnosticSetup& s, const Estimator& ref,
                                std::size_t n_repeats, std::vector<double> tau_grid) {
  if (n_repeats < 2) throw InputError("concentration_check: need at least two repeats");
  BoundReport b;
  b.name = "concentration";
  const auto k = s.kernel();
  b.applicable = k.family() == KernelFamily::feature_map ? s.gamma > 0.0
                                                        : k.tilt_conditions().bounded;
  if (!b.applicable) {
    b.n = s.n;
    b.lambda = s.lambda;
    b.seed = s.seed;
    return b;
  }
  const auto probe = make_probe(s, ref, s.n_probe);
  const auto r = stats_from_probe(s, probe);
  fill_common(b, s, ref, r, n_repeats);
  const auto fits = refit_errors(s, ref, probe, n_repeats);
  b.h_errors = fits.h;
  b.l2_errors = fits.l2;
  b.empirical_rms_h = rms(fits.h);
  b.empirical_rms_l2 = rms(fits.l2);
  if (tau_grid.empty()) {
    auto sorted = fits.h;
    std::sort(sorted.begin(), sorted.end());
    for (double q : {0.5, 0.9, 0.99}) {
      const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(sorted.size() - 1)));
      tau_grid.push_back(sorted[idx]);
    }
  }
  const double R = static_cast<double>(n_repeats);
  for (double tau : tau_grid) {
    const double theory =
        std::min(1.0, 2.0 * std::exp(-tau * tau * static_cast<double>(s.n) / (2.0 * b.c2)));
    std::size_t hits = 0;
    for (double h : fits.h) hits += h >= tau ? 1 : 0;
    const double freq = static_cast<double>(hits) / R;
    const bool ok = freq <= theory + 3.0 * std::sqrt(theory * (1.0 - theory) / R);
    b.tau.push_back(tau);
    b.bound_prob.push_back(theory);
    b.empirical_freq.push_back(freq);
    b.tau_ok.push_back(ok);
    b.holds = b.holds && ok;
  }
  return b;
}

NormalityReport clt_experiment(const DiagnosticSetup& s, const Estimator& ref,
                               std::size_t n_repeats, std::vector<double> probe) {
  check_shape(s.market.shape(), probe, "clt_experiment probe");
  NormalityReport rep;
  rep.n = s.n;
  rep.n_repeats = n_repeats;
  rep.probe = probe;
  const auto k = s.kernel();
  if (!k.tilt_conditions().fourth_moment) {
    throw InputError("clt_experiment: kernel violates the fourth-moment condition");
  }
  const double lw = log_rn_weight(s.measure(0), probe);
  const double ref_z = ref.predict(probe) * std::exp(-0.5 * lw);
  const double root_n = std::sqrt(static_cast<double>(s.n));
  for (std::size_t r = 0; r < n_repeats; ++r) {
    const auto est = s.fit(s.training_set(s.n, r));
    rep.statistic.push_back(root_n * (est.predict(probe) * std::exp(-0.5 * lw) - ref_z));
  }
  rep.kappa_z = std::sqrt(tilted_diag(k, probe, lw));
  rep.c2 = c2_value(residual_stats(s, ref).resid_kappa_sup, s.lambda);
  rep.mean = stats::mean(rep.statistic);
  if (n_repeats < 8) {
    rep.degenerate = true;
    return rep;
  }
  rep.variance = stats::stddev(rep.statistic) * stats::stddev(rep.statistic);
  rep.std_error = stats::std_error(rep.statistic);
  const auto ad = stats::anderson_darling_normal(rep.statistic);
  rep.ad_statistic = ad.a2_star;
  rep.mean_ok = std::abs(rep.mean) <= 3.0 * rep.std_error;
  rep.normal_ok = !ad.reject_1pct;
  rep.q_proxy = rep.variance / (rep.kappa_z * rep.kappa_z);
  const double q_sd = rep.q_proxy * std::sqrt(2.0 / static_cast<double>(n_repeats - 1));
  rep.q_ok = rep.q_proxy <= rep.c2 / 4.0 + 3.0 * q_sd;
  rep.holds = rep.mean_ok && rep.normal_ok && rep.q_ok;
  return rep;
}

RobustnessReport robustness_check(const DiagnosticSetup& s, double epsilon,
                                  std::size_t n_repeats) {
  if (n_repeats < 1) throw InputError("robustness_check: need at least one repeat");
  RobustnessReport rep;
  rep.epsilon = epsilon;
  rep.n_repeats = n_repeats;
  const auto k = s.kernel();
  const auto D = static_cast<double>(s.market.shape().size());
  if (k.family() == KernelFamily::feature_map) {
    rep.kappa_l2 = std::sqrt(k.feature_map()->kappa_squared_norm());
  } else {
    // E_mu[exp(beta ||X||^2)] = (1 - 2 beta)^{-D/2}.
    rep.kappa_l2 = std::pow(1.0 - 2.0 * s.beta, -D / 4.0);
  }
  {
    const auto m = s.measure(derive_seed(s.seed, SeedPurpose::probe, 1));
    const auto pts = draw_paths(m, std::min<std::size_t>(s.n_probe, 100000));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      rep.kappa_sup = std::max(
          rep.kappa_sup, std::sqrt(tilted_diag(k, pts.row(i), log_rn_weight(m, pts.row(i)))));
    }
  }
  // ||f~ - f~'||_{2, tilted} = ||f - f'||_{2,mu} = |epsilon| for a constant shift.
  rep.perturbation_l2 = std::abs(epsilon);
  for (std::size_t r = 0; r < n_repeats; ++r) {
    auto ts = s.training_set(s.n, r);
    // h_X - h'_X is the fit of f - f' on the same sample.
    std::fill(ts.payoff_values.begin(), ts.payoff_values.end(), -epsilon);
    double d = 0.0;
    if (epsilon != 0.0) {
      const auto est = s.fit(ts);
      d = std::sqrt(std::max(0.0, h_inner(est, est)));
    }
    rep.diffs.push_back(d);
  }
  rep.mean_diff = stats::mean(rep.diffs);
  rep.rms_diff = rms(rep.diffs);
  rep.bound_mean = rep.kappa_l2 * rep.perturbation_l2 / s.lambda;
  rep.bound_rms = rep.kappa_sup * rep.perturbation_l2 / s.lambda;
  rep.holds = rep.mean_diff <= rep.bound_mean && rep.rms_diff <= rep.bound_rms;
  return rep;
}

std::string BoundReport::to_json() const {
  json j;
  j["name"] = name;
  j["inputs"] = {{"n", n}, {"n_ref", n_ref}, {"n_repeats", n_repeats}, {"n_probe", n_probe},
                 {"lambda", lambda}, {"seed", seed}};
  j["applicable"] = applicable;
  j["reference_note"] = reference_note;
  j["s_truncation_note"] =
      "S-truncated quantities use delta = 0.5 with the S indicator taken as 1; reported, not asserted";
  j["resid_kappa_l2"] = resid_kappa_l2;
  j["jstar_h"] = jstar_h;
  j["jstar_dropped"] = jstar_dropped;
  j["resid_kappa_sup"] = resid_kappa_sup;
  j["kappa_sup"] = kappa_sup;
  j["kappa_l2"] = kappa_l2;
  j["mse_bound"] = mse_bound;
  j["mse_bound_truncated"] = mse_bound_truncated;
  j["c1"] = c1;
  j["c2"] = c2;
  j["prob_s_lower"] = prob_s_lower;
  j["empirical_rms_h"] = empirical_rms_h;
  j["empirical_rms_l2"] = empirical_rms_l2;
  j["h_errors"] = h_errors;
  j["l2_errors"] = l2_errors;
  j["tau"] = tau;
  j["bound_prob"] = bound_prob;
  j["empirical_freq"] = empirical_freq;
  j["tau_ok"] = tau_ok;
  j["holds"] = holds;
  return j.dump(1);
}

std::string NormalityReport::to_json() const {
  json j;
  j["inputs"] = {{"n", n}, {"n_repeats", n_repeats}, {"probe", probe}};
  j["mean"] = mean;
  j["variance"] = variance;
  j["std_error"] = std_error;
  j["anderson_darling_a2_star"] = ad_statistic;
  j["degenerate"] = degenerate;
  j["mean_ok"] = mean_ok;
  j["normal_ok"] = normal_ok;
  j["kappa_z"] = kappa_z;
  j["c2"] = c2;
  j["q_proxy"] = q_proxy;
  j["q_ok"] = q_ok;
  j["holds"] = holds;
  j["statistic"] = statistic;
  return j.dump(1);
}

std::string RobustnessReport::to_json() const {
  json j;
  j["inputs"] = {{"epsilon", epsilon}, {"n_repeats", n_repeats}};
  j["diffs"] = diffs;
  j["mean_diff"] = mean_diff;
  j["rms_diff"] = rms_diff;
  j["kappa_l2"] = kappa_l2;
  j["kappa_sup"] = kappa_sup;
  j["perturbation_l2"] = perturbation_l2;
  j["bound_mean"] = bound_mean;
  j["bound_rms"] = bound_rms;
  j["holds"] = holds;
  return j.dump(1);
}

}  // namespace kvp
