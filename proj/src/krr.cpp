#include "kvp/krr.hpp"

#include <cmath>
#include <cstring>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "kvp/io.hpp"
#include "kvp/simd.hpp"

namespace kvp {

using json = nlohmann::json;

namespace {

constexpr double kMinRcond = 1e-12;

void check_lambda(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw InputError("regularization parameter lambda must be finite and >= 0");
  }
}

void check_size(std::size_t n) {
  if (n > kMaxDualSize) {
    throw CapabilityError("dual fit refuses n = " + std::to_string(n) + " > " +
                          std::to_string(kMaxDualSize) +
                          " (dense n x n system); use the primal solver");
  }
}

void check_finite(const Eigen::MatrixXd& a, const char* what) {
  if (!a.allFinite()) throw DataError(std::string(what) + " has a non-finite entry");
}

// Cholesky factor of a + lambda I, or SolverError with the estimated
// reciprocal condition number.
Eigen::LLT<Eigen::MatrixXd> spd_factor(Eigen::MatrixXd a, double lambda) {
  a.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    const double rc = Eigen::LDLT<Eigen::MatrixXd>(a).rcond();
    throw SolverError("Cholesky factorization failed at lambda = " + std::to_string(lambda) +
                          " (estimated rcond " + std::to_string(rc) + ")",
                      rc);
  }
  if (lambda == 0.0) {
    const double rc = llt.rcond();
    if (!(rc > kMinRcond)) {
      throw SolverError("system matrix is numerically singular at lambda = 0 (rcond " +
                            std::to_string(rc) + ")",
                        rc);
    }
  }
  return llt;
}

struct Grouped {
  PathSet paths;
  std::vector<std::size_t> mult;
  std::vector<double> log_w;
  std::vector<double> f_tilde;  // mean over the group
};

Grouped group_duplicates(const TrainingSet& ts, bool merge) {
  Grouped g;
  g.paths = PathSet(ts.paths.shape(), 0);
  const auto D = static_cast<std::size_t>(ts.paths.shape().size());
  std::unordered_map<std::string, std::size_t> index;
  const auto f = ts.tilted_values();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    auto row = ts.paths.row(i);
    if (merge) {
      std::string key(reinterpret_cast<const char*>(row.data()), D * sizeof(double));
      auto [it, fresh] = index.emplace(std::move(key), g.mult.size());
      if (!fresh) {
        const auto k = it->second;
        g.f_tilde[k] += f[i];
        ++g.mult[k];
        continue;
      }
    }
    g.paths.push_back(row);
    g.mult.push_back(1);
    g.log_w.push_back(ts.log_weights[i]);
    g.f_tilde.push_back(f[i]);
  }
  for (std::size_t k = 0; k < g.mult.size(); ++k) g.f_tilde[k] /= static_cast<double>(g.mult[k]);
  return g;
}

json kernel_json(const KernelSpec& k) {
  json j;
  j["gamma"] = k.gamma();
  j["d"] = k.shape().d;
  j["T"] = k.shape().T;
  if (const auto* p = k.gauss_exp_params()) {
    j["family"] = "gauss_exp";
    j["alpha"] = p->alpha;
    j["beta"] = p->beta;
  } else if (const auto* p = k.gauss_poly_params()) {
    j["family"] = "gauss_poly";
    j["alpha"] = p->alpha;
    j["degree"] = p->degree;
  } else {
    j["family"] = "feature_map";
    json feats = json::array();
    const auto& fm = *k.feature_map();
    for (std::size_t i = 0; i < fm.size(); ++i) {
      json steps = json::array();
      for (const auto& poly : fm.feature(i).steps) {
        json terms = json::array();
        for (const auto& m : poly.terms()) {
          terms.push_back({{"coef", m.coef}, {"exponents", m.exponents}});
        }
        steps.push_back(terms);
      }
      feats.push_back(steps);
    }
    j["features"] = feats;
  }
  return j;
}

KernelSpec kernel_from_json(const json& j) {
  const Shape shape{j.at("d").get<int>(), j.at("T").get<int>()};
  const double gamma = j.at("gamma").get<double>();
  const auto family = j.at("family").get<std::string>();
  if (family == "gauss_exp") {
    return KernelSpec::gauss_exp(shape, j.at("alpha"), j.at("beta"), gamma);
  }
  if (family == "gauss_poly") {
    return KernelSpec::gauss_poly(shape, j.at("alpha"), j.at("degree").get<int>(), gamma);
  }
  if (family != "feature_map") throw InputError("unknown kernel family '" + family + "'");
  std::vector<ProductFeature> feats;
  for (const auto& fj : j.at("features")) {
    ProductFeature f;
    for (const auto& sj : fj) {
      std::vector<Monomial> terms;
      for (const auto& tj : sj) {
        terms.push_back({tj.at("coef").get<double>(), tj.at("exponents").get<std::vector<int>>()});
      }
      f.steps.emplace_back(shape.d, std::move(terms));
    }
    feats.push_back(std::move(f));
  }
  return KernelSpec::features(FeatureMap(shape, std::move(feats)), gamma);
}

}  // namespace

// ---------------------------------------------------------------------------
// Estimator

double Estimator::predict(std::span<const double> x) const {
  check_shape(kernel_->shape(), x, "predict");
  if (mode_ == FitMode::primal) {
    const auto phi = (*kernel_->feature_map())(x);
    return simd::dot(phi.data(), solution_.data(), phi.size());
  }
  const auto m = centers_->size();
  std::vector<double> k(m);
  kernel_->row(x, 0.0, *centers_, 0, m, shift_.data(), k.data());
  return simd::dot(k.data(), coef_.data(), m) / static_cast<double>(n_);
}

std::vector<double> Estimator::predict(const PathSet& xs) const {
  std::vector<double> out(xs.size());
  parallel_for(xs.size(), [&](std::size_t i) { out[i] = predict(xs.row(i)); });
  return out;
}

double Estimator::predict_tilted(std::span<const double> x) const {
  return predict(x) * std::exp(-0.5 * log_rn_weight(measure_, x));
}

std::string Estimator::to_json() const {
  json j;
  j["mode"] = mode_ == FitMode::dual ? "dual" : "primal";
  j["lambda"] = lambda_;
  j["n"] = n_;
  j["kernel"] = kernel_json(*kernel_);
  j["measure"] = {{"gamma", measure_.gamma},
                  {"d", measure_.shape.d},
                  {"T", measure_.shape.T},
                  {"seed", measure_.seed}};
  j["solution"] = solution_;
  if (mode_ == FitMode::dual) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < centers_->size(); ++i) {
      auto r = centers_->paths().row(i);
      rows.emplace_back(r.begin(), r.end());
    }
    j["centers"] = rows;
    j["center_log_weights"] = [&] {
      std::vector<double> lw(shift_.size());
      for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = -2.0 * shift_[i];
      return lw;
    }();
    j["multiplicities"] = mult_;
  }
  j["training_sha256"] = training_sha256_;
  return j.dump(1);
}

Estimator Estimator::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("estimator JSON: ") + e.what());
  }
  try {
    Estimator est;
    const auto mode = j.at("mode").get<std::string>();
    if (mode != "dual" && mode != "primal") throw InputError("estimator JSON: bad mode");
    est.mode_ = mode == "dual" ? FitMode::dual : FitMode::primal;
    est.lambda_ = j.at("lambda");
    est.n_ = j.at("n");
    est.kernel_ = std::make_shared<const KernelSpec>(kernel_from_json(j.at("kernel")));
    const auto& mj = j.at("measure");
    est.measure_ = MeasureSpec{mj.at("gamma"), Shape{mj.at("d"), mj.at("T")},
                               mj.at("seed").get<std::uint64_t>()};
    est.solution_ = j.at("solution").get<std::vector<double>>();
    est.training_sha256_ = j.value("training_sha256", "");
    if (est.mode_ == FitMode::dual) {
      const auto rows = j.at("centers").get<std::vector<std::vector<double>>>();
      PathSet ps(est.kernel_->shape(), 0);
      for (const auto& r : rows) ps.push_back(r);
      est.centers_ = std::make_shared<const KernelCenters>(std::move(ps));
      for (double lw : j.at("center_log_weights").get<std::vector<double>>()) {
        est.shift_.push_back(-0.5 * lw);
      }
      est.mult_ = j.at("multiplicities").get<std::vector<std::size_t>>();
      if (est.mult_.size() != rows.size() || est.shift_.size() != rows.size() ||
          est.solution_.size() != rows.size()) {
        throw InputError("estimator JSON: inconsistent center arrays");
      }
      for (std::size_t i = 0; i < rows.size(); ++i) {
        est.coef_.push_back(std::sqrt(static_cast<double>(est.mult_[i])) * est.solution_[i]);
      }
    }
    return est;
  } catch (const json::exception& e) {
    throw InputError(std::string("estimator JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Dual system

DualSystem::DualSystem(const TrainingSet& ts, const KernelSpec& kernel, bool sorted) {
  ts.validate();
  if (!(kernel.shape() == ts.paths.shape())) {
    throw InputError("kernel and training set have different path shapes");
  }
  auto g = group_duplicates(ts, sorted);
  const auto m = g.mult.size();
  check_size(m);
  kernel_ = std::make_shared<const KernelSpec>(kernel);
  measure_ = ts.measure;
  n_ = ts.size();
  mult_ = std::move(g.mult);
  shift_.resize(m);
  for (std::size_t i = 0; i < m; ++i) shift_[i] = -0.5 * g.log_w[i];
  centers_ = std::make_shared<const KernelCenters>(std::move(g.paths));
  sha_ = io::sha256_hex(training_csv(ts));

  std::vector<double> root(m);
  for (std::size_t i = 0; i < m; ++i) root[i] = std::sqrt(static_cast<double>(mult_[i]));

  gram_.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  rhs_.resize(static_cast<Eigen::Index>(m));
  const auto& centers = *centers_;
  parallel_for(m, [&](std::size_t i) {
    std::vector<double> row(i + 1);
    kernel_->row(centers.paths().row(i), shift_[i], centers, 0, i + 1, shift_.data(),
                 row.data());
    for (std::size_t j = 0; j <= i; ++j) {
      gram_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          root[i] * row[j] * root[j];
    }
  });
  gram_.triangularView<Eigen::StrictlyUpper>() = gram_.transpose();
  for (std::size_t i = 0; i < m; ++i) {
    rhs_(static_cast<Eigen::Index>(i)) = root[i] * g.f_tilde[i];
  }
  check_finite(gram_, "tilted Gram matrix");
  check_finite(rhs_, "tilted payoff vector");
}

Eigen::LLT<Eigen::MatrixXd> DualSystem::factor(double lambda) const {
  check_lambda(lambda);
  return spd_factor(gram_ / static_cast<double>(n_), lambda);
}

Eigen::VectorXd DualSystem::solve_rhs(double lambda, const Eigen::VectorXd& rhs) const {
  if (rhs.size() != gram_.rows()) throw InputError("solve_rhs: right-hand side has wrong size");
  return factor(lambda).solve(rhs);
}

Estimator DualSystem::solve(double lambda) const {
  const Eigen::VectorXd g = factor(lambda).solve(rhs_);
  if (!g.allFinite()) throw DataError("dual solve produced non-finite coefficients");
  Estimator est;
  est.mode_ = FitMode::dual;
  est.lambda_ = lambda;
  est.kernel_ = kernel_;
  est.measure_ = measure_;
  est.n_ = n_;
  est.centers_ = centers_;
  est.shift_ = shift_;
  est.solution_.assign(g.data(), g.data() + g.size());
  est.mult_ = mult_;
  est.coef_.resize(est.solution_.size());
  for (std::size_t i = 0; i < est.coef_.size(); ++i) {
    est.coef_[i] = std::sqrt(static_cast<double>(mult_[i])) * est.solution_[i];
  }
  est.training_sha256_ = sha_;
  return est;
}

double DualSystem::residual(double lambda, const Eigen::VectorXd& g) const {
  const Eigen::VectorXd r = gram_ * g / static_cast<double>(n_) + lambda * g - rhs_;
  const double scale = rhs_.norm();
  return scale > 0.0 ? r.norm() / scale : r.norm();
}

double DualSystem::h_norm(const Eigen::VectorXd& a) const {
  return std::sqrt(std::max(0.0, a.dot(gram_ * a)));
}

Estimator fit_dual_unsorted(const TrainingSet& ts, const KernelSpec& kernel, double lambda) {
  check_lambda(lambda);
  return DualSystem(ts, kernel, false).solve(lambda);
}

Estimator fit_dual_sorted(const TrainingSet& ts, const KernelSpec& kernel, double lambda) {
  check_lambda(lambda);
  return DualSystem(ts, kernel, true).solve(lambda);
}

// ---------------------------------------------------------------------------
// Primal

namespace {

struct PrimalSystem {
  Eigen::MatrixXd gram;  // (1/n) V^T V
  Eigen::VectorXd rhs;   // (1/n) V^T f
};

PrimalSystem primal_system(const TrainingSet& ts, const FeatureMap& features) {
  ts.validate();
  if (!(features.shape() == ts.paths.shape())) {
    throw InputError("feature map and training set have different path shapes");
  }
  const auto n = ts.size();
  const auto m = features.size();
  Eigen::MatrixXd v(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  const auto f = ts.tilted_values();
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> phi(m);
    features.eval_into(ts.paths.row(i), phi);
    const double s = std::exp(-0.5 * ts.log_weights[i]);
    for (std::size_t k = 0; k < m; ++k) {
      v(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = phi[k] * s;
    }
  });
  check_finite(v, "tilted design matrix");
  const Eigen::Map<const Eigen::VectorXd> fv(f.data(), static_cast<Eigen::Index>(n));
  PrimalSystem sys;
  sys.gram = v.transpose() * v / static_cast<double>(n);
  sys.rhs = v.transpose() * fv / static_cast<double>(n);
  return sys;
}

}  // namespace

Estimator fit_primal(const TrainingSet& ts, const FeatureMap& features, double lambda) {
  check_lambda(lambda);
  const auto sys = primal_system(ts, features);
  const Eigen::VectorXd h = spd_factor(sys.gram, lambda).solve(sys.rhs);
  if (!h.allFinite()) throw DataError("primal solve produced non-finite coefficients");
  Estimator est;
  est.mode_ = FitMode::primal;
  est.lambda_ = lambda;
  est.kernel_ = std::make_shared<const KernelSpec>(KernelSpec::features(features, ts.measure.gamma));
  est.measure_ = ts.measure;
  est.n_ = ts.size();
  est.solution_.assign(h.data(), h.data() + h.size());
  est.training_sha256_ = io::sha256_hex(training_csv(ts));
  return est;
}

double normal_equation_residual(const Estimator& est, const TrainingSet& ts) {
  const Eigen::Map<const Eigen::VectorXd> x(est.solution().data(),
                                            static_cast<Eigen::Index>(est.solution().size()));
  if (est.mode() == FitMode::primal) {
    const auto sys = primal_system(ts, *est.kernel().feature_map());
    const Eigen::VectorXd r = sys.gram * x + est.lambda() * x - sys.rhs;
    const double scale = sys.rhs.norm();
    return scale > 0.0 ? r.norm() / scale : r.norm();
  }
  bool sorted = est.centers().size() != ts.size();
  for (auto m : est.multiplicities()) sorted = sorted || m > 1;
  const DualSystem sys(ts, est.kernel(), sorted);
  if (sys.size() != est.solution().size()) {
    throw InputError("normal_equation_residual: estimator was not fitted on this training set");
  }
  return sys.residual(est.lambda(), x);
}

RegularizationPath regularization_path(const TrainingSet& ts, const KernelSpec& kernel,
                                       const std::vector<double>& lambdas,
                                       const PathSet* eval_points) {
  if (lambdas.empty()) throw InputError("regularization_path: empty lambda list");
  for (std::size_t i = 1; i < lambdas.size(); ++i) {
    if (!(lambdas[i] < lambdas[i - 1])) {
      throw InputError("regularization_path: lambdas must be strictly descending");
    }
  }
  RegularizationPath out;
  out.lambdas = lambdas;
  const bool primal = kernel.family() == KernelFamily::feature_map;
  std::unique_ptr<DualSystem> sys;
  if (!primal) sys = std::make_unique<DualSystem>(ts, kernel);
  auto fit = [&](double lambda) {
    return primal ? fit_primal(ts, *kernel.feature_map(), lambda) : sys->solve(lambda);
  };
  for (double l : lambdas) out.fits.push_back(fit(l));
  if (!eval_points) return out;

  const auto f0 = fit(0.0).predict(*eval_points);
  std::vector<double> lx, ly;
  for (const auto& est : out.fits) {
    const auto fl = est.predict(*eval_points);
    double s = 0.0;
    for (std::size_t i = 0; i < fl.size(); ++i) s += (fl[i] - f0[i]) * (fl[i] - f0[i]);
    const double err = std::sqrt(s / static_cast<double>(fl.size()));
    out.errors.push_back(err);
    if (err > 0.0) {
      lx.push_back(std::log(est.lambda()));
      ly.push_back(std::log(err));
    }
  }
  if (lx.size() >= 2) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      mx += lx[i];
      my += ly[i];
    }
    mx /= static_cast<double>(lx.size());
    my /= static_cast<double>(lx.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sxy += (lx[i] - mx) * (ly[i] - my);
      sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    out.slope = sxy / sxx;
  }
  return out;
}

}  // namespace kvp
