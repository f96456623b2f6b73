#include "kvp/feature_map.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>

namespace kvp {

double gaussian_moment(int k) {
  if (k < 0) throw InputError("gaussian_moment: negative order");
  if (k % 2 == 1) return 0.0;
  double m = 1.0;
  for (int j = k - 1; j > 1; j -= 2) m *= j;
  return m;
}

namespace {

double binomial(int n, int k) {
  double c = 1.0;
  for (int j = 1; j <= k; ++j) c = c * (n - k + j) / j;
  return c;
}

double ipow(double x, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= x;
  return r;
}

// Multi-indices over `dim` coordinates with total degree <= max_degree, in
// graded lexicographic order (degree 0 first).
void enumerate_indices(int dim, int max_degree,
                       std::vector<std::vector<int>>& out) {
  for (int total = 0; total <= max_degree; ++total) {
    std::vector<int> idx(static_cast<std::size_t>(dim), 0);
    // Compositions of `total` into `dim` nonnegative parts.
    std::function<void(int, int)> rec = [&](int pos, int left) {
      if (pos == dim - 1) {
        idx[static_cast<std::size_t>(pos)] = left;
        out.push_back(idx);
        return;
      }
      for (int v = left; v >= 0; --v) {
        idx[static_cast<std::size_t>(pos)] = v;
        rec(pos + 1, left - v);
      }
    };
    rec(0, total);
  }
}

// Splits a multi-index over d*T coordinates into T step monomials.
ProductFeature product_monomial(const Shape& shape, const std::vector<int>& idx,
                                double coef) {
  ProductFeature f;
  for (int t = 0; t < shape.T; ++t) {
    std::vector<int> e(idx.begin() + t * shape.d,
                       idx.begin() + (t + 1) * shape.d);
    f.steps.push_back(StepPolynomial::monomial(std::move(e), t == 0 ? coef : 1.0));
  }
  return f;
}

}  // namespace

StepPolynomial::StepPolynomial(int d, std::vector<Monomial> terms)
    : d_(d), terms_(std::move(terms)) {
  if (d_ < 1) throw InputError("StepPolynomial: dimension must be >= 1");
  if (terms_.empty()) throw InputError("StepPolynomial: no terms");
  for (const auto& m : terms_) {
    if (m.exponents.size() != static_cast<std::size_t>(d_)) {
      throw InputError("StepPolynomial: exponent vector has wrong length");
    }
    for (int e : m.exponents) {
      if (e < 0) throw InputError("StepPolynomial: negative exponent");
    }
    if (!std::isfinite(m.coef)) {
      throw InputError("StepPolynomial: non-finite coefficient");
    }
  }
}

StepPolynomial StepPolynomial::constant(int d, double c) {
  return StepPolynomial(d, {Monomial{c, std::vector<int>(static_cast<std::size_t>(d), 0)}});
}

StepPolynomial StepPolynomial::monomial(std::vector<int> exponents, double coef) {
  const int d = static_cast<int>(exponents.size());
  return StepPolynomial(d, {Monomial{coef, std::move(exponents)}});
}

int StepPolynomial::degree() const {
  int deg = 0;
  for (const auto& m : terms_) {
    int s = 0;
    for (int e : m.exponents) s += e;
    deg = std::max(deg, s);
  }
  return deg;
}

double StepPolynomial::operator()(std::span<const double> x) const {
  double s = 0.0;
  for (const auto& m : terms_) {
    double v = m.coef;
    for (int k = 0; k < d_; ++k) {
      v *= ipow(x[static_cast<std::size_t>(k)], m.exponents[static_cast<std::size_t>(k)]);
    }
    s += v;
  }
  return s;
}

double StepPolynomial::gaussian_mean() const {
  double s = 0.0;
  for (const auto& m : terms_) {
    double v = m.coef;
    for (int e : m.exponents) v *= gaussian_moment(e);
    s += v;
  }
  return s;
}

double StepPolynomial::gaussian_second_moment() const {
  double s = 0.0;
  for (const auto& u : terms_) {
    for (const auto& v : terms_) {
      double p = u.coef * v.coef;
      for (int k = 0; k < d_; ++k) {
        p *= gaussian_moment(u.exponents[static_cast<std::size_t>(k)] +
                             v.exponents[static_cast<std::size_t>(k)]);
      }
      s += p;
    }
  }
  return s;
}

double StepPolynomial::shifted_gaussian_mean(std::span<const double> y, double a,
                                             double b) const {
  double s = 0.0;
  for (const auto& m : terms_) {
    double v = m.coef;
    for (int k = 0; k < d_; ++k) {
      const int e = m.exponents[static_cast<std::size_t>(k)];
      const double ay = a * y[static_cast<std::size_t>(k)];
      double acc = 0.0;
      for (int j = 0; j <= e; j += 2) {
        acc += binomial(e, j) * ipow(ay, e - j) * ipow(b, j) * gaussian_moment(j);
      }
      v *= acc;
    }
    s += v;
  }
  return s;
}

StepPolynomial StepPolynomial::scaled(double c) const {
  auto terms = terms_;
  for (auto& m : terms) m.coef *= c;
  return StepPolynomial(d_, std::move(terms));
}

FeatureMap::FeatureMap(Shape shape, std::vector<ProductFeature> features)
    : shape_(shape), features_(std::move(features)) {
  shape_.validate();
  if (features_.empty()) throw InputError("FeatureMap: no features");
  const auto T = static_cast<std::size_t>(shape_.T);
  step_means_.resize(features_.size() * T);
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const auto& f = features_[i];
    if (f.steps.size() != T) {
      throw InputError("FeatureMap: feature " + std::to_string(i) +
                       " has the wrong number of step factors");
    }
    for (std::size_t t = 0; t < T; ++t) {
      if (f.steps[t].dim() != shape_.d) {
        throw InputError("FeatureMap: step factor dimension mismatch");
      }
      step_means_[i * T + t] = f.steps[t].gaussian_mean();
      if (!std::isfinite(step_means_[i * T + t])) {
        throw InputError("FeatureMap: non-finite Gaussian step mean");
      }
    }
  }

  // Linear independence on a probe sample.
  const std::size_t m = features_.size();
  const std::size_t probes = 10 * m + 50;
  std::mt19937_64 rng(0x5eedf00dULL);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m),
                                               static_cast<Eigen::Index>(m));
  std::vector<double> x(static_cast<std::size_t>(shape_.size()));
  Eigen::VectorXd phi(static_cast<Eigen::Index>(m));
  for (std::size_t p = 0; p < probes; ++p) {
    for (auto& v : x) v = normal(rng);
    eval_into(x, std::span<double>(phi.data(), m));
    gram.selfadjointView<Eigen::Lower>().rankUpdate(phi);
  }
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(hi > 0.0) || lo <= 1e-12 * hi) {
    throw InputError("FeatureMap: features are not linearly independent on the probe sample");
  }
}

FeatureMap FeatureMap::monomials(Shape shape, int max_degree) {
  shape.validate();
  if (max_degree < 0) throw InputError("FeatureMap::monomials: negative degree");
  std::vector<std::vector<int>> idx;
  enumerate_indices(shape.size(), max_degree, idx);
  std::vector<ProductFeature> features;
  for (const auto& m : idx) features.push_back(product_monomial(shape, m, 1.0));
  return FeatureMap(shape, std::move(features));
}

FeatureMap FeatureMap::polynomial_kernel(Shape shape, int degree) {
  shape.validate();
  if (degree < 0) throw InputError("polynomial kernel degree must be >= 0");
  if (degree > 4 || shape.size() > 8) {
    throw CapabilityError(
        "polynomial feature expansion supports degree <= 4 and d*T <= 8");
  }
  std::vector<std::vector<int>> idx;
  enumerate_indices(shape.size(), degree, idx);
  std::vector<ProductFeature> features;
  for (const auto& m : idx) {
    // (1 + x^T y)^b = sum_m b! / ((b - |m|)! prod m_k!) prod (x_k y_k)^{m_k}
    int total = 0;
    double denom = 1.0;
    for (int e : m) {
      total += e;
      for (int j = 2; j <= e; ++j) denom *= j;
    }
    double num = 1.0;
    for (int j = degree - total + 1; j <= degree; ++j) num *= j;
    features.push_back(product_monomial(shape, m, std::sqrt(num / denom)));
  }
  return FeatureMap(shape, std::move(features));
}

std::vector<double> FeatureMap::operator()(std::span<const double> x) const {
  std::vector<double> out(features_.size());
  eval_into(x, out);
  return out;
}

void FeatureMap::eval_into(std::span<const double> x, std::span<double> out) const {
  check_shape(shape_, x, "FeatureMap");
  const auto d = static_cast<std::size_t>(shape_.d);
  for (std::size_t i = 0; i < features_.size(); ++i) {
    double v = 1.0;
    for (int t = 0; t < shape_.T; ++t) {
      v *= features_[i].steps[static_cast<std::size_t>(t)](
          x.subspan(static_cast<std::size_t>(t) * d, d));
    }
    out[i] = v;
  }
}

std::vector<double> FeatureMap::cond_expect(std::span<const double> prefix,
                                            int t) const {
  if (t < 0 || t > shape_.T) {
    throw InputError("FeatureMap::cond_expect: time index out of range");
  }
  const auto d = static_cast<std::size_t>(shape_.d);
  if (prefix.size() != static_cast<std::size_t>(t) * d) {
    throw InputError("FeatureMap::cond_expect: prefix must hold t*d values");
  }
  std::vector<double> out(features_.size());
  for (std::size_t i = 0; i < features_.size(); ++i) {
    double v = 1.0;
    for (int s = 1; s <= shape_.T; ++s) {
      if (s <= t) {
        v *= features_[i].steps[static_cast<std::size_t>(s - 1)](
            prefix.subspan(static_cast<std::size_t>(s - 1) * d, d));
      } else {
        v *= step_mean(i, s);
      }
    }
    out[i] = v;
  }
  return out;
}

double FeatureMap::feature_squared_norm(std::size_t i) const {
  double v = 1.0;
  for (const auto& p : features_[i].steps) v *= p.gaussian_second_moment();
  return v;
}

double FeatureMap::kappa_squared_norm() const {
  double s = 0.0;
  for (std::size_t i = 0; i < features_.size(); ++i) s += feature_squared_norm(i);
  return s;
}

}  // namespace kvp
