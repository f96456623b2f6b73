#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kvp/path.hpp"

namespace kvp {

/// E[X^k] for X ~ N(0, 1): (k-1)!! for even k, 0 for odd k.
double gaussian_moment(int k);

/// coef * prod_k x_k^{exponents[k]} on R^d.
struct Monomial {
  double coef = 1.0;
  std::vector<int> exponents;
};

/// Polynomial on R^d given as a sum of monomials; the per-step factor
/// phi_{i,t} of a product feature.
class StepPolynomial {
 public:
  StepPolynomial() = default;
  StepPolynomial(int d, std::vector<Monomial> terms);

  static StepPolynomial constant(int d, double c = 1.0);
  static StepPolynomial monomial(std::vector<int> exponents, double coef = 1.0);

  int dim() const { return d_; }
  const std::vector<Monomial>& terms() const { return terms_; }
  bool is_monomial() const { return terms_.size() == 1; }
  int degree() const;

  double operator()(std::span<const double> x) const;

  /// E[p(X)] for X ~ N(0, I_d).
  double gaussian_mean() const;
  /// E[p(X)^2] for X ~ N(0, I_d).
  double gaussian_second_moment() const;
  /// E[p(a*y + b*X)] for X ~ N(0, I_d), by binomial expansion.
  double shifted_gaussian_mean(std::span<const double> y, double a,
                               double b) const;

  StepPolynomial scaled(double c) const;

 private:
  int d_ = 1;
  std::vector<Monomial> terms_;
};

/// phi_i(x) = prod_t phi_{i,t}(x_t).
struct ProductFeature {
  std::vector<StepPolynomial> steps;
};

/// Finite feature map phi = (phi_1, ..., phi_m) of product features with
/// closed-form Gaussian step means gamma_{i,t} = E[phi_{i,t}(X_t)].
class FeatureMap {
 public:
  /// Validates shapes and checks linear independence on a Gaussian probe
  /// sample (InputError if the probe Gram matrix is numerically singular).
  FeatureMap(Shape shape, std::vector<ProductFeature> features);

  /// All monomials of total degree <= max_degree over the d*T coordinates.
  static FeatureMap monomials(Shape shape, int max_degree);

  /// Multinomial features with phi(x)^T phi(y) = (1 + x^T y)^degree.
  /// Supported for degree <= 4 and d*T <= 8 (CapabilityError otherwise).
  static FeatureMap polynomial_kernel(Shape shape, int degree);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return features_.size(); }
  const ProductFeature& feature(std::size_t i) const { return features_[i]; }

  std::vector<double> operator()(std::span<const double> x) const;
  void eval_into(std::span<const double> x, std::span<double> out) const;

  /// gamma_{i,t}; t is 1-based.
  double step_mean(std::size_t i, int t) const {
    return step_means_[i * static_cast<std::size_t>(shape_.T) +
                       static_cast<std::size_t>(t - 1)];
  }

  /// E[phi(X) | F_t] = prod_{s<=t} phi_{i,s}(x_s) prod_{s>t} gamma_{i,s}.
  std::vector<double> cond_expect(std::span<const double> prefix, int t) const;

  /// ||phi_i||^2_{2,mu} and the sum ||kappa||^2_{2,mu} = sum_i ||phi_i||^2.
  double feature_squared_norm(std::size_t i) const;
  double kappa_squared_norm() const;

 private:
  Shape shape_;
  std::vector<ProductFeature> features_;
  std::vector<double> step_means_;
};

}  // namespace kvp
