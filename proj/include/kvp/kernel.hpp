#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "kvp/feature_map.hpp"
#include "kvp/path.hpp"
#include "kvp/simd.hpp"

namespace kvp {

/// k(x,y) = exp(-alpha ||x-y||^2 + beta x^T y), alpha >= 0, 0 <= beta < 1/2.
struct GaussExpParams {
  double alpha = 1.0;
  double beta = 0.0;
};

/// k(x,y) = exp(-alpha ||x-y||^2) (1 + x^T y)^degree.
struct GaussPolyParams {
  double alpha = 0.0;
  int degree = 1;
};

enum class KernelFamily { gauss_exp, gauss_poly, feature_map };

/// Integrability of the tilted kernel for the Gaussian-exponentiated family
/// under the Gaussian measure change with parameter gamma.
struct TiltConditions {
  bool fourth_moment = true;  ///< beta < gamma + 1/4
  bool bounded = true;        ///< beta <= gamma
};

/// Retained kernel centers with the precomputed layouts used by the batched
/// kernel evaluations.
class KernelCenters {
 public:
  KernelCenters() = default;
  explicit KernelCenters(PathSet paths);

  const PathSet& paths() const { return paths_; }
  std::size_t size() const { return paths_.size(); }
  simd::SoaView soa() const { return {soa_.data(), paths_.size(), paths_.size()}; }
  /// sum_{s>t} ||y_s||^2 for every center, t = 0..T.
  const double* tail_squared_norms(int t) const {
    return tail_.data() + static_cast<std::size_t>(t) * paths_.size();
  }

 private:
  PathSet paths_;
  std::vector<double> soa_;
  std::vector<double> tail_;
};

/// Kernel with product-over-time structure
///   k(x,y) = sum_i prod_t k_{i,t}(x_t, y_t)
/// and closed-form one-step Gaussian expectations U_{i,t}. Immutable.
class KernelSpec {
 public:
  static KernelSpec gauss_exp(Shape shape, double alpha, double beta,
                              double gamma = 0.0);
  static KernelSpec gauss_poly(Shape shape, double alpha, int degree,
                               double gamma = 0.0);
  static KernelSpec features(FeatureMap map, double gamma = 0.0);

  KernelFamily family() const;
  const Shape& shape() const { return shape_; }
  double gamma() const { return gamma_; }
  /// Number m of product terms.
  std::size_t num_terms() const;

  const GaussExpParams* gauss_exp_params() const {
    return std::get_if<GaussExpParams>(&params_);
  }
  const GaussPolyParams* gauss_poly_params() const {
    return std::get_if<GaussPolyParams>(&params_);
  }
  /// Features of the feature-map family, or the polynomial expansion of the
  /// Gaussian-polynomial family; null for the Gaussian-exponentiated kernel.
  const FeatureMap* feature_map() const { return features_.get(); }

  /// Same kernel with a different tilt parameter.
  KernelSpec with_gamma(double gamma) const;

  double eval(std::span<const double> x, std::span<const double> y) const;
  double eval(const Path& x, const Path& y) const {
    return eval(x.values(), y.values());
  }
  /// k(x,y) / sqrt(w(x) w(y)) for the Gaussian tilt w of parameter gamma().
  double eval_tilted(std::span<const double> x, std::span<const double> y) const;
  double eval_tilted(const Path& x, const Path& y) const {
    return eval_tilted(x.values(), y.values());
  }
  /// kappa(x)^2 = k(x, x).
  double diag(std::span<const double> x) const;

  /// U_{i,t}(y) = E_Q[k_{i,t}(X_t, y)], y in R^d. t is 1-based.
  double u_factor(std::size_t i, int t, std::span<const double> y) const;

  /// E_Q[k(X, y) | F_t] given the realized first t steps (t*d values).
  double cond_expect(std::span<const double> prefix, std::span<const double> y,
                     int t) const;

  TiltConditions tilt_conditions() const;

  /// out[j] = k(x, y_j) * exp(x_shift + center_shift[j]) for the centers
  /// [first, first + count). center_shift may be null.
  void row(std::span<const double> x, double x_shift, const KernelCenters& c,
           std::size_t first, std::size_t count, const double* center_shift,
           double* out) const;

  /// out[j] = E_Q[k(X, y_j) | F_t] * exp(center_shift[j]) for every center.
  /// center_shift may be null.
  void cond_expect_row(std::span<const double> prefix, int t,
                       const KernelCenters& c, const double* center_shift,
                       double* out) const;

 private:
  KernelSpec() = default;

  Shape shape_{};
  double gamma_ = 0.0;
  std::variant<GaussExpParams, GaussPolyParams, std::monostate> params_;
  std::shared_ptr<const FeatureMap> features_;
};

}  // namespace kvp
