#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kvp/kernel.hpp"
#include "kvp/sampling.hpp"

namespace kvp {

enum class FitMode { dual, primal };

/// Largest sample accepted by the dense dual solver.
inline constexpr std::size_t kMaxDualSize = 20000;

/// Fitted kernel ridge regression estimator. Immutable.
///
/// Dual mode represents
///   f_X(x) = (1/n) sum_j k(x, Y_j) exp(s_j) a_j
/// over the retained centers Y_j with log shifts s_j = -log(w(Y_j))/2 and
/// coefficients a_j = sqrt(|I_j|) g_j (a_j = g_j for the unsorted fit).
/// Primal mode represents f_X(x) = phi(x)^T h.
class Estimator {
 public:
  FitMode mode() const { return mode_; }
  double lambda() const { return lambda_; }
  const KernelSpec& kernel() const { return *kernel_; }
  const MeasureSpec& measure() const { return measure_; }
  /// Training sample size n (the 1/n normalization).
  std::size_t n() const { return n_; }

  const KernelCenters& centers() const { return *centers_; }
  const std::vector<double>& center_shift() const { return shift_; }
  /// Solution of the linear system: g (dual) or h (primal).
  const std::vector<double>& solution() const { return solution_; }
  /// Multiplicities |I_j| of the retained centers; all ones when unsorted.
  const std::vector<std::size_t>& multiplicities() const { return mult_; }
  /// a_j in the dual representation above.
  const std::vector<double>& eval_coefficients() const { return coef_; }

  double predict(std::span<const double> x) const;
  double predict(const Path& x) const { return predict(x.values()); }
  std::vector<double> predict(const PathSet& xs) const;

  /// f_X(x) / sqrt(w(x)) for the estimator's Gaussian tilt.
  double predict_tilted(std::span<const double> x) const;

  const std::string& training_sha256() const { return training_sha256_; }

  std::string to_json() const;
  static Estimator from_json(const std::string& text);

 private:
  friend class DualSystem;
  friend Estimator fit_dual_sorted(const TrainingSet&, const KernelSpec&, double);
  friend Estimator fit_primal(const TrainingSet&, const FeatureMap&, double);
  Estimator() = default;

  FitMode mode_ = FitMode::dual;
  double lambda_ = 0.0;
  std::shared_ptr<const KernelSpec> kernel_;
  MeasureSpec measure_{};
  std::size_t n_ = 0;
  std::shared_ptr<const KernelCenters> centers_;
  std::vector<double> shift_;
  std::vector<double> solution_;
  std::vector<std::size_t> mult_;
  std::vector<double> coef_;
  std::string training_sha256_;
};

/// Tilted dual system for one training set and kernel:
///   K_ij = sqrt(m_i) k(Y_i, Y_j) sqrt(m_j) / sqrt(w(Y_i) w(Y_j)),
///   rhs_i = sqrt(m_i) f(Y_i) / sqrt(w(Y_i)),
/// with multiplicities m. The Gram matrix is assembled once and solved for
/// any number of regularization parameters.
class DualSystem {
 public:
  /// sorted = true merges bitwise-identical paths into one center.
  DualSystem(const TrainingSet& ts, const KernelSpec& kernel, bool sorted = false);

  std::size_t size() const { return static_cast<std::size_t>(gram_.rows()); }
  std::size_t n() const { return n_; }
  const Eigen::MatrixXd& gram() const { return gram_; }
  const Eigen::VectorXd& rhs() const { return rhs_; }
  const std::vector<std::size_t>& multiplicities() const { return mult_; }

  /// Solves ((1/n) K + lambda) g = rhs with a Cholesky factorization.
  Estimator solve(double lambda) const;
  /// Same system matrix, arbitrary right-hand side.
  Eigen::VectorXd solve_rhs(double lambda, const Eigen::VectorXd& rhs) const;

  /// || ((1/n) K + lambda) g - rhs || / || rhs ||.
  double residual(double lambda, const Eigen::VectorXd& g) const;
  /// sqrt(a^T K a).
  double h_norm(const Eigen::VectorXd& a) const;

 private:
  Eigen::LLT<Eigen::MatrixXd> factor(double lambda) const;

  std::shared_ptr<const KernelSpec> kernel_;
  MeasureSpec measure_{};
  std::size_t n_ = 0;
  std::shared_ptr<const KernelCenters> centers_;
  std::vector<double> shift_;
  std::vector<std::size_t> mult_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd rhs_;
  std::string sha_;
};

Estimator fit_dual_unsorted(const TrainingSet& ts, const KernelSpec& kernel,
                            double lambda);
Estimator fit_dual_sorted(const TrainingSet& ts, const KernelSpec& kernel,
                          double lambda);
Estimator fit_primal(const TrainingSet& ts, const FeatureMap& features,
                     double lambda);

/// Relative residual of the fitted linear system on its training set.
double normal_equation_residual(const Estimator& est, const TrainingSet& ts);

struct RegularizationPath {
  std::vector<double> lambdas;
  std::vector<Estimator> fits;
  /// RMS of f_lambda - f_0 over the evaluation points (empty without them).
  std::vector<double> errors;
  /// Least-squares slope of log(error) against log(lambda).
  double slope = 0.0;
};

/// Fits every lambda (dual for kernel families, primal for feature maps).
/// With evaluation points, also fits lambda = 0 as f_0 and reports the
/// distances.
RegularizationPath regularization_path(const TrainingSet& ts, const KernelSpec& kernel,
                                       const std::vector<double>& lambdas,
                                       const PathSet* eval_points = nullptr);

}  // namespace kvp
