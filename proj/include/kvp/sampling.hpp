#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kvp/feature_map.hpp"
#include "kvp/kernel.hpp"
#include "kvp/path.hpp"

namespace kvp {

/// Gaussian sampling measure N(0, 1/(1 - 2 gamma) I_{dT}) with density
/// w(x) = (1 - 2 gamma)^{dT/2} exp(gamma ||x||^2) relative to N(0, I_{dT}).
struct MeasureSpec {
  double gamma = 0.0;
  Shape shape{};
  std::uint64_t seed = 0;

  void validate() const;
  double variance() const { return 1.0 / (1.0 - 2.0 * gamma); }
};

/// Path i is generated from its own stream stream_seed(seed, i), so the output
/// does not depend on the thread count.
PathSet draw_paths(const MeasureSpec& m, std::size_t n);

double log_rn_weight(const MeasureSpec& m, std::span<const double> x);
/// Throws RangeError if the weight overflows.
double rn_weight(const MeasureSpec& m, std::span<const double> x);

/// gamma = beta for the Gaussian-exponentiated kernel; none otherwise.
std::optional<double> optimal_gamma(const KernelSpec& k);

/// Two-stage sampler for the optimal measure of a finite feature map:
/// component i with probability c_i = ||phi_i||^2 / ||kappa||^2, then each
/// step from the density proportional to phi_{i,t}^2 times the standard normal.
class MixtureSampler {
 public:
  explicit MixtureSampler(FeatureMap features);

  const FeatureMap& features() const { return features_; }
  const std::vector<double>& component_weights() const { return c_; }

  PathSet draw(std::size_t n, std::uint64_t seed) const;

  /// w(x) = sum_i phi_i(x)^2 / ||kappa||^2.
  double weight(std::span<const double> x) const;
  double log_weight(std::span<const double> x) const { return std::log(weight(x)); }

 private:
  // Step sampler for one (component, step) factor.
  struct StepSampler {
    enum class Kind { normal, gamma, table } kind = Kind::normal;
    std::vector<int> exponents;     // gamma: per-coordinate monomial powers
    std::vector<double> grid, cdf;  // table: d = 1 inverse CDF
  };
  void draw_step(const StepSampler& s, std::mt19937_64& rng, double* out) const;

  FeatureMap features_;
  std::vector<double> c_;
  double kappa_sq_ = 0.0;
  std::vector<StepSampler> steps_;  // component-major, T per component
};

MixtureSampler mixture_sampler(const FeatureMap& features);

using PayoffFn = std::function<double(std::span<const double>)>;

/// Training sample drawn from the sampling measure, with payoff values and
/// log Radon-Nikodym weights.
struct TrainingSet {
  PathSet paths;
  std::vector<double> payoff_values;
  std::vector<double> log_weights;
  MeasureSpec measure;
  std::string payoff_id;
  std::size_t payoff_calls = 0;

  std::size_t size() const { return paths.size(); }
  std::vector<double> weights() const;
  /// f(X_i) / sqrt(w(X_i)).
  std::vector<double> tilted_values() const;
  void validate() const;
};

/// Draws n paths from the Gaussian measure and evaluates the payoff once per
/// path. Throws DataError naming the path when a payoff value is not finite.
TrainingSet build_training_set(const MeasureSpec& m, const PayoffFn& payoff,
                               std::size_t n, std::string payoff_id = "");

/// Same, with paths and weights from an explicit sample.
TrainingSet make_training_set(PathSet paths, std::vector<double> log_weights,
                              const PayoffFn& payoff, MeasureSpec m,
                              std::string payoff_id = "");

/// CSV: header, then path_id, x_1_1..x_d_T, payoff, weight per row. The
/// column x_k_t holds coordinate k of step t.
void write_training_csv(const TrainingSet& ts, std::ostream& os);
std::string training_csv(const TrainingSet& ts);
TrainingSet read_training_csv(std::istream& is, const MeasureSpec& m,
                              std::string payoff_id = "");

}  // namespace kvp
