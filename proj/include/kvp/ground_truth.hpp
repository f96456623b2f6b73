#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "kvp/market.hpp"

namespace kvp {

/// Source of the reference value process V_t for error measurement.
struct GroundTruthSource {
  enum class Method { quadrature, monte_carlo };
  Method method = Method::quadrature;
  std::size_t n_inner = 10000;  ///< Monte Carlo only
  std::uint64_t seed = 0;       ///< Monte Carlo only

  /// V_t given the first t innovations.
  double value(const BSConfig& cfg, PayoffId id, std::span<const double> prefix, int t) const;
};

std::string_view method_name(GroundTruthSource::Method m);
GroundTruthSource::Method parse_method(std::string_view s);

/// Cached ground-truth values keyed by (t, x_1); CSV columns
/// t,x1,value,n_inner,seed (n_inner = seed = 0 for quadrature values).
class GroundTruthCache {
 public:
  struct Row {
    int t = 0;
    double x1 = 0.0;
    double value = 0.0;
    std::size_t n_inner = 0;
    std::uint64_t seed = 0;
  };

  std::optional<double> find(int t, double x1) const;
  void insert(const Row& row);
  std::size_t size() const { return rows_.size(); }

  std::string to_csv() const;
  static GroundTruthCache from_csv(const std::string& text);
  void save(const std::filesystem::path& p) const;
  static GroundTruthCache load(const std::filesystem::path& p);

 private:
  std::map<std::pair<int, std::uint64_t>, Row> rows_;
};

}  // namespace kvp
