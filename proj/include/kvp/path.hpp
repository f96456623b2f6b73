#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kvp/common.hpp"

namespace kvp {

/// Dimensions of a path: d risk factors over T time steps.
struct Shape {
  int d = 1;
  int T = 1;

  int size() const { return d * T; }
  bool operator==(const Shape&) const = default;
  void validate() const;
};

/// One trajectory of innovations x = (x_1, ..., x_T), x_t in R^d.
///
/// Stored step-major: the d coordinates of step t (1-based) occupy
/// [(t-1)*d, t*d). The first t*d values are therefore the information
/// available at time t.
class Path {
 public:
  Path() = default;
  explicit Path(Shape shape);
  Path(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  /// Coordinate k (0-based) of step t (1-based).
  double operator()(int k, int t) const {
    return values_[static_cast<std::size_t>((t - 1) * shape_.d + k)];
  }
  double& operator()(int k, int t) {
    return values_[static_cast<std::size_t>((t - 1) * shape_.d + k)];
  }

  std::span<const double> step(int t) const;
  /// Values observed up to and including time t.
  std::span<const double> prefix(int t) const;

  double squared_norm() const;

 private:
  Shape shape_{};
  std::vector<double> values_;
};

/// n paths of a common shape, stored row-major (one path per row).
class PathSet {
 public:
  PathSet() = default;
  PathSet(Shape shape, std::size_t n);
  PathSet(Shape shape, std::vector<double> rows);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return n_; }
  bool empty() const { return n_ == 0; }

  std::span<const double> row(std::size_t i) const;
  std::span<double> row(std::size_t i);
  Path path(std::size_t i) const;
  std::span<const double> data() const { return data_; }

  void push_back(std::span<const double> values);

  /// Coordinate-major copy (D rows of length n) for the SIMD kernels.
  std::vector<double> transposed() const;

 private:
  Shape shape_{};
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// Throws InputError unless `x` has exactly shape.size() entries.
void check_shape(const Shape& shape, std::span<const double> x,
                 const char* where);

}  // namespace kvp
