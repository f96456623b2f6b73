#include "kvp/path.hpp"

#include <string>

namespace kvp {

void Shape::validate() const {
  if (d < 1 || T < 1) {
    throw InputError("path shape requires d >= 1 and T >= 1, got d=" +
                     std::to_string(d) + " T=" + std::to_string(T));
  }
}

void check_shape(const Shape& shape, std::span<const double> x,
                 const char* where) {
  if (x.size() != static_cast<std::size_t>(shape.size())) {
    throw InputError(std::string(where) + ": expected " +
                     std::to_string(shape.size()) + " values, got " +
                     std::to_string(x.size()));
  }
}

Path::Path(Shape shape) : shape_(shape), values_(shape.size(), 0.0) {
  shape_.validate();
}

Path::Path(Shape shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  shape_.validate();
  check_shape(shape_, values_, "Path");
}

std::span<const double> Path::step(int t) const {
  return std::span<const double>(values_).subspan(
      static_cast<std::size_t>((t - 1) * shape_.d),
      static_cast<std::size_t>(shape_.d));
}

std::span<const double> Path::prefix(int t) const {
  return std::span<const double>(values_).first(
      static_cast<std::size_t>(t * shape_.d));
}

double Path::squared_norm() const {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return s;
}

PathSet::PathSet(Shape shape, std::size_t n)
    : shape_(shape), n_(n), data_(n * static_cast<std::size_t>(shape.size())) {
  shape_.validate();
}

PathSet::PathSet(Shape shape, std::vector<double> rows)
    : shape_(shape), data_(std::move(rows)) {
  shape_.validate();
  const auto D = static_cast<std::size_t>(shape_.size());
  if (data_.size() % D != 0) {
    throw InputError("PathSet: data size is not a multiple of d*T");
  }
  n_ = data_.size() / D;
}

std::span<const double> PathSet::row(std::size_t i) const {
  const auto D = static_cast<std::size_t>(shape_.size());
  return std::span<const double>(data_).subspan(i * D, D);
}

std::span<double> PathSet::row(std::size_t i) {
  const auto D = static_cast<std::size_t>(shape_.size());
  return std::span<double>(data_).subspan(i * D, D);
}

Path PathSet::path(std::size_t i) const {
  auto r = row(i);
  return Path(shape_, std::vector<double>(r.begin(), r.end()));
}

void PathSet::push_back(std::span<const double> values) {
  check_shape(shape_, values, "PathSet::push_back");
  data_.insert(data_.end(), values.begin(), values.end());
  ++n_;
}

std::vector<double> PathSet::transposed() const {
  const auto D = static_cast<std::size_t>(shape_.size());
  std::vector<double> out(D * n_);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t k = 0; k < D; ++k) out[k * n_ + i] = data_[i * D + k];
  }
  return out;
}

}  // namespace kvp
