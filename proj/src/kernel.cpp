#include "kvp/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace kvp {

namespace {

double sq_dist(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double diff = x[k] - y[k];
    s += diff * diff;
  }
  return s;
}

double inner(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * y[k];
  return s;
}

double sq_norm(std::span<const double> x) { return inner(x, x); }

bool same_point(std::span<const double> x, std::span<const double> y) {
  return x.data() == y.data() ||
         std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

double checked_exp(double e, const char* where) {
  check_exponent(e, where);
  return std::exp(e);
}

void check_gamma(double gamma) {
  if (!(gamma < 0.5) || !std::isfinite(gamma)) {
    throw InputError("measure-change parameter gamma must be < 1/2, got " +
                     std::to_string(gamma));
  }
}

// log of the tilt normalization (1 - 2 gamma)^{-D/2}.
double tilt_log_prefactor(const Shape& shape, double gamma) {
  return -0.5 * shape.size() * std::log1p(-2.0 * gamma);
}

}  // namespace

KernelCenters::KernelCenters(PathSet paths) : paths_(std::move(paths)) {
  soa_ = paths_.transposed();
  const auto n = paths_.size();
  const int T = paths_.shape().T;
  const auto d = static_cast<std::size_t>(paths_.shape().d);
  tail_.assign(static_cast<std::size_t>(T + 1) * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    auto y = paths_.row(j);
    double acc = 0.0;
    for (int t = T; t >= 0; --t) {
      tail_[static_cast<std::size_t>(t) * n + j] = acc;
      if (t > 0) {
        acc += sq_norm(y.subspan(static_cast<std::size_t>(t - 1) * d, d));
      }
    }
  }
}

KernelSpec KernelSpec::gauss_exp(Shape shape, double alpha, double beta,
                                 double gamma) {
  shape.validate();
  check_gamma(gamma);
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw InputError("Gaussian-exponentiated kernel requires alpha >= 0");
  }
  if (!(beta >= 0.0 && beta < 0.5)) {
    throw InputError("Gaussian-exponentiated kernel requires 0 <= beta < 1/2");
  }
  if (alpha == 0.0 && beta == 0.0) {
    throw InputError("Gaussian-exponentiated kernel requires (alpha, beta) != (0, 0)");
  }
  KernelSpec k;
  k.shape_ = shape;
  k.gamma_ = gamma;
  k.params_ = GaussExpParams{alpha, beta};
  return k;
}

KernelSpec KernelSpec::gauss_poly(Shape shape, double alpha, int degree,
                                  double gamma) {
  shape.validate();
  check_gamma(gamma);
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw InputError("Gaussian-polynomial kernel requires alpha >= 0");
  }
  if (degree < 0) {
    throw InputError("Gaussian-polynomial kernel requires a nonnegative degree");
  }
  KernelSpec k;
  k.shape_ = shape;
  k.gamma_ = gamma;
  k.params_ = GaussPolyParams{alpha, degree};
  k.features_ = std::make_shared<const FeatureMap>(
      FeatureMap::polynomial_kernel(shape, degree));
  return k;
}

KernelSpec KernelSpec::features(FeatureMap map, double gamma) {
  check_gamma(gamma);
  KernelSpec k;
  k.shape_ = map.shape();
  k.gamma_ = gamma;
  k.params_ = std::monostate{};
  k.features_ = std::make_shared<const FeatureMap>(std::move(map));
  return k;
}

KernelFamily KernelSpec::family() const {
  if (gauss_exp_params()) return KernelFamily::gauss_exp;
  if (gauss_poly_params()) return KernelFamily::gauss_poly;
  return KernelFamily::feature_map;
}

std::size_t KernelSpec::num_terms() const {
  return features_ ? features_->size() : 1;
}

KernelSpec KernelSpec::with_gamma(double gamma) const {
  check_gamma(gamma);
  KernelSpec k = *this;
  k.gamma_ = gamma;
  return k;
}

double KernelSpec::diag(std::span<const double> x) const {
  check_shape(shape_, x, "kernel diag");
  if (const auto* p = gauss_exp_params()) {
    return checked_exp(p->beta * sq_norm(x), "kernel diag");
  }
  if (const auto* p = gauss_poly_params()) {
    return std::pow(1.0 + sq_norm(x), p->degree);
  }
  const auto phi = (*features_)(x);
  return inner(phi, phi);
}

double KernelSpec::eval(std::span<const double> x,
                        std::span<const double> y) const {
  check_shape(shape_, x, "kernel eval");
  check_shape(shape_, y, "kernel eval");
  if (same_point(x, y)) return diag(x);
  if (const auto* p = gauss_exp_params()) {
    return checked_exp(-p->alpha * sq_dist(x, y) + p->beta * inner(x, y),
                       "kernel eval");
  }
  if (const auto* p = gauss_poly_params()) {
    return std::exp(-p->alpha * sq_dist(x, y)) *
           std::pow(1.0 + inner(x, y), p->degree);
  }
  const auto px = (*features_)(x);
  const auto py = (*features_)(y);
  return inner(px, py);
}

double KernelSpec::eval_tilted(std::span<const double> x,
                               std::span<const double> y) const {
  check_shape(shape_, x, "kernel eval_tilted");
  check_shape(shape_, y, "kernel eval_tilted");
  const double pre = tilt_log_prefactor(shape_, gamma_);
  if (const auto* p = gauss_exp_params()) {
    const double e = -(p->alpha + 0.5 * gamma_) * sq_dist(x, y) +
                     (p->beta - gamma_) * inner(x, y) + pre;
    return checked_exp(e, "kernel eval_tilted");
  }
  double e = -0.5 * gamma_ * (sq_norm(x) + sq_norm(y)) + pre;
  double poly;
  if (const auto* p = gauss_poly_params()) {
    e += -p->alpha * sq_dist(x, y);
    poly = std::pow(1.0 + inner(x, y), p->degree);
  } else {
    poly = inner((*features_)(x), (*features_)(y));
  }
  return checked_exp(e, "kernel eval_tilted") * poly;
}

double KernelSpec::u_factor(std::size_t i, int t, std::span<const double> y) const {
  if (y.size() != static_cast<std::size_t>(shape_.d)) {
    throw InputError("u_factor: expected a point in R^d");
  }
  if (t < 1 || t > shape_.T) throw InputError("u_factor: time index out of range");
  const double d = shape_.d;
  if (const auto* p = gauss_exp_params()) {
    const double a = p->alpha;
    const double b = p->beta;
    const double c = (b * b + 4.0 * a * b - 2.0 * a) / (4.0 * a + 2.0);
    return std::pow(1.0 + 2.0 * a, -0.5 * d) *
           checked_exp(c * sq_norm(y), "u_factor");
  }
  if (i >= features_->size()) throw InputError("u_factor: feature index out of range");
  const auto& poly = features_->feature(i).steps[static_cast<std::size_t>(t - 1)];
  if (const auto* p = gauss_poly_params()) {
    const double a = p->alpha;
    const double shrink = 1.0 + 2.0 * a;
    return std::exp(-a / shrink * sq_norm(y)) * poly(y) * std::pow(shrink, -0.5 * d) *
           poly.shifted_gaussian_mean(y, 2.0 * a / shrink, 1.0 / std::sqrt(shrink));
  }
  return features_->step_mean(i, t) * poly(y);
}

double KernelSpec::cond_expect(std::span<const double> prefix,
                               std::span<const double> y, int t) const {
  check_shape(shape_, y, "cond_expect");
  if (t < 0 || t > shape_.T) throw InputError("cond_expect: time index out of range");
  const auto d = static_cast<std::size_t>(shape_.d);
  if (prefix.size() != static_cast<std::size_t>(t) * d) {
    throw InputError("cond_expect: realized prefix must hold t*d values");
  }
  if (t == shape_.T) return eval(prefix, y);

  if (const auto* p = gauss_exp_params()) {
    const double a = p->alpha;
    const double b = p->beta;
    const double c = (b * b + 4.0 * a * b - 2.0 * a) / (4.0 * a + 2.0);
    const auto yp = y.first(prefix.size());
    const auto ytail = y.subspan(prefix.size());
    const double e = -a * sq_dist(prefix, yp) + b * inner(prefix, yp) +
                     c * sq_norm(ytail) -
                     0.5 * static_cast<double>((shape_.T - t) * shape_.d) *
                         std::log1p(2.0 * a);
    return checked_exp(e, "cond_expect");
  }

  double common = 0.0;  // log of the Gaussian factor shared by all terms
  double a = 0.0, shrink = 1.0;
  if (const auto* p = gauss_poly_params()) {
    a = p->alpha;
    shrink = 1.0 + 2.0 * a;
    common = -a * sq_dist(prefix, y.first(prefix.size())) -
             a / shrink * sq_norm(y.subspan(prefix.size())) -
             0.5 * static_cast<double>((shape_.T - t) * shape_.d) * std::log(shrink);
  }
  const bool gauss_poly = gauss_poly_params() != nullptr;
  double sum = 0.0;
  for (std::size_t i = 0; i < features_->size(); ++i) {
    const auto& f = features_->feature(i);
    double v = 1.0;
    for (int s = 1; s <= shape_.T; ++s) {
      const auto& poly = f.steps[static_cast<std::size_t>(s - 1)];
      const auto ys = y.subspan(static_cast<std::size_t>(s - 1) * d, d);
      if (s <= t) {
        v *= poly(prefix.subspan(static_cast<std::size_t>(s - 1) * d, d)) * poly(ys);
      } else if (gauss_poly) {
        v *= poly(ys) * poly.shifted_gaussian_mean(ys, 2.0 * a / shrink,
                                                   1.0 / std::sqrt(shrink));
      } else {
        v *= features_->step_mean(i, s) * poly(ys);
      }
    }
    sum += v;
  }
  return checked_exp(common, "cond_expect") * sum;
}

TiltConditions KernelSpec::tilt_conditions() const {
  if (const auto* p = gauss_exp_params()) {
    return {p->beta < gamma_ + 0.25, p->beta <= gamma_};
  }
  return {true, gamma_ > 0.0};
}

void KernelSpec::row(std::span<const double> x, double x_shift,
                     const KernelCenters& c, std::size_t first, std::size_t count,
                     const double* center_shift, double* out) const {
  check_shape(shape_, x, "kernel row");
  if (first + count > c.size()) throw InputError("kernel row: center range out of bounds");
  if (const auto* p = gauss_exp_params()) {
    for (std::size_t j = 0; j < count; ++j) {
      out[j] = x_shift + (center_shift ? center_shift[first + j] : 0.0);
    }
    simd::quad_form_accumulate(x, c.soa().slice(first, count), p->alpha, p->beta, out);
    const double worst = count ? *std::max_element(out, out + count) : 0.0;
    check_exponent(worst, "kernel row");
    for (std::size_t j = 0; j < count; ++j) out[j] = std::exp(out[j]);
    return;
  }
  for (std::size_t j = 0; j < count; ++j) {
    const double shift = x_shift + (center_shift ? center_shift[first + j] : 0.0);
    out[j] = eval(x, c.paths().row(first + j)) * checked_exp(shift, "kernel row");
  }
}

void KernelSpec::cond_expect_row(std::span<const double> prefix, int t,
                                 const KernelCenters& c, const double* center_shift,
                                 double* out) const {
  if (t < 0 || t > shape_.T) throw InputError("cond_expect: time index out of range");
  const auto d = static_cast<std::size_t>(shape_.d);
  if (prefix.size() != static_cast<std::size_t>(t) * d) {
    throw InputError("cond_expect: realized prefix must hold t*d values");
  }
  const std::size_t n = c.size();
  if (const auto* p = gauss_exp_params()) {
    const double a = p->alpha;
    const double b = p->beta;
    const double cu = (b * b + 4.0 * a * b - 2.0 * a) / (4.0 * a + 2.0);
    const double base = t == shape_.T
                            ? 0.0
                            : -0.5 * static_cast<double>((shape_.T - t) * shape_.d) *
                                  std::log1p(2.0 * a);
    const double* tail = c.tail_squared_norms(t);
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = base + cu * tail[j] + (center_shift ? center_shift[j] : 0.0);
    }
    if (t > 0) simd::quad_form_accumulate(prefix, c.soa(), a, b, out);
    const double worst = n ? *std::max_element(out, out + n) : 0.0;
    check_exponent(worst, "cond_expect");
    for (std::size_t j = 0; j < n; ++j) out[j] = std::exp(out[j]);
    return;
  }
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = cond_expect(prefix, c.paths().row(j), t) *
             (center_shift ? checked_exp(center_shift[j], "cond_expect") : 1.0);
  }
}

}  // namespace kvp
