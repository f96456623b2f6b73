#include <cmath>

#include "kvp/simd.hpp"

namespace kvp::simd {

namespace scalar {

void quad_form_accumulate(std::span<const double> q, SoaView ys, double a,
                          double b, double* out) {
  const double neg_a = -a;
  for (std::size_t j = 0; j < ys.count; ++j) {
    double dist = 0.0;
    double inner = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
      const double y = ys.data[k * ys.stride + j];
      const double diff = q[k] - y;
      dist = dist + diff * diff;
      inner = inner + q[k] * y;
    }
    out[j] = out[j] + (neg_a * dist + b * inner);
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 = s0 + a[i] * b[i];
    s1 = s1 + a[i + 1] * b[i + 1];
    s2 = s2 + a[i + 2] * b[i + 2];
    s3 = s3 + a[i + 3] * b[i + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s = s + a[i] * b[i];
  return s;
}

}  // namespace scalar

void exp_scale(const double* in, const double* scale, double* out,
               std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) out[j] = std::exp(in[j]) * scale[j];
}

}  // namespace kvp::simd
