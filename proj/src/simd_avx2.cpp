// Compiled with -mavx2 only; FMA stays disabled so lanes round exactly like
// the scalar reference.
#include <immintrin.h>

#include "kvp/simd.hpp"

namespace kvp::simd::avx2 {

void quad_form_accumulate(std::span<const double> q, SoaView ys, double a,
                          double b, double* out) {
  const __m256d neg_a = _mm256_set1_pd(-a);
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t j = 0;
  for (; j + 4 <= ys.count; j += 4) {
    __m256d dist = _mm256_setzero_pd();
    __m256d inner = _mm256_setzero_pd();
    for (std::size_t k = 0; k < q.size(); ++k) {
      const __m256d y = _mm256_loadu_pd(ys.data + k * ys.stride + j);
      const __m256d qk = _mm256_set1_pd(q[k]);
      const __m256d diff = _mm256_sub_pd(qk, y);
      dist = _mm256_add_pd(dist, _mm256_mul_pd(diff, diff));
      inner = _mm256_add_pd(inner, _mm256_mul_pd(qk, y));
    }
    const __m256d term =
        _mm256_add_pd(_mm256_mul_pd(neg_a, dist), _mm256_mul_pd(vb, inner));
    _mm256_storeu_pd(out + j, _mm256_add_pd(_mm256_loadu_pd(out + j), term));
  }
  if (j < ys.count) {
    scalar::quad_form_accumulate(q, ys.slice(j, ys.count - j), a, b, out + j);
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_add_pd(
        acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s = s + a[i] * b[i];
  return s;
}

}  // namespace kvp::simd::avx2
