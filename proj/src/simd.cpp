#include <cstdlib>
#include <cstring>

#include "kvp/simd.hpp"

namespace kvp::simd {

namespace {

struct Table {
  QuadFormFn quad_form;
  DotFn dot;
  std::string_view name;
};

bool cpu_has_avx2() {
#if defined(KVP_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Table select() {
  const char* forced = std::getenv("KVP_SIMD");
  const bool want_scalar = forced && std::strcmp(forced, "scalar") == 0;
#if defined(KVP_HAVE_AVX2)
  if (!want_scalar && cpu_has_avx2()) {
    return {&avx2::quad_form_accumulate, &avx2::dot, "avx2"};
  }
#endif
  (void)want_scalar;
  return {&scalar::quad_form_accumulate, &scalar::dot, "scalar"};
}

const Table& table() {
  static const Table t = select();
  return t;
}

}  // namespace

bool avx2_available() { return cpu_has_avx2(); }

std::string_view active_variant() { return table().name; }

void quad_form_accumulate(std::span<const double> q, SoaView ys, double a,
                          double b, double* out) {
  table().quad_form(q, ys, a, b, out);
}

double dot(const double* a, const double* b, std::size_t n) {
  return table().dot(a, b, n);
}

}  // namespace kvp::simd
