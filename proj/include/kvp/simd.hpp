#pragma once

// Data-parallel inner loops shared by the kernel, krr and valuation modules.
//
// Every kernel has a scalar reference implementation and, on x86-64, an AVX2
// variant selected at runtime. The variants perform the same floating-point
// operations in the same order per lane (no FMA), so their results agree bit
// for bit; tests/test_simd.cpp checks this.
//
// Set KVP_SIMD=scalar in the environment to force the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace kvp::simd {

/// Coordinate-major block: coordinate k of point j at data[k * stride + j].
struct SoaView {
  const double* data = nullptr;
  std::size_t stride = 0;
  std::size_t count = 0;

  /// Points [first, first + n) of the same block.
  SoaView slice(std::size_t first, std::size_t n) const {
    return {data + first, stride, n};
  }
  /// Coordinates [first, ...) of the same points.
  SoaView coords_from(std::size_t first) const {
    return {data + first * stride, stride, count};
  }
};

/// out[j] += -a * ||q - y_j||^2 + b * q^T y_j over the first q.size()
/// coordinates of each point y_j in `ys`.
using QuadFormFn = void (*)(std::span<const double> q, SoaView ys, double a,
                            double b, double* out);

/// Dot product with four interleaved partial sums:
/// ((s0 + s1) + (s2 + s3)) + tail, where s_l accumulates indices = l mod 4.
using DotFn = double (*)(const double* a, const double* b, std::size_t n);

/// out[j] = exp(in[j]) * scale[j]; scalar on every target.
void exp_scale(const double* in, const double* scale, double* out,
               std::size_t n);

namespace scalar {
void quad_form_accumulate(std::span<const double> q, SoaView ys, double a,
                          double b, double* out);
double dot(const double* a, const double* b, std::size_t n);
}  // namespace scalar

#if defined(KVP_HAVE_AVX2)
namespace avx2 {
void quad_form_accumulate(std::span<const double> q, SoaView ys, double a,
                          double b, double* out);
double dot(const double* a, const double* b, std::size_t n);
}  // namespace avx2
#endif

/// True when the AVX2 variants are compiled in and the CPU supports them.
bool avx2_available();

/// Name of the active variant: "avx2" or "scalar".
std::string_view active_variant();

/// Dispatched entry points.
void quad_form_accumulate(std::span<const double> q, SoaView ys, double a,
                          double b, double* out);
double dot(const double* a, const double* b, std::size_t n);

}  // namespace kvp::simd
