#pragma once

// Kept free of inline code: SIMD translation units include this header with
// ISA flags enabled, and inline definitions there could leak AVX2 code into
// scalar callers through ODR merging.

#include <cstddef>

namespace cir::kernels {

struct KernelTable {
  const char* name;
  /// sum_i a[i] * b[i]
  double (*dot_f32)(const float* a, const float* b, std::size_t n);
  /// sum_i a[i] * b[i] with a double-precision left operand
  double (*dot_f64_f32)(const double* a, const float* b, std::size_t n);
  /// y[i] += alpha * x[i]
  void (*axpy_f32_f64)(double alpha, const float* x, double* y, std::size_t n);
};

}  // namespace cir::kernels
