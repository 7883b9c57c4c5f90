#pragma once

// Inner-loop arithmetic for similarity scoring and softmax accumulation.
//
// Every kernel has a scalar reference implementation; SIMD variants are
// compiled when the toolchain supports them and selected at runtime from CPU
// feature bits. Inputs are f32, accumulation is f64. Float products are exact
// in double, so variants only differ in summation order.
//
// Set CIR_KERNEL=scalar|avx2|neon to override the automatic choice.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "cir/kernel_table.hpp"

namespace cir::kernels {

const KernelTable& scalar();
/// nullptr when not compiled in or unsupported by this CPU.
const KernelTable* avx2();
const KernelTable* neon();

/// Every variant usable on this machine, scalar first.
std::vector<const KernelTable*> available();

/// The table used by the library.
const KernelTable& active();

/// Forces a variant by name; throws UsageError when unavailable.
void select(std::string_view name);

inline double dot(std::span<const float> a, std::span<const float> b) {
  return active().dot_f32(a.data(), b.data(), a.size());
}

inline double dot(std::span<const double> a, std::span<const float> b) {
  return active().dot_f64_f32(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const float> x, std::span<double> y) {
  active().axpy_f32_f64(alpha, x.data(), y.data(), x.size());
}

}  // namespace cir::kernels
