#include "kernels_internal.hpp"

namespace cir::kernels::detail {
namespace {

double dot_f32(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

double dot_f64_f32(const double* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * static_cast<double>(b[i]);
  return acc;
}

void axpy_f32_f64(double alpha, const float* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * static_cast<double>(x[i]);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{"scalar", &dot_f32, &dot_f64_f32, &axpy_f32_f64};
  return table;
}

}  // namespace cir::kernels::detail
