#pragma once

#include "cir/kernel_table.hpp"

namespace cir::kernels::detail {

const KernelTable& scalar_table();
#if defined(CIR_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(CIR_HAVE_NEON)
const KernelTable& neon_table();
#endif

}  // namespace cir::kernels::detail
