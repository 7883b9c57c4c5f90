#include <atomic>
#include <cstdlib>
#include <string>

#include "cir/error.hpp"
#include "cir/kernels.hpp"
#include "kernels_internal.hpp"

namespace cir::kernels {
namespace {

const KernelTable* find(std::string_view name) {
  for (const KernelTable* t : available()) {
    if (name == t->name) return t;
  }
  return nullptr;
}

const KernelTable* initial_choice() {
  if (const char* env = std::getenv("CIR_KERNEL"); env != nullptr && *env != '\0') {
    if (const KernelTable* t = find(env)) return t;
  }
  return available().back();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_choice()};
  return table;
}

}  // namespace

const KernelTable& scalar() { return detail::scalar_table(); }

const KernelTable* avx2() {
#if defined(CIR_HAVE_AVX2)
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok ? &detail::avx2_table() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon() {
#if defined(CIR_HAVE_NEON)
  return &detail::neon_table();
#else
  return nullptr;
#endif
}

std::vector<const KernelTable*> available() {
  std::vector<const KernelTable*> out{&scalar()};
  if (const KernelTable* t = avx2()) out.push_back(t);
  if (const KernelTable* t = neon()) out.push_back(t);
  return out;
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

void select(std::string_view name) {
  const KernelTable* t = find(name);
  if (t == nullptr) throw UsageError("kernel variant \"" + std::string(name) + "\" is not available");
  current().store(t);
}

}  // namespace cir::kernels
