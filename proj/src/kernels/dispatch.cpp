#include <cstdlib>
#include <string_view>

#include "kernels_impl.hpp"

namespace causalgap::kernels {

const KernelTable* avx2_table() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

// Advanced SIMD is mandatory on aarch64.
const KernelTable* neon_table() { return neon_table_unchecked(); }

const KernelTable& active() {
  static const KernelTable& chosen = [&]() -> const KernelTable& {
    const char* env = std::getenv("CAUSALGAP_KERNELS");
    if (env != nullptr && std::string_view(env) == "scalar") return scalar_table();
    if (const KernelTable* t = avx2_table()) return *t;
    if (const KernelTable* t = neon_table()) return *t;
    return scalar_table();
  }();
  return chosen;
}

}  // namespace causalgap::kernels
