#include <atomic>
#include <cstdlib>
#include <string_view>

#include "idmask/kernels.hpp"

namespace idmask::kernels {

#if !IDMASK_HAVE_AVX2
const KernelTable* avx2_table() noexcept { return nullptr; }
#endif

bool avx2_supported() noexcept {
#if IDMASK_HAVE_AVX2 && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const KernelTable* initial_table() noexcept {
  const char* env = std::getenv("IDMASK_SIMD");
  if (env != nullptr && std::string_view(env) == "scalar") return &scalar_table();
  if (avx2_supported()) return avx2_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() noexcept {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() noexcept { return *current().load(std::memory_order_relaxed); }

Backend active_backend() noexcept { return active().backend; }

bool set_backend(Backend b) noexcept {
  if (b == Backend::kScalar) {
    current().store(&scalar_table());
    return true;
  }
  if (!avx2_supported()) return false;
  current().store(avx2_table());
  return true;
}

std::string_view backend_name(Backend b) noexcept {
  return b == Backend::kAvx2 ? "avx2" : "scalar";
}

}  // namespace idmask::kernels
