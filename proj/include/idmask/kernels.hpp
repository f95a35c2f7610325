#pragma once

// Dense float64 inner loops used by the embedding models, the training loop
// and the kernel double sums. Each kernel has a portable scalar reference and
// an AVX2/FMA variant; the variant is chosen once at startup from CPUID and
// can be overridden with IDMASK_SIMD=scalar or set_backend().

#include <cstddef>
#include <span>
#include <string_view>

namespace idmask::kernels {

enum class Backend { kScalar, kAvx2 };

struct KernelTable {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y = W x, W row-major rows x cols
  void (*gemv)(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y);
  // y = W^T v, y has cols entries
  void (*gemv_t)(const double* w, std::size_t rows, std::size_t cols, const double* v, double* y);
};

const KernelTable& scalar_table() noexcept;
/// Null when the build has no AVX2 variant (non-x86 targets).
const KernelTable* avx2_table() noexcept;
bool avx2_supported() noexcept;

const KernelTable& active() noexcept;
Backend active_backend() noexcept;
/// Returns false (and leaves the backend unchanged) if `b` is unavailable.
bool set_backend(Backend b) noexcept;
std::string_view backend_name(Backend b) noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}
inline void gemv(std::span<const double> w, std::size_t rows, std::size_t cols,
                 std::span<const double> x, std::span<double> y) {
  active().gemv(w.data(), rows, cols, x.data(), y.data());
}
inline void gemv_t(std::span<const double> w, std::size_t rows, std::size_t cols,
                   std::span<const double> v, std::span<double> y) {
  active().gemv_t(w.data(), rows, cols, v.data(), y.data());
}

}  // namespace idmask::kernels
