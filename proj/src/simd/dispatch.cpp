#include <atomic>
#include <cstdlib>
#include <string_view>

#include "authid/simd/kernels.hpp"

namespace authid::simd {
namespace {

struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t) noexcept;
  void (*axpy)(double, const double*, double*, std::size_t) noexcept;
  double (*squared_distance)(const double*, const double*, std::size_t) noexcept;
};

constexpr KernelTable kScalarTable{&scalar::dot, &scalar::axpy, &scalar::squared_distance};
#ifdef AUTHID_HAVE_AVX2_KERNELS
constexpr KernelTable kAvx2Table{&avx2::dot, &avx2::axpy, &avx2::squared_distance};
#endif

bool cpu_has_avx2() noexcept {
#if defined(AUTHID_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() noexcept {
  if (const char* env = std::getenv("AUTHID_SIMD"); env && std::string_view(env) == "scalar") {
    return Backend::scalar;
  }
  return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

const KernelTable& table_for(Backend b) noexcept {
#ifdef AUTHID_HAVE_AVX2_KERNELS
  if (b == Backend::avx2) return kAvx2Table;
#endif
  (void)b;
  return kScalarTable;
}

std::atomic<Backend>& current() noexcept {
  static std::atomic<Backend> backend{initial_backend()};
  return backend;
}

}  // namespace

Backend active_backend() noexcept { return current().load(std::memory_order_relaxed); }

bool backend_supported(Backend backend) noexcept {
  return backend == Backend::scalar || cpu_has_avx2();
}

bool set_backend(Backend backend) noexcept {
  if (!backend_supported(backend)) return false;
  current().store(backend, std::memory_order_relaxed);
  return true;
}

std::string_view backend_name(Backend backend) noexcept {
  return backend == Backend::avx2 ? "avx2" : "scalar";
}

double dot(const double* a, const double* b, std::size_t n) noexcept {
  return table_for(active_backend()).dot(a, b, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept {
  table_for(active_backend()).axpy(alpha, x, y, n);
}

double squared_distance(const double* a, const double* b, std::size_t n) noexcept {
  return table_for(active_backend()).squared_distance(a, b, n);
}

}  // namespace authid::simd
