#pragma once

// Dense double-precision kernels used by the MLP and the SVM kernel matrix.
//
// Each kernel has a scalar reference implementation and, on x86-64, an AVX2+FMA
// variant. The variant is chosen once per process from CPUID; set the
// environment variable AUTHID_SIMD=scalar (or call set_backend) to force the
// reference path. Results of the two paths agree to rounding, not bit-exactly,
// so trained models are reproducible per backend.

#include <cstddef>
#include <span>
#include <string_view>

namespace authid::simd {

enum class Backend { scalar, avx2 };

Backend active_backend() noexcept;
// Returns false (and leaves the backend unchanged) if the CPU lacks support.
bool set_backend(Backend backend) noexcept;
bool backend_supported(Backend backend) noexcept;
std::string_view backend_name(Backend backend) noexcept;

// sum_i a[i] * b[i]
double dot(const double* a, const double* b, std::size_t n) noexcept;
// y[i] += alpha * x[i]
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
// sum_i (a[i] - b[i])^2
double squared_distance(const double* a, const double* b, std::size_t n) noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  return dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept {
  axpy(alpha, x.data(), y.data(), x.size());
}
inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  return squared_distance(a.data(), b.data(), a.size());
}

// Fixed-backend entry points, exposed for equivalence tests and benchmarks.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
double squared_distance(const double* a, const double* b, std::size_t n) noexcept;
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define AUTHID_HAVE_AVX2_KERNELS 1
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
double squared_distance(const double* a, const double* b, std::size_t n) noexcept;
}  // namespace avx2
#endif

}  // namespace authid::simd
