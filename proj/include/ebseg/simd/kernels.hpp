#pragma once

// Dense arithmetic kernels behind the autodiff ops. Every kernel has a scalar
// reference implementation and, on x86-64, an AVX2+FMA variant. The variant is
// picked once at startup from CPUID; EBSEG_SIMD=scalar forces the reference path.

#include <cstddef>
#include <string_view>

namespace ebseg::simd {

enum class Level { scalar, avx2 };

std::string_view level_name(Level level);

/// True when this binary was built with the variant and the CPU can run it.
bool supported(Level level);

Level active_level();

/// Switches the process-wide dispatch target. Throws std::invalid_argument for
/// an unsupported level. Not thread-safe with respect to running kernels.
void set_level(Level level);

/// C[m x n] = (accumulate ? C : 0) + A[m x k] * B[k x n], all row-major.
template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
          const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate);

/// y += alpha * x
template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y);

template <class T>
T dot(std::size_t n, const T* x, const T* y);

namespace scalar {
template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
          const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate);
template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y);
template <class T>
T dot(std::size_t n, const T* x, const T* y);
}  // namespace scalar

namespace avx2 {
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
          const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate);
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);
float dot(std::size_t n, const float* x, const float* y);
double dot(std::size_t n, const double* x, const double* y);
}  // namespace avx2

}  // namespace ebseg::simd
