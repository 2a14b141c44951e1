#include "ebseg/simd/kernels.hpp"

#if defined(EBSEG_HAVE_AVX2)

#include <immintrin.h>

#include <algorithm>

namespace ebseg::simd::avx2 {
namespace {

struct F32 {
  using T = float;
  using V = __m256;
  static constexpr std::size_t lanes = 8;
  static V zero() { return _mm256_setzero_ps(); }
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V broadcast(T x) { return _mm256_set1_ps(x); }
  static V fmadd(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
  static T hsum(V v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 s = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, s);
    s = _mm_add_ss(s, sh);
    return _mm_cvtss_f32(s);
  }
};

struct F64 {
  using T = double;
  using V = __m256d;
  static constexpr std::size_t lanes = 4;
  static V zero() { return _mm256_setzero_pd(); }
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V broadcast(T x) { return _mm256_set1_pd(x); }
  static V fmadd(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static T hsum(V v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d h = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, h));
  }
};

// 4 x (2 * lanes) register tile; each B row slice is loaded once per k and
// reused across the four A rows.
template <class S>
void gemm_impl(std::size_t m, std::size_t n, std::size_t k, const typename S::T* a,
               std::size_t lda, const typename S::T* b, std::size_t ldb, typename S::T* c,
               std::size_t ldc, bool accumulate) {
  using T = typename S::T;
  using V = typename S::V;
  constexpr std::size_t L = S::lanes;
  constexpr std::size_t NB = 2 * L;

  if (!accumulate) {
    for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, T(0));
  }

  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const T* a0 = a + (i + 0) * lda;
    const T* a1 = a + (i + 1) * lda;
    const T* a2 = a + (i + 2) * lda;
    const T* a3 = a + (i + 3) * lda;
    T* c0 = c + (i + 0) * ldc;
    T* c1 = c + (i + 1) * ldc;
    T* c2 = c + (i + 2) * ldc;
    T* c3 = c + (i + 3) * ldc;
    std::size_t j = 0;
    for (; j + NB <= n; j += NB) {
      V r00 = S::load(c0 + j), r01 = S::load(c0 + j + L);
      V r10 = S::load(c1 + j), r11 = S::load(c1 + j + L);
      V r20 = S::load(c2 + j), r21 = S::load(c2 + j + L);
      V r30 = S::load(c3 + j), r31 = S::load(c3 + j + L);
      for (std::size_t p = 0; p < k; ++p) {
        const T* bp = b + p * ldb + j;
        const V b0 = S::load(bp);
        const V b1 = S::load(bp + L);
        V av = S::broadcast(a0[p]);
        r00 = S::fmadd(av, b0, r00);
        r01 = S::fmadd(av, b1, r01);
        av = S::broadcast(a1[p]);
        r10 = S::fmadd(av, b0, r10);
        r11 = S::fmadd(av, b1, r11);
        av = S::broadcast(a2[p]);
        r20 = S::fmadd(av, b0, r20);
        r21 = S::fmadd(av, b1, r21);
        av = S::broadcast(a3[p]);
        r30 = S::fmadd(av, b0, r30);
        r31 = S::fmadd(av, b1, r31);
      }
      S::store(c0 + j, r00), S::store(c0 + j + L, r01);
      S::store(c1 + j, r10), S::store(c1 + j + L, r11);
      S::store(c2 + j, r20), S::store(c2 + j + L, r21);
      S::store(c3 + j, r30), S::store(c3 + j + L, r31);
    }
    for (; j + L <= n; j += L) {
      V r0 = S::load(c0 + j), r1 = S::load(c1 + j), r2 = S::load(c2 + j), r3 = S::load(c3 + j);
      for (std::size_t p = 0; p < k; ++p) {
        const V bv = S::load(b + p * ldb + j);
        r0 = S::fmadd(S::broadcast(a0[p]), bv, r0);
        r1 = S::fmadd(S::broadcast(a1[p]), bv, r1);
        r2 = S::fmadd(S::broadcast(a2[p]), bv, r2);
        r3 = S::fmadd(S::broadcast(a3[p]), bv, r3);
      }
      S::store(c0 + j, r0), S::store(c1 + j, r1), S::store(c2 + j, r2), S::store(c3 + j, r3);
    }
    for (; j < n; ++j) {
      T s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
      for (std::size_t p = 0; p < k; ++p) {
        const T bv = b[p * ldb + j];
        s0 += a0[p] * bv;
        s1 += a1[p] * bv;
        s2 += a2[p] * bv;
        s3 += a3[p] * bv;
      }
      c0[j] = s0, c1[j] = s1, c2[j] = s2, c3[j] = s3;
    }
  }
  for (; i < m; ++i) {
    const T* ar = a + i * lda;
    T* cr = c + i * ldc;
    std::size_t j = 0;
    for (; j + L <= n; j += L) {
      V r = S::load(cr + j);
      for (std::size_t p = 0; p < k; ++p) r = S::fmadd(S::broadcast(ar[p]), S::load(b + p * ldb + j), r);
      S::store(cr + j, r);
    }
    for (; j < n; ++j) {
      T s = cr[j];
      for (std::size_t p = 0; p < k; ++p) s += ar[p] * b[p * ldb + j];
      cr[j] = s;
    }
  }
}

template <class S>
void axpy_impl(std::size_t n, typename S::T alpha, const typename S::T* x, typename S::T* y) {
  constexpr std::size_t L = S::lanes;
  const auto av = S::broadcast(alpha);
  std::size_t i = 0;
  for (; i + L <= n; i += L) S::store(y + i, S::fmadd(av, S::load(x + i), S::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <class S>
typename S::T dot_impl(std::size_t n, const typename S::T* x, const typename S::T* y) {
  constexpr std::size_t L = S::lanes;
  auto acc0 = S::zero();
  auto acc1 = S::zero();
  std::size_t i = 0;
  for (; i + 2 * L <= n; i += 2 * L) {
    acc0 = S::fmadd(S::load(x + i), S::load(y + i), acc0);
    acc1 = S::fmadd(S::load(x + i + L), S::load(y + i + L), acc1);
  }
  for (; i + L <= n; i += L) acc0 = S::fmadd(S::load(x + i), S::load(y + i), acc0);
  typename S::T s = S::hsum(S::add(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

}  // namespace

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
          const float* b, std::size_t ldb, float* c, std::size_t ldc, bool accumulate) {
  gemm_impl<F32>(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  gemm_impl<F64>(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void axpy(std::size_t n, float alpha, const float* x, float* y) { axpy_impl<F32>(n, alpha, x, y); }
void axpy(std::size_t n, double alpha, const double* x, double* y) { axpy_impl<F64>(n, alpha, x, y); }
float dot(std::size_t n, const float* x, const float* y) { return dot_impl<F32>(n, x, y); }
double dot(std::size_t n, const double* x, const double* y) { return dot_impl<F64>(n, x, y); }

}  // namespace ebseg::simd::avx2

#endif
