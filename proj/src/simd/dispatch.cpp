#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "ebseg/simd/kernels.hpp"

namespace ebseg::simd {
namespace {

bool cpu_has_avx2() {
#if defined(EBSEG_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Level detect() {
  if (const char* env = std::getenv("EBSEG_SIMD"); env != nullptr && std::string(env) == "scalar") {
    return Level::scalar;
  }
  return cpu_has_avx2() ? Level::avx2 : Level::scalar;
}

std::atomic<Level>& current() {
  static std::atomic<Level> level{detect()};
  return level;
}

}  // namespace

std::string_view level_name(Level level) {
  switch (level) {
    case Level::scalar: return "scalar";
    case Level::avx2: return "avx2";
  }
  return "unknown";
}

bool supported(Level level) {
  return level == Level::scalar || (level == Level::avx2 && cpu_has_avx2());
}

Level active_level() { return current().load(std::memory_order_relaxed); }

void set_level(Level level) {
  if (!supported(level)) {
    throw std::invalid_argument("simd level not supported on this machine: " +
                                std::string(level_name(level)));
  }
  current().store(level, std::memory_order_relaxed);
}

template <class T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
#if defined(EBSEG_HAVE_AVX2)
  if (active_level() == Level::avx2) {
    avx2::gemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
    return;
  }
#endif
  scalar::gemm<T>(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

template <class T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
#if defined(EBSEG_HAVE_AVX2)
  if (active_level() == Level::avx2) {
    avx2::axpy(n, alpha, x, y);
    return;
  }
#endif
  scalar::axpy<T>(n, alpha, x, y);
}

template <class T>
T dot(std::size_t n, const T* x, const T* y) {
#if defined(EBSEG_HAVE_AVX2)
  if (active_level() == Level::avx2) return avx2::dot(n, x, y);
#endif
  return scalar::dot<T>(n, x, y);
}

template void gemm<float>(std::size_t, std::size_t, std::size_t, const float*, std::size_t,
                          const float*, std::size_t, float*, std::size_t, bool);
template void gemm<double>(std::size_t, std::size_t, std::size_t, const double*, std::size_t,
                           const double*, std::size_t, double*, std::size_t, bool);
template void axpy<float>(std::size_t, float, const float*, float*);
template void axpy<double>(std::size_t, double, const double*, double*);
template float dot<float>(std::size_t, const float*, const float*);
template double dot<double>(std::size_t, const double*, const double*);

}  // namespace ebseg::simd
