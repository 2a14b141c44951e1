#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "ebseg/simd/kernels.hpp"

using namespace ebseg;

namespace {

template <class T>
std::vector<T> random_vec(std::size_t n, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return v;
}

template <class T>
void check_gemm_equivalence(T tol) {
  if (!simd::supported(simd::Level::avx2)) return;
  std::mt19937 rng(11);
  const std::size_t sizes[] = {1, 3, 4, 5, 8, 15, 16, 17, 33, 64};
  for (std::size_t m : sizes)
    for (std::size_t n : sizes)
      for (std::size_t k : {std::size_t{1}, std::size_t{7}, std::size_t{27}, std::size_t{64}}) {
        auto a = random_vec<T>(m * k, rng);
        auto b = random_vec<T>(k * n, rng);
        auto c0 = random_vec<T>(m * n, rng);
        for (bool acc : {false, true}) {
          auto ref = c0;
          auto vec = c0;
          simd::scalar::gemm<T>(m, n, k, a.data(), k, b.data(), n, ref.data(), n, acc);
          simd::avx2::gemm(m, n, k, a.data(), k, b.data(), n, vec.data(), n, acc);
          for (std::size_t i = 0; i < ref.size(); ++i) {
            REQUIRE(std::abs(ref[i] - vec[i]) <= tol * (1 + std::abs(ref[i])));
          }
        }
      }
}

}  // namespace

TEST_CASE("scalar gemm matches a naive triple loop with leading dimensions") {
  std::mt19937 rng(3);
  const std::size_t m = 5, n = 6, k = 4, lda = 7, ldb = 9, ldc = 8;
  auto a = random_vec<double>(m * lda, rng);
  auto b = random_vec<double>(k * ldb, rng);
  std::vector<double> c(m * ldc, 0.5);
  simd::scalar::gemm<double>(m, n, k, a.data(), lda, b.data(), ldb, c.data(), ldc, true);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.5;
      for (std::size_t p = 0; p < k; ++p) s += a[i * lda + p] * b[p * ldb + j];
      CHECK(c[i * ldc + j] == doctest::Approx(s).epsilon(1e-14));
    }
  // Padding columns are untouched.
  CHECK(c[n] == 0.5);
}

TEST_CASE("avx2 gemm agrees with the scalar reference") {
  check_gemm_equivalence<float>(1e-5f);
  check_gemm_equivalence<double>(1e-12);
}

TEST_CASE("avx2 axpy and dot agree with the scalar reference") {
  if (!simd::supported(simd::Level::avx2)) return;
  std::mt19937 rng(5);
  for (std::size_t n : {0, 1, 7, 8, 9, 31, 100, 1023}) {
    auto x = random_vec<float>(n, rng);
    auto y = random_vec<float>(n, rng);
    auto y2 = y;
    simd::scalar::axpy<float>(n, 0.75f, x.data(), y.data());
    simd::avx2::axpy(n, 0.75f, x.data(), y2.data());
    for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == doctest::Approx(y2[i]).epsilon(1e-6));
    auto xd = random_vec<double>(n, rng);
    auto yd = random_vec<double>(n, rng);
    CHECK(simd::avx2::dot(n, xd.data(), yd.data()) ==
          doctest::Approx(simd::scalar::dot<double>(n, xd.data(), yd.data())).epsilon(1e-12));
  }
}

TEST_CASE("dispatch level can be switched and restored") {
  const auto original = simd::active_level();
  simd::set_level(simd::Level::scalar);
  CHECK(simd::active_level() == simd::Level::scalar);
  float a[] = {1, 2}, b[] = {3, 4};
  CHECK(simd::dot<float>(2, a, b) == 11.0f);
  simd::set_level(original);
  CHECK(simd::active_level() == original);
  CHECK(simd::level_name(simd::Level::avx2) == "avx2");
  if (!simd::supported(simd::Level::avx2)) CHECK_THROWS_AS(simd::set_level(simd::Level::avx2), std::invalid_argument);
}
