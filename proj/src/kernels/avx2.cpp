// AVX2 + FMA kernels, 4 doubles per lane group. This file is compiled with
// -mavx2 -mfma; nothing here may run before dispatch has checked CPUID.

#include <immintrin.h>

#include <cmath>
#include <limits>

#include "variants.hpp"

namespace gradtrust::kernels::detail {
namespace {

constexpr std::size_t kWidth = 4;

inline double hsum(__m256d v) noexcept {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
}

double dot(const double* a, const double* b, std::size_t n) noexcept {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 2 * kWidth <= n; i += 2 * kWidth) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + kWidth), _mm256_loadu_pd(b + i + kWidth),
                           acc1);
  }
  for (; i + kWidth <= n; i += kWidth) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void scale(double alpha, const double* x, double* out, std::size_t n) noexcept {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) out[i] = alpha * x[i];
}

double sum(const double* x, std::size_t n) noexcept {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double abs_sum(const double* x, std::size_t n) noexcept {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) {
    acc = _mm256_add_pd(acc, _mm256_andnot_pd(sign_mask, _mm256_loadu_pd(x + i)));
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += std::fabs(x[i]);
  return s;
}

double sum_sq_dev(const double* x, double center, std::size_t n) noexcept {
  const __m256d vc = _mm256_set1_pd(center);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), vc);
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = x[i] - center;
    s += d * d;
  }
  return s;
}

double max(const double* x, std::size_t n) noexcept {
  double m = -std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  if (n >= kWidth) {
    __m256d acc = _mm256_loadu_pd(x);
    for (i = kWidth; i + kWidth <= n; i += kWidth) acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
    alignas(32) double lanes[kWidth];
    _mm256_store_pd(lanes, acc);
    for (double v : lanes) m = v > m ? v : m;
  }
  for (; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

void add_squares(const double* x, double* acc, std::size_t n) noexcept {
  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) {
    const __m256d v = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(acc + i, _mm256_fmadd_pd(v, v, _mm256_loadu_pd(acc + i)));
  }
  for (; i < n; ++i) acc[i] = std::fma(x[i], x[i], acc[i]);
}

void add_sq_dev_of_squares(const double* x, const double* center, double* acc,
                           std::size_t n) noexcept {
  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d d = _mm256_fmsub_pd(v, v, _mm256_loadu_pd(center + i));
    _mm256_storeu_pd(acc + i, _mm256_fmadd_pd(d, d, _mm256_loadu_pd(acc + i)));
  }
  for (; i < n; ++i) {
    const double d = std::fma(x[i], x[i], -center[i]);
    acc[i] = std::fma(d, d, acc[i]);
  }
}

constexpr KernelTable kAvx2{
    Isa::Avx2, dot, axpy, scale, sum, abs_sum, sum_sq_dev, max, add_squares,
    add_sq_dev_of_squares,
};

}  // namespace

const KernelTable& avx2_table() noexcept { return kAvx2; }

}  // namespace gradtrust::kernels::detail
