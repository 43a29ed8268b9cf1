// NEON kernels for aarch64, 2 doubles per register. Advanced SIMD is
// mandatory on aarch64, so no runtime probe is needed beyond compilation.

#include <arm_neon.h>

#include <cmath>
#include <limits>

#include "variants.hpp"

namespace gradtrust::kernels::detail {
namespace {

constexpr std::size_t kWidth = 2;

double dot(const double* a, const double* b, std::size_t n) noexcept {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 * kWidth <= n; i += 2 * kWidth) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + kWidth), vld1q_f64(b + i + kWidth));
  }
  for (; i + kWidth <= n; i += kWidth) acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void scale(double alpha, const double* x, double* out, std::size_t n) noexcept {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

double sum(const double* x, std::size_t n) noexcept {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) acc = vaddq_f64(acc, vld1q_f64(x + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double abs_sum(const double* x, std::size_t n) noexcept {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) acc = vaddq_f64(acc, vabsq_f64(vld1q_f64(x + i)));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += std::fabs(x[i]);
  return s;
}

double sum_sq_dev(const double* x, double center, std::size_t n) noexcept {
  const float64x2_t vc = vdupq_n_f64(center);
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) {
    const float64x2_t d = vsubq_f64(vld1q_f64(x + i), vc);
    acc = vfmaq_f64(acc, d, d);
  }
  double s = vaddvq_f64(acc);
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
    float64x2_t acc = vld1q_f64(x);
    for (i = kWidth; i + kWidth <= n; i += kWidth) acc = vmaxq_f64(acc, vld1q_f64(x + i));
    m = vmaxvq_f64(acc);
  }
  for (; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

void add_squares(const double* x, double* acc, std::size_t n) noexcept {
  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) {
    const float64x2_t v = vld1q_f64(x + i);
    vst1q_f64(acc + i, vfmaq_f64(vld1q_f64(acc + i), v, v));
  }
  for (; i < n; ++i) acc[i] = std::fma(x[i], x[i], acc[i]);
}

void add_sq_dev_of_squares(const double* x, const double* center, double* acc,
                           std::size_t n) noexcept {
  std::size_t i = 0;
  for (; i + kWidth <= n; i += kWidth) {
    const float64x2_t v = vld1q_f64(x + i);
    const float64x2_t d = vsubq_f64(vmulq_f64(v, v), vld1q_f64(center + i));
    vst1q_f64(acc + i, vfmaq_f64(vld1q_f64(acc + i), d, d));
  }
  for (; i < n; ++i) {
    const double d = x[i] * x[i] - center[i];
    acc[i] = std::fma(d, d, acc[i]);
  }
}

constexpr KernelTable kNeon{
    Isa::Neon, dot, axpy, scale, sum, abs_sum, sum_sq_dev, max, add_squares,
    add_sq_dev_of_squares,
};

}  // namespace

const KernelTable& neon_table() noexcept { return kNeon; }

}  // namespace gradtrust::kernels::detail
