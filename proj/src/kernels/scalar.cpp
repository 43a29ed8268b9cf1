// Reference kernels. Plain loops in index order; every other variant is
// tested against these.

#include <cmath>
#include <limits>

#include "gradtrust/kernels.hpp"

namespace gradtrust::kernels {
namespace {

double dot(const double* a, const double* b, std::size_t n) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale(double alpha, const double* x, double* out, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

double sum(const double* x, std::size_t n) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

double abs_sum(const double* x, std::size_t n) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::fabs(x[i]);
  return s;
}

double sum_sq_dev(const double* x, double center, std::size_t n) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - center;
    s += d * d;
  }
  return s;
}

double max(const double* x, std::size_t n) noexcept {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

void add_squares(const double* x, double* acc, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) acc[i] += x[i] * x[i];
}

void add_sq_dev_of_squares(const double* x, const double* center, double* acc,
                           std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] * x[i] - center[i];
    acc[i] += d * d;
  }
}

constexpr KernelTable kScalar{
    Isa::Scalar, dot, axpy, scale, sum, abs_sum, sum_sq_dev, max, add_squares,
    add_sq_dev_of_squares,
};

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

}  // namespace gradtrust::kernels
