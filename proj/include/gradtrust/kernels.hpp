#pragma once
// Data-parallel f64 kernels behind the tensor layer.
//
// Every kernel has a scalar reference implementation. Architecture variants
// (AVX2+FMA on x86-64, NEON on aarch64) are compiled into separate
// translation units and chosen once at runtime from CPU feature bits. The
// GRADTRUST_KERNELS environment variable ("scalar", "avx2", "neon") forces a
// choice; an unavailable request falls back to scalar.
//
// Variants may differ from scalar in the last few ulps of reductions
// (different summation order, fused multiply-add). Elementwise kernels that
// do not fuse are bit-identical across variants.

#include <cstddef>
#include <string_view>

namespace gradtrust::kernels {

enum class Isa { Scalar, Avx2, Neon };

std::string_view to_string(Isa isa) noexcept;

struct KernelTable {
  Isa isa;
  // sum_i a[i]*b[i]
  double (*dot)(const double* a, const double* b, std::size_t n) noexcept;
  // y[i] += alpha*x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n) noexcept;
  // out[i] = alpha*x[i]
  void (*scale)(double alpha, const double* x, double* out, std::size_t n) noexcept;
  double (*sum)(const double* x, std::size_t n) noexcept;
  double (*abs_sum)(const double* x, std::size_t n) noexcept;
  // sum_i (x[i]-center)^2
  double (*sum_sq_dev)(const double* x, double center, std::size_t n) noexcept;
  double (*max)(const double* x, std::size_t n) noexcept;
  // acc[i] += x[i]^2
  void (*add_squares)(const double* x, double* acc, std::size_t n) noexcept;
  // acc[i] += (x[i]^2 - center[i])^2
  void (*add_sq_dev_of_squares)(const double* x, const double* center, double* acc,
                                std::size_t n) noexcept;
};

const KernelTable& scalar_table() noexcept;
bool isa_supported(Isa isa) noexcept;
// Throws Error(InvalidArgument) when the variant is not compiled in or the CPU
// lacks it.
const KernelTable& table_for(Isa isa);

// Process-wide active table, resolved on first use.
const KernelTable& active() noexcept;
// Override the active table (tests, benchmarking). Not thread-safe against
// concurrent kernel calls.
void set_active(Isa isa);

}  // namespace gradtrust::kernels
