#include <atomic>
#include <cstdlib>
#include <string>

#include "gradtrust/error.hpp"
#include "variants.hpp"

namespace gradtrust::kernels {
namespace {

const KernelTable* resolve_default() noexcept {
  if (const char* forced = std::getenv("GRADTRUST_KERNELS")) {
    const std::string_view name{forced};
    for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
      if (name == to_string(isa) && isa_supported(isa)) return &table_for(isa);
    }
    return &scalar_table();
  }
  if (isa_supported(Isa::Avx2)) return &table_for(Isa::Avx2);
  if (isa_supported(Isa::Neon)) return &table_for(Isa::Neon);
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() noexcept {
  static std::atomic<const KernelTable*> table{resolve_default()};
  return table;
}

}  // namespace

std::string_view to_string(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

bool isa_supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(GRADTRUST_HAVE_AVX2)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(GRADTRUST_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table_for(Isa isa) {
  if (!isa_supported(isa)) {
    throw Error(ErrorCode::InvalidArgument,
                "kernel variant '" + std::string(to_string(isa)) + "' is not available");
  }
  switch (isa) {
#if defined(GRADTRUST_HAVE_AVX2)
    case Isa::Avx2: return detail::avx2_table();
#endif
#if defined(GRADTRUST_HAVE_NEON)
    case Isa::Neon: return detail::neon_table();
#endif
    default: return scalar_table();
  }
}

const KernelTable& active() noexcept { return *slot().load(std::memory_order_acquire); }

void set_active(Isa isa) { slot().store(&table_for(isa), std::memory_order_release); }

}  // namespace gradtrust::kernels
