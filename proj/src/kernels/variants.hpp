#pragma once

#include "gradtrust/kernels.hpp"

namespace gradtrust::kernels::detail {

#if defined(GRADTRUST_HAVE_AVX2)
const KernelTable& avx2_table() noexcept;
#endif
#if defined(GRADTRUST_HAVE_NEON)
const KernelTable& neon_table() noexcept;
#endif

}  // namespace gradtrust::kernels::detail
