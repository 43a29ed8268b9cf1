#pragma once
// Elementwise helpers shared by the scoring modules. Not part of the public
// surface.

#include <cmath>
#include <span>

#include "gradtrust/kernels.hpp"

namespace gradtrust::detail {

inline double logsumexp(std::span<const double> x) {
  const auto& k = kernels::active();
  const double m = k.max(x.data(), x.size());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

inline double abs_sum(std::span<const double> x) {
  return kernels::active().abs_sum(x.data(), x.size());
}

}  // namespace gradtrust::detail
