#include "gradtrust/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "gradtrust/error.hpp"
#include "gradtrust/kernels.hpp"
#include "gradtrust/trust.hpp"
#include "numeric_detail.hpp"

namespace gradtrust {
namespace {

void require_classes(const Vector& logits) {
  if (logits.size() < 2) throw Error(ErrorCode::InvalidArgument, "metrics need at least 2 classes");
}

// Largest and second-largest entries.
std::pair<double, double> top_two(std::span<const double> v) {
  double first = v[0] >= v[1] ? v[0] : v[1];
  double second = v[0] >= v[1] ? v[1] : v[0];
  for (std::size_t i = 2; i < v.size(); ++i) {
    if (v[i] > first) {
      second = first;
      first = v[i];
    } else if (v[i] > second) {
      second = v[i];
    }
  }
  return {first, second};
}

}  // namespace

std::string_view to_string(MetricId id) noexcept {
  switch (id) {
    case MetricId::Softmax: return "softmax";
    case MetricId::Entropy: return "entropy";
    case MetricId::Nll: return "nll";
    case MetricId::Margin: return "margin";
    case MetricId::GradNorm: return "gradnorm";
    case MetricId::GradTrust: return "gradtrust";
  }
  return "unknown";
}

std::optional<MetricId> parse_metric(std::string_view name) noexcept {
  for (auto id : kAllMetrics) {
    if (to_string(id) == name) return id;
  }
  return std::nullopt;
}

double softmax_confidence(const Vector& logits) {
  require_classes(logits);
  const Vector p = softmax(logits);
  return kernels::active().max(p.data(), p.size());
}

double entropy_trust(const Vector& logits) {
  require_classes(logits);
  const double lse = detail::logsumexp(logits.values());
  double s = 0.0;
  for (double y : logits) {
    const double log_p = y - lse;
    const double p = std::exp(log_p);
    if (p > 0.0) s += p * log_p;
  }
  return s;
}

double nll_trust(const Vector& logits) {
  require_classes(logits);
  return logits[predict(logits)] - detail::logsumexp(logits.values());
}

double margin_trust(const Vector& logits, MarginMode mode) {
  require_classes(logits);
  if (mode == MarginMode::Logit) {
    const auto [a, b] = top_two(logits.values());
    return a - b;
  }
  const Vector p = softmax(logits);
  const auto [a, b] = top_two(p.values());
  return a - b;
}

double gradnorm_trust(const Vector& features, const Vector& logits) {
  require_classes(logits);
  const Vector p = softmax(logits);
  const double u = 1.0 / static_cast<double>(p.size());
  std::vector<double> residual(p.begin(), p.end());
  for (auto& r : residual) r -= u;
  return detail::abs_sum(features.values()) * detail::abs_sum(residual);
}

}  // namespace gradtrust
