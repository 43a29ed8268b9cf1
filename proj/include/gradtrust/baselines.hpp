#pragma once
// Comparison trust scores computable from a sample's logits (and, for
// GradNorm, its penultimate features). Every score is oriented so that a
// larger value means more trust.

#include <array>
#include <optional>
#include <string_view>

#include "gradtrust/tensor.hpp"

namespace gradtrust {

enum class MetricId { Softmax, Entropy, Nll, Margin, GradNorm, GradTrust };

inline constexpr std::array<MetricId, 6> kAllMetrics = {
    MetricId::Softmax, MetricId::Entropy,  MetricId::Nll,
    MetricId::Margin,  MetricId::GradNorm, MetricId::GradTrust,
};

// Lowercase CSV column names: softmax, entropy, nll, margin, gradnorm, gradtrust.
std::string_view to_string(MetricId id) noexcept;
std::optional<MetricId> parse_metric(std::string_view name) noexcept;

enum class MarginMode { Probability, Logit };

// max softmax probability
double softmax_confidence(const Vector& logits);

// -H(softmax(logits)), in [-ln N, 0]
double entropy_trust(const Vector& logits);

// ln p of the predicted class, via logsumexp
double nll_trust(const Vector& logits);

// top-1 minus top-2, on probabilities by default
double margin_trust(const Vector& logits, MarginMode mode = MarginMode::Probability);

// L1 norm of the last-layer weight gradient of cross-entropy against the
// uniform target: ||f||_1 * ||softmax(y) - 1/N||_1.
double gradnorm_trust(const Vector& features, const Vector& logits);

}  // namespace gradtrust
