#pragma once
// GradTrust: how much more the last layer would have to move to accommodate
// the strongest alternative classes than to reinforce the prediction.
//
// For one sample with penultimate features f and logits y:
//   1. predicted class = argmax y; counterfactual set C = the k next-highest
//      logits; target vector t has ones exactly on C.
//   2. J(W) = c * sum_j (y_j - t_j)^2 with c = 1/(k-1) (c = 1 when k = 1).
//   3. dJ/dW = f ⊗ dJ/dy, a d x N rank-one matrix.
//   4. v_j = population variance over the d entries of column j squared.
//   5. score = max_j v_j / mean_{i in C, i != argmax v} v_i.
//
// Because every column is a multiple of f, v_j = (dJ/dy_j)^4 * Var(f ⊙ f):
// the score depends on f only through whether Var(f ⊙ f) is zero.

#include <cstddef>
#include <optional>
#include <vector>

#include "gradtrust/bundle.hpp"
#include "gradtrust/tensor.hpp"

namespace gradtrust {

inline constexpr std::size_t kDefaultCounterfactuals = 10;

struct CounterfactualPlan {
  std::size_t predicted;
  std::vector<std::size_t> counterfactuals;  // descending logit, then ascending index
  Vector targets;
  std::size_t k;
};

// What each per-class variance is taken over.
enum class VarianceMode {
  SquaredEntries,  // Var(g_{·j} ⊙ g_{·j})
  RawEntries,      // Var(g_{·j})
};

// Which classes the denominator averages.
enum class DenominatorMode {
  Counterfactuals,  // C without the argmax of v
  AllRemaining,     // every class except the argmax of v
};

struct TrustOptions {
  std::size_t k = kDefaultCounterfactuals;
  VarianceMode variance = VarianceMode::SquaredEntries;
  DenominatorMode denominator = DenominatorMode::Counterfactuals;
  // Overrides the 1/(k-1) loss normalizer. The score is invariant to it.
  std::optional<double> loss_scale = std::nullopt;
};

struct GradientReport {
  Matrix grad;          // d x N
  Vector residual_grad; // dJ/dy
  Vector variance;      // per class
  double score;         // may be +inf
};

// Lowest index wins ties. Throws InvalidArgument for fewer than 2 classes.
std::size_t predict(std::span<const double> logits);
inline std::size_t predict(const Vector& logits) { return predict(logits.values()); }

// Throws Error(InvalidK) unless 1 <= k <= N-1.
CounterfactualPlan counterfactual_targets(const Vector& logits, std::size_t k);

// The 1/(k-1) normalizer, or 1 when k = 1.
double loss_normalizer(std::size_t k);

// J = scale * sum_j (logits_j - targets_j)^2, with scale defaulting to loss_normalizer(k).
double counterfactual_loss(const Vector& logits, const CounterfactualPlan& plan,
                           std::optional<double> scale = std::nullopt);

// 2 * scale * (logits - targets)
Vector loss_gradient_wrt_logits(const Vector& logits, const CounterfactualPlan& plan,
                                std::optional<double> scale = std::nullopt);

// features ⊗ residual_grad; bias gradient not included.
Matrix grad_last_layer(const Vector& features, const Vector& residual_grad);

Vector variance_vector(const Matrix& grad, VarianceMode mode = VarianceMode::SquaredEntries);

// Ratio of the peak variance to the mean over the denominator set (the
// counterfactuals, or every class, minus the peak). If that set is empty
// (k = 1 with the peak on the counterfactual) the predicted class is used.
// +inf when the mean is zero and the peak is positive; Error(DegenerateScore)
// when both are zero.
double trust_ratio(const Vector& variance, const CounterfactualPlan& plan,
                   DenominatorMode mode = DenominatorMode::Counterfactuals);

GradientReport gradtrust_report(const Vector& features, const Vector& logits,
                                const TrustOptions& options = {});

double gradtrust_score(const Vector& features, const Vector& logits,
                       const TrustOptions& options = {});

struct TrustScore {
  double value = 0.0;  // 0 when degenerate
  bool degenerate = false;

  friend bool operator==(const TrustScore&, const TrustScore&) = default;
};

// Per-sample scores in input order. Logits come from the bundle when present,
// otherwise they are recomputed. Throws Error(InvalidK) before scoring any
// sample when k is out of range for the bundle's class count.
std::vector<TrustScore> batch_gradtrust(const LastLayerBundle& bundle,
                                        const TrustOptions& options = {});

}  // namespace gradtrust
