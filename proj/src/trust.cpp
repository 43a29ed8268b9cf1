#include "gradtrust/trust.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "gradtrust/error.hpp"
#include "gradtrust/kernels.hpp"

namespace gradtrust {
namespace {

void check_k(std::size_t k, std::size_t classes) {
  if (k < 1 || k + 1 > classes) {
    throw Error(ErrorCode::InvalidK, "k = " + std::to_string(k) + " violates 1 <= k <= N-1 (N = " +
                                         std::to_string(classes) + ")");
  }
}

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (v[j] > v[best]) best = j;
  }
  return best;
}

}  // namespace

std::size_t predict(std::span<const double> logits) {
  if (logits.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "prediction needs at least 2 classes");
  }
  return argmax_lowest(logits);
}

CounterfactualPlan counterfactual_targets(const Vector& logits, std::size_t k) {
  const std::size_t n = logits.size();
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "prediction needs at least 2 classes");
  check_k(k, n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });

  // order[0] is the prediction: highest logit, lowest index among ties.
  std::vector<std::size_t> chosen(order.begin() + 1, order.begin() + 1 + static_cast<long>(k));
  std::vector<double> targets(n, 0.0);
  for (auto c : chosen) targets[c] = 1.0;
  return {order[0], std::move(chosen), Vector(std::move(targets)), k};
}

double loss_normalizer(std::size_t k) { return k <= 1 ? 1.0 : 1.0 / static_cast<double>(k - 1); }

double counterfactual_loss(const Vector& logits, const CounterfactualPlan& plan,
                           std::optional<double> scale) {
  if (plan.targets.size() != logits.size()) {
    throw Error(ErrorCode::ShapeMismatch, "plan and logits disagree on class count");
  }
  double s = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    const double r = logits[j] - plan.targets[j];
    s += r * r;
  }
  return scale.value_or(loss_normalizer(plan.k)) * s;
}

Vector loss_gradient_wrt_logits(const Vector& logits, const CounterfactualPlan& plan,
                                std::optional<double> scale) {
  if (plan.targets.size() != logits.size()) {
    throw Error(ErrorCode::ShapeMismatch, "plan and logits disagree on class count");
  }
  const double c = 2.0 * scale.value_or(loss_normalizer(plan.k));
  std::vector<double> out(logits.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = c * (logits[j] - plan.targets[j]);
  return Vector(std::move(out));
}

Matrix grad_last_layer(const Vector& features, const Vector& residual_grad) {
  return outer(features, residual_grad);
}

Vector variance_vector(const Matrix& grad, VarianceMode mode) {
  const std::size_t d = grad.rows();
  const std::size_t n = grad.cols();
  if (d == 1) return Vector::zeros(n);

  const auto& k = kernels::active();
  const double inv_d = 1.0 / static_cast<double>(d);
  std::vector<double> mean(n, 0.0), acc(n, 0.0);

  if (mode == VarianceMode::SquaredEntries) {
    for (std::size_t i = 0; i < d; ++i) k.add_squares(grad.row(i).data(), mean.data(), n);
    k.scale(inv_d, mean.data(), mean.data(), n);
    for (std::size_t i = 0; i < d; ++i) {
      k.add_sq_dev_of_squares(grad.row(i).data(), mean.data(), acc.data(), n);
    }
  } else {
    for (std::size_t i = 0; i < d; ++i) k.axpy(1.0, grad.row(i).data(), mean.data(), n);
    k.scale(inv_d, mean.data(), mean.data(), n);
    std::vector<double> dev(n);
    for (std::size_t i = 0; i < d; ++i) {
      const auto row = grad.row(i);
      std::copy(row.begin(), row.end(), dev.begin());
      k.axpy(-1.0, mean.data(), dev.data(), n);
      k.add_squares(dev.data(), acc.data(), n);
    }
  }
  k.scale(inv_d, acc.data(), acc.data(), n);
  return Vector(std::move(acc));
}

double trust_ratio(const Vector& variance, const CounterfactualPlan& plan, DenominatorMode mode) {
  if (variance.size() != plan.targets.size()) {
    throw Error(ErrorCode::ShapeMismatch, "variance and plan disagree on class count");
  }
  const std::size_t peak = argmax_lowest(variance.values());
  const double numerator = variance[peak];

  double sum = 0.0;
  std::size_t count = 0;
  if (mode == DenominatorMode::Counterfactuals) {
    for (auto c : plan.counterfactuals) {
      if (c == peak) continue;
      sum += variance[c];
      ++count;
    }
    // k = 1 with the peak on the lone counterfactual: compare against the prediction.
    if (count == 0) {
      sum = variance[plan.predicted];
      count = 1;
    }
  } else {
    for (std::size_t j = 0; j < variance.size(); ++j) {
      if (j == peak) continue;
      sum += variance[j];
      ++count;
    }
  }
  const double denominator = sum / static_cast<double>(count);

  if (numerator == 0.0) {
    throw Error(ErrorCode::DegenerateScore, "all per-class gradient variances are zero");
  }
  if (denominator == 0.0) return std::numeric_limits<double>::infinity();
  return numerator / denominator;
}

GradientReport gradtrust_report(const Vector& features, const Vector& logits,
                                const TrustOptions& options) {
  const auto plan = counterfactual_targets(logits, options.k);
  Vector residual = loss_gradient_wrt_logits(logits, plan, options.loss_scale);
  Matrix grad = grad_last_layer(features, residual);
  Vector variance = variance_vector(grad, options.variance);
  const double score = trust_ratio(variance, plan, options.denominator);
  return {std::move(grad), std::move(residual), std::move(variance), score};
}

double gradtrust_score(const Vector& features, const Vector& logits, const TrustOptions& options) {
  return gradtrust_report(features, logits, options).score;
}

std::vector<TrustScore> batch_gradtrust(const LastLayerBundle& bundle, const TrustOptions& options) {
  check_k(options.k, bundle.classes());
  std::optional<LastLayerBundle> owned;
  const LastLayerBundle* b = &bundle;
  if (!bundle.logits) {
    owned = ensure_logits(bundle);
    b = &*owned;
  }

  std::vector<TrustScore> out(b->samples());
  for (std::size_t s = 0; s < b->samples(); ++s) {
    try {
      out[s].value = gradtrust_score(b->features.row_vector(s), b->logits->row_vector(s), options);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateScore) throw;
      out[s].degenerate = true;
    }
  }
  return out;
}

}  // namespace gradtrust
