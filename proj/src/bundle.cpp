#include <algorithm>
#include <cmath>
#include <string>

#include "gradtrust/bundle.hpp"

namespace gradtrust {

std::string Violation::describe() const {
  std::string out = field;
  if (index) out += "[" + std::to_string(*index) + "]";
  return out + ": " + message;
}

std::vector<Violation> validate_bundle(const LastLayerBundle& bundle) {
  std::vector<Violation> out;
  const std::size_t m = bundle.samples();
  const std::size_t d = bundle.feature_dim();
  const std::size_t n = bundle.classes();

  if (bundle.weights.rows() != d) {
    out.push_back({"weights", std::nullopt,
                   "has " + std::to_string(bundle.weights.rows()) +
                       " rows, features have dimension " + std::to_string(d)});
  }
  if (bundle.bias.size() != n) {
    out.push_back({"bias", std::nullopt,
                   "length " + std::to_string(bundle.bias.size()) + " != classes " +
                       std::to_string(n)});
  }
  if (bundle.labels.size() != m) {
    out.push_back({"labels", std::nullopt,
                   "length " + std::to_string(bundle.labels.size()) + " != samples " +
                       std::to_string(m)});
  }
  for (std::size_t i = 0; i < bundle.labels.size(); ++i) {
    const auto label = bundle.labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= n) {
      out.push_back({"labels", i,
                     "label " + std::to_string(label) + " outside [0, " + std::to_string(n) +
                         ")"});
    }
  }
  if (bundle.logits && (bundle.logits->rows() != m || bundle.logits->cols() != n)) {
    out.push_back({"logits", std::nullopt,
                   "shape " + std::to_string(bundle.logits->rows()) + "x" +
                       std::to_string(bundle.logits->cols()) + ", expected " +
                       std::to_string(m) + "x" + std::to_string(n)});
  }
  return out;
}

LastLayerBundle ensure_logits(LastLayerBundle bundle) {
  if (bundle.logits) return bundle;
  const std::size_t m = bundle.samples();
  const std::size_t n = bundle.classes();
  std::vector<double> values;
  values.reserve(m * n);
  for (std::size_t s = 0; s < m; ++s) {
    const Vector y = affine_transposed(bundle.weights, bundle.features.row(s), bundle.bias);
    values.insert(values.end(), y.begin(), y.end());
  }
  bundle.logits = Matrix(m, n, std::move(values));
  return bundle;
}

std::optional<double> logit_consistency(const LastLayerBundle& bundle) {
  if (!bundle.logits) return std::nullopt;
  double worst = 0.0;
  for (std::size_t s = 0; s < bundle.samples(); ++s) {
    const Vector y = affine_transposed(bundle.weights, bundle.features.row(s), bundle.bias);
    const auto stored = bundle.logits->row(s);
    for (std::size_t j = 0; j < y.size(); ++j) worst = std::max(worst, std::fabs(stored[j] - y[j]));
  }
  return worst;
}

}  // namespace gradtrust
