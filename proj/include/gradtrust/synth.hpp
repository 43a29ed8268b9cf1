#pragma once
// Desk-scale lab: seeded Gaussian blobs, a one-hidden-layer ReLU network
// trained by full-batch gradient descent, export of its last layer as a
// bundle, and a central-difference oracle for the counterfactual gradient.

#include <cstdint>
#include <optional>
#include <vector>

#include "gradtrust/bundle.hpp"
#include "gradtrust/tensor.hpp"
#include "gradtrust/trust.hpp"

namespace gradtrust::synth {

struct BlobSpec {
  std::size_t n_classes = 10;
  std::size_t dim = 32;
  std::size_t samples_per_class = 100;
  double class_separation = 2.0;  // radius of the sphere holding the class means
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
};

struct Dataset {
  Matrix inputs;  // rows are samples
  std::vector<std::int64_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

struct BlobData {
  Matrix means;  // n_classes x dim
  Dataset train;
  Dataset eval;
};

// Deterministic in (spec). Samples are shuffled with the spec seed and split
// 80/20 into train and eval. Throws InvalidArgument on a malformed spec or
// fewer than 2 samples overall.
BlobData gen_blobs(const BlobSpec& spec);

struct TinyMlp {
  Matrix hidden_weights;  // input_dim x hidden
  Vector hidden_bias;
  Matrix out_weights;     // hidden x classes
  Vector out_bias;

  std::size_t input_dim() const noexcept { return hidden_weights.rows(); }
  std::size_t hidden() const noexcept { return hidden_weights.cols(); }
  std::size_t classes() const noexcept { return out_weights.cols(); }
};

struct TrainHyper {
  std::size_t hidden = 32;
  double lr = 0.1;
  std::size_t epochs = 500;
  std::uint64_t seed = 0;
};

struct TrainResult {
  TinyMlp model;
  double train_accuracy;
  double final_loss;  // mean cross-entropy at the returned parameters
};

TinyMlp init_mlp(std::size_t input_dim, std::size_t classes, const TrainHyper& hyper);

// Full-batch gradient descent on mean softmax cross-entropy. classes is taken
// from the largest label + 1 unless given. Throws Error(TrainingDiverged) as
// soon as the loss or any parameter stops being finite, or the loss exceeds
// 1000 x max(initial loss, 1).
TrainResult train_mlp(const Dataset& data, const TrainHyper& hyper,
                      std::optional<std::size_t> classes = std::nullopt);

// ReLU activations feeding the output layer, one row per sample.
Matrix hidden_activations(const TinyMlp& model, const Matrix& inputs);
std::vector<std::int64_t> predict_all(const TinyMlp& model, const Matrix& inputs);
double accuracy(const TinyMlp& model, const Dataset& data);

// Last layer of the model over `data`, logits computed and stored in f64.
LastLayerBundle export_bundle(const TinyMlp& model, const Dataset& data);

// Central differences of J(W) = scale * sum_j (W^T f + b - t)_j^2 with the
// plan's targets held fixed. scale defaults to loss_normalizer(plan.k).
Matrix finite_diff_grad(const Vector& features, const Matrix& weights, const Vector& bias,
                        const CounterfactualPlan& plan, double h,
                        std::optional<double> scale = std::nullopt);

struct GradcheckOptions {
  std::size_t instances = 100;
  std::uint64_t seed = 0;
  double h = 1e-4;
  double tolerance = 1e-4;
  std::size_t max_dim = 16;
  std::size_t max_classes = 12;
  bool inject_bug = false;  // halves the analytic gradient; the check must fail
};

struct GradcheckReport {
  std::size_t instances = 0;
  double max_rel_err = 0.0;
  std::uint64_t worst_seed = 0;  // per-instance seed of the worst entry
  std::size_t worst_i = 0;
  std::size_t worst_j = 0;
  bool passed = false;
};

// |a - n| / max(|a|, |n|), 0 when both vanish.
double relative_error(double analytic, double numeric);

GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace gradtrust::synth
