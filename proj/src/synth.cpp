#include "gradtrust/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "gradtrust/error.hpp"
#include "gradtrust/kernels.hpp"

namespace gradtrust::synth {
namespace {

using Rng = std::mt19937_64;

// Independent streams derived from one user seed.
Rng stream(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return Rng(seq);
}

constexpr double kBlowUpFactor = 1e3;

enum Stream : std::uint64_t { kMeans = 1, kNoise = 2, kSplit = 3, kInit = 4, kGradcheck = 5 };

void check_spec(const BlobSpec& spec) {
  if (spec.n_classes < 1 || spec.dim < 1 || spec.samples_per_class < 1) {
    throw Error(ErrorCode::InvalidArgument, "blob counts must be >= 1");
  }
  if (!(spec.noise_sigma > 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw Error(ErrorCode::InvalidArgument, "noise_sigma must be > 0");
  }
  if (!(spec.class_separation >= 0.0) || !std::isfinite(spec.class_separation)) {
    throw Error(ErrorCode::InvalidArgument, "class_separation must be >= 0");
  }
  if (spec.n_classes * spec.samples_per_class < 2) {
    throw Error(ErrorCode::InvalidArgument, "need at least 2 samples to split train/eval");
  }
}

Dataset take_rows(const std::vector<double>& inputs, const std::vector<std::int64_t>& labels,
                  std::size_t dim, std::span<const std::size_t> rows) {
  std::vector<double> x;
  x.reserve(rows.size() * dim);
  std::vector<std::int64_t> y;
  y.reserve(rows.size());
  for (auto r : rows) {
    x.insert(x.end(), inputs.begin() + static_cast<long>(r * dim),
             inputs.begin() + static_cast<long>((r + 1) * dim));
    y.push_back(labels[r]);
  }
  return {Matrix(rows.size(), dim, std::move(x)), std::move(y)};
}

// Mutable parameter buffers used during training.
struct Params {
  std::size_t in, hid, out;
  std::vector<double> w1, b1, w2, b2;  // w1: in x hid, w2: hid x out, row-major

  bool finite() const {
    auto ok = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    return ok(w1) && ok(b1) && ok(w2) && ok(b2);
  }
};

Params params_of(const TinyMlp& m) {
  auto copy = [](std::span<const double> s) { return std::vector<double>(s.begin(), s.end()); };
  return {m.input_dim(),           m.hidden(),           m.classes(),
          copy(m.hidden_weights.values()), copy(m.hidden_bias.values()),
          copy(m.out_weights.values()),    copy(m.out_bias.values())};
}

TinyMlp model_of(Params p) {
  return {Matrix(p.in, p.hid, std::move(p.w1)), Vector(std::move(p.b1)),
          Matrix(p.hid, p.out, std::move(p.w2)), Vector(std::move(p.b2))};
}

// h = relu(W1^T x + b1); logits = W2^T h + b2
void forward(const Params& p, const double* x, double* h, double* logits) {
  const auto& k = kernels::active();
  std::copy(p.b1.begin(), p.b1.end(), h);
  for (std::size_t i = 0; i < p.in; ++i) {
    if (x[i] != 0.0) k.axpy(x[i], p.w1.data() + i * p.hid, h, p.hid);
  }
  for (std::size_t j = 0; j < p.hid; ++j) h[j] = h[j] > 0.0 ? h[j] : 0.0;
  std::copy(p.b2.begin(), p.b2.end(), logits);
  for (std::size_t j = 0; j < p.hid; ++j) {
    if (h[j] != 0.0) k.axpy(h[j], p.w2.data() + j * p.out, logits, p.out);
  }
}

// Softmax in place; returns -log p[label].
double softmax_xent(double* logits, std::size_t n, std::int64_t label) {
  const double m = *std::max_element(logits, logits + n);
  double z = 0.0;
  for (std::size_t c = 0; c < n; ++c) z += std::exp(logits[c] - m);
  const double loss = std::log(z) - (logits[label] - m);
  for (std::size_t c = 0; c < n; ++c) logits[c] = std::exp(logits[c] - m) / z;
  return loss;
}

std::size_t argmax(const double* v, std::size_t n) {
  return static_cast<std::size_t>(std::max_element(v, v + n) - v);
}

}  // namespace

BlobData gen_blobs(const BlobSpec& spec) {
  check_spec(spec);
  const std::size_t n = spec.n_classes * spec.samples_per_class;

  Rng mean_rng = stream(spec.seed, kMeans);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> means(spec.n_classes * spec.dim);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    double* mu = means.data() + c * spec.dim;
    double norm = 0.0;
    do {
      for (std::size_t i = 0; i < spec.dim; ++i) mu[i] = unit(mean_rng);
      norm = std::sqrt(kernels::scalar_table().dot(mu, mu, spec.dim));
    } while (norm == 0.0);
    for (std::size_t i = 0; i < spec.dim; ++i) mu[i] *= spec.class_separation / norm;
  }

  Rng noise_rng = stream(spec.seed, kNoise);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  std::vector<double> inputs(n * spec.dim);
  std::vector<std::int64_t> labels(n);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      const std::size_t row = c * spec.samples_per_class + s;
      labels[row] = static_cast<std::int64_t>(c);
      for (std::size_t i = 0; i < spec.dim; ++i) {
        inputs[row * spec.dim + i] = means[c * spec.dim + i] + noise(noise_rng);
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng = stream(spec.seed, kSplit);
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle.
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(split_rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  const std::size_t n_train = n * 4 / 5;
  const std::span<const std::size_t> all(order);
  return {Matrix(spec.n_classes, spec.dim, std::move(means)),
          take_rows(inputs, labels, spec.dim, all.first(n_train)),
          take_rows(inputs, labels, spec.dim, all.subspan(n_train))};
}

TinyMlp init_mlp(std::size_t input_dim, std::size_t classes, const TrainHyper& hyper) {
  if (input_dim < 1 || classes < 2 || hyper.hidden < 1) {
    throw Error(ErrorCode::InvalidArgument, "network needs input_dim >= 1, hidden >= 1, classes >= 2");
  }
  Rng rng = stream(hyper.seed, kInit);
  std::normal_distribution<double> w1(0.0, std::sqrt(2.0 / static_cast<double>(input_dim)));
  std::normal_distribution<double> w2(0.0, std::sqrt(1.0 / static_cast<double>(hyper.hidden)));
  std::vector<double> hw(input_dim * hyper.hidden), ow(hyper.hidden * classes);
  for (auto& v : hw) v = w1(rng);
  for (auto& v : ow) v = w2(rng);
  return {Matrix(input_dim, hyper.hidden, std::move(hw)), Vector::zeros(hyper.hidden),
          Matrix(hyper.hidden, classes, std::move(ow)), Vector::zeros(classes)};
}

TrainResult train_mlp(const Dataset& data, const TrainHyper& hyper,
                      std::optional<std::size_t> classes) {
  if (data.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty training set");
  if (data.inputs.rows() != data.size()) {
    throw Error(ErrorCode::ShapeMismatch, "inputs and labels differ in length");
  }
  const std::size_t n_classes =
      classes.value_or(static_cast<std::size_t>(*std::max_element(data.labels.begin(), data.labels.end())) + 1);
  for (auto y : data.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
      throw Error(ErrorCode::InvalidArgument, "label " + std::to_string(y) + " out of range");
    }
  }

  Params p = params_of(init_mlp(data.inputs.cols(), std::max<std::size_t>(n_classes, 2), hyper));
  const auto& k = kernels::active();
  const std::size_t m = data.size();
  const double inv_m = 1.0 / static_cast<double>(m);

  std::vector<double> h(p.hid), probs(p.out), dh(p.hid);
  std::vector<double> gw1(p.w1.size()), gb1(p.hid), gw2(p.w2.size()), gb2(p.out);

  // One pass: returns mean loss and correct count; accumulates gradients when asked.
  auto pass = [&](bool accumulate, std::size_t& correct) {
    double loss = 0.0;
    correct = 0;
    if (accumulate) {
      std::fill(gw1.begin(), gw1.end(), 0.0);
      std::fill(gb1.begin(), gb1.end(), 0.0);
      std::fill(gw2.begin(), gw2.end(), 0.0);
      std::fill(gb2.begin(), gb2.end(), 0.0);
    }
    for (std::size_t s = 0; s < m; ++s) {
      const double* x = data.inputs.row(s).data();
      const auto y = data.labels[s];
      forward(p, x, h.data(), probs.data());
      if (argmax(probs.data(), p.out) == static_cast<std::size_t>(y)) ++correct;
      loss += softmax_xent(probs.data(), p.out, y);
      if (!accumulate) continue;

      // dL/dlogits = (p - onehot) / m
      probs[static_cast<std::size_t>(y)] -= 1.0;
      k.scale(inv_m, probs.data(), probs.data(), p.out);
      k.axpy(1.0, probs.data(), gb2.data(), p.out);
      for (std::size_t j = 0; j < p.hid; ++j) {
        if (h[j] != 0.0) {
          k.axpy(h[j], probs.data(), gw2.data() + j * p.out, p.out);
          dh[j] = k.dot(p.w2.data() + j * p.out, probs.data(), p.out);
        } else {
          dh[j] = 0.0;
        }
      }
      k.axpy(1.0, dh.data(), gb1.data(), p.hid);
      for (std::size_t i = 0; i < p.in; ++i) {
        if (x[i] != 0.0) k.axpy(x[i], dh.data(), gw1.data() + i * p.hid, p.hid);
      }
    }
    return loss * inv_m;
  };

  auto diverged = [](std::size_t epoch, double loss) {
    return Error(ErrorCode::TrainingDiverged,
                 "training diverged at epoch " + std::to_string(epoch) + " (loss " +
                     std::to_string(loss) + ")");
  };

  // Non-finite, or blown up far past the starting loss (dead units can keep
  // an exploded loss finite).
  double ceiling = std::numeric_limits<double>::infinity();
  auto bad = [&](double loss) { return !std::isfinite(loss) || loss > ceiling; };

  std::size_t correct = 0;
  for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    const double loss = pass(true, correct);
    if (epoch == 0) ceiling = kBlowUpFactor * std::max(loss, 1.0);
    if (bad(loss)) throw diverged(epoch, loss);
    k.axpy(-hyper.lr, gw1.data(), p.w1.data(), p.w1.size());
    k.axpy(-hyper.lr, gb1.data(), p.b1.data(), p.b1.size());
    k.axpy(-hyper.lr, gw2.data(), p.w2.data(), p.w2.size());
    k.axpy(-hyper.lr, gb2.data(), p.b2.data(), p.b2.size());
    if (!p.finite()) throw diverged(epoch, loss);
  }
  const double final_loss = pass(false, correct);
  if (bad(final_loss)) throw diverged(hyper.epochs, final_loss);
  return {model_of(std::move(p)), static_cast<double>(correct) / static_cast<double>(m), final_loss};
}

Matrix hidden_activations(const TinyMlp& model, const Matrix& inputs) {
  std::vector<double> out;
  out.reserve(inputs.rows() * model.hidden());
  for (std::size_t s = 0; s < inputs.rows(); ++s) {
    const Vector pre = affine_transposed(model.hidden_weights, inputs.row(s), model.hidden_bias);
    for (double v : pre) out.push_back(v > 0.0 ? v : 0.0);
  }
  return Matrix(inputs.rows(), model.hidden(), std::move(out));
}

std::vector<std::int64_t> predict_all(const TinyMlp& model, const Matrix& inputs) {
  const Matrix h = hidden_activations(model, inputs);
  std::vector<std::int64_t> out(inputs.rows());
  for (std::size_t s = 0; s < inputs.rows(); ++s) {
    const Vector y = affine_transposed(model.out_weights, h.row(s), model.out_bias);
    out[s] = static_cast<std::int64_t>(predict(y));
  }
  return out;
}

double accuracy(const TinyMlp& model, const Dataset& data) {
  const auto yhat = predict_all(model, data.inputs);
  std::size_t correct = 0;
  for (std::size_t s = 0; s < yhat.size(); ++s) correct += yhat[s] == data.labels[s] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

LastLayerBundle export_bundle(const TinyMlp& model, const Dataset& data) {
  LastLayerBundle bundle{hidden_activations(model, data.inputs),
                         model.out_weights,
                         model.out_bias,
                         data.labels,
                         std::nullopt,
                         {{"source", "synth-lab"},
                          {"model", "relu-mlp"},
                          {"hidden", std::to_string(model.hidden())},
                          {"input_dim", std::to_string(model.input_dim())}},
                         FloatStorage::F32};
  return ensure_logits(std::move(bundle));
}

Matrix finite_diff_grad(const Vector& features, const Matrix& weights, const Vector& bias,
                        const CounterfactualPlan& plan, double h, std::optional<double> scale) {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "finite-difference step must be > 0");
  const std::size_t d = weights.rows();
  const std::size_t n = weights.cols();
  if (features.size() != d || bias.size() != n || plan.targets.size() != n) {
    throw Error(ErrorCode::ShapeMismatch, "finite_diff_grad: inconsistent shapes");
  }
  const double c = scale.value_or(loss_normalizer(plan.k));

  // Plain loops throughout: this is the reference the analytic path is judged by.
  auto loss = [&](const std::vector<double>& w) {
    double j = 0.0;
    for (std::size_t col = 0; col < n; ++col) {
      double y = bias[col];
      for (std::size_t row = 0; row < d; ++row) y += w[row * n + col] * features[row];
      const double r = y - plan.targets[col];
      j += r * r;
    }
    return c * j;
  };

  std::vector<double> w(weights.values().begin(), weights.values().end());
  std::vector<double> grad(d * n);
  for (std::size_t e = 0; e < w.size(); ++e) {
    const double orig = w[e];
    w[e] = orig + h;
    const double plus = loss(w);
    w[e] = orig - h;
    const double minus = loss(w);
    w[e] = orig;
    grad[e] = (plus - minus) / (2.0 * h);
  }
  return Matrix(d, n, std::move(grad));
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::fabs(analytic), std::fabs(numeric));
  return scale == 0.0 ? 0.0 : std::fabs(analytic - numeric) / scale;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  if (options.max_dim < 1 || options.max_classes < 2) {
    throw Error(ErrorCode::InvalidArgument, "gradcheck needs max_dim >= 1 and max_classes >= 2");
  }
  Rng seeds = stream(options.seed, kGradcheck);
  GradcheckReport report;
  report.worst_seed = 0;
  for (std::size_t inst = 0; inst < options.instances; ++inst) {
    const std::uint64_t instance_seed = seeds();
    Rng rng(instance_seed);
    const std::size_t d = std::uniform_int_distribution<std::size_t>(1, options.max_dim)(rng);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, options.max_classes)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, n - 1)(rng);
    std::normal_distribution<double> unit(0.0, 1.0);
    auto draw = [&](std::size_t count) {
      std::vector<double> v(count);
      for (auto& x : v) x = unit(rng);
      return v;
    };
    const Vector features(draw(d));
    const Matrix weights(d, n, draw(d * n));
    const Vector bias(draw(n));

    const Vector logits = affine_transposed(weights, features.values(), bias);
    const auto plan = counterfactual_targets(logits, k);
    Vector residual = loss_gradient_wrt_logits(logits, plan);
    if (options.inject_bug) {
      std::vector<double> halved(residual.begin(), residual.end());
      for (auto& r : halved) r *= 0.5;
      residual = Vector(std::move(halved));
    }
    const Matrix analytic = grad_last_layer(features, residual);
    const Matrix numeric = finite_diff_grad(features, weights, bias, plan, options.h);

    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double err = relative_error(analytic.at(i, j), numeric.at(i, j));
        if (err > report.max_rel_err || (inst == 0 && i == 0 && j == 0)) {
          report.max_rel_err = err;
          report.worst_seed = instance_seed;
          report.worst_i = i;
          report.worst_j = j;
        }
      }
    }
    ++report.instances;
  }
  report.passed = report.instances > 0 && report.max_rel_err < options.tolerance;
  return report;
}

}  // namespace gradtrust::synth
