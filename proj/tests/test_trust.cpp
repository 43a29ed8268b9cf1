#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "gradtrust/error.hpp"
#include "gradtrust/synth.hpp"
#include "gradtrust/trust.hpp"
#include "oracle.hpp"
#include "test_support.hpp"

using namespace gradtrust;

namespace {

ErrorCode error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::InvalidArgument;
}

std::vector<std::size_t> as_vec(std::initializer_list<std::size_t> v) { return v; }

// Random logits with distinct values; k drawn from 1..N-1.
struct Instance {
  Vector features;
  Vector logits;
  std::size_t k;
};

Instance random_instance(std::mt19937_64& rng, std::size_t max_d = 16, std::size_t max_n = 12) {
  const std::size_t d = testing::uniform_size(rng, 2, max_d);
  const std::size_t n = testing::uniform_size(rng, 2, max_n);
  return {testing::random_vector(rng, d), testing::random_vector(rng, n, 3.0),
          testing::uniform_size(rng, 1, n - 1)};
}

}  // namespace

TEST_CASE("predict breaks ties toward the lowest index") {
  CHECK(predict(Vector{3, 1, 2}) == 0);
  CHECK(predict(Vector{0, 0, 0}) == 0);
  CHECK(predict(Vector{1, 5, 5}) == 1);
  CHECK(error_of([] { predict(Vector{1}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("counterfactual targets") {
  SUBCASE("ranks 2..k+1") {
    const auto plan = counterfactual_targets(Vector{3, 1, 2, 0.5}, 2);
    CHECK(plan.predicted == 0);
    CHECK(plan.counterfactuals == as_vec({2, 1}));
    CHECK(plan.targets == Vector{0, 1, 1, 0});
  }
  SUBCASE("ties") {
    const auto plan = counterfactual_targets(Vector{0, 0, 0}, 2);
    CHECK(plan.predicted == 0);
    CHECK(plan.counterfactuals == as_vec({1, 2}));
    CHECK(plan.targets == Vector{0, 1, 1});
  }
  SUBCASE("k out of range") {
    CHECK(error_of([] { counterfactual_targets(Vector{5, 1}, 2); }) == ErrorCode::InvalidK);
    CHECK(error_of([] { counterfactual_targets(Vector{5, 1}, 0); }) == ErrorCode::InvalidK);
  }
}

TEST_CASE("counterfactual targets always hold exactly k ones and exclude the prediction") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = testing::uniform_size(rng, 2, 15);
    // Coarse values make ties common.
    std::vector<double> y(n);
    for (auto& v : y) v = static_cast<double>(testing::uniform_size(rng, 0, 3));
    const std::size_t k = testing::uniform_size(rng, 1, n - 1);
    const auto plan = counterfactual_targets(Vector(y), k);
    double ones = 0.0;
    for (double t : plan.targets) ones += t;
    REQUIRE(ones == static_cast<double>(k));
    REQUIRE(plan.targets[plan.predicted] == 0.0);
    REQUIRE(plan.counterfactuals.size() == k);
    REQUIRE(plan.predicted == predict(Vector(y)));
    // Every counterfactual outranks every non-member.
    for (std::size_t j = 0; j < n; ++j) {
      if (plan.targets[j] == 1.0 || j == plan.predicted) continue;
      for (auto c : plan.counterfactuals) REQUIRE((y[c] > y[j] || (y[c] == y[j] && c < j)));
    }
  }
}

TEST_CASE("loss gradient with respect to logits") {
  const Vector y{3, 1, 2, 0.5};
  const auto plan = counterfactual_targets(y, 2);
  CHECK(loss_gradient_wrt_logits(y, plan) == Vector{6, 0, 2, 1});

  SUBCASE("central differences of J agree") {
    const double h = 1e-5;
    const Vector g = loss_gradient_wrt_logits(y, plan);
    for (std::size_t j = 0; j < y.size(); ++j) {
      std::vector<double> up(y.begin(), y.end()), down(y.begin(), y.end());
      up[j] += h;
      down[j] -= h;
      const double fd =
          (counterfactual_loss(Vector(up), plan) - counterfactual_loss(Vector(down), plan)) / (2 * h);
      CHECK(fd == doctest::Approx(g[j]).epsilon(1e-8));
    }
  }
  SUBCASE("zero at the targets") {
    CHECK(loss_gradient_wrt_logits(plan.targets, plan) == Vector::zeros(4));
  }
  SUBCASE("linear in the loss scale") {
    const Vector scaled = loss_gradient_wrt_logits(y, plan, 2.5);
    const Vector base = loss_gradient_wrt_logits(y, plan);
    for (std::size_t j = 0; j < 4; ++j) CHECK(scaled[j] == doctest::Approx(2.5 * base[j]));
  }
  SUBCASE("k = 1 uses a unit normalizer") {
    CHECK(loss_normalizer(1) == 1.0);
    CHECK(loss_normalizer(2) == 1.0);
    CHECK(loss_normalizer(5) == 0.25);
  }
}

TEST_CASE("last-layer gradient") {
  const Matrix g = grad_last_layer(Vector{1, 2}, Vector{6, 0, 2, 1});
  CHECK(g == Matrix{{6, 0, 2, 1}, {12, 0, 4, 2}});
  CHECK(grad_last_layer(Vector{1, 2}, Vector::zeros(3)) == Matrix::zeros(2, 3));
  CHECK(grad_last_layer(Vector{1}, Vector{-3.5}) == Matrix{{-3.5}});

  SUBCASE("matches the finite-difference oracle on the worked example") {
    // W chosen so that W^T f + b reproduces the worked logits.
    const Vector f{1, 2};
    const Matrix w{{1, 1, 0, 0.5}, {1, 0, 1, 0}};
    const Vector b{0, 0, 0, 0};
    const Vector y = affine_transposed(w, f.values(), b);
    REQUIRE(y == Vector{3, 1, 2, 0.5});
    const auto plan = counterfactual_targets(y, 2);
    const Matrix fd = synth::finite_diff_grad(f, w, b, plan, 1e-4);
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK(synth::relative_error(g.at(i, j), fd.at(i, j)) < 1e-4);
      }
    }
  }
}

TEST_CASE("variance vector") {
  const Matrix g = grad_last_layer(Vector{1, 2}, Vector{6, 0, 2, 1});
  CHECK(variance_vector(g) == Vector{2916, 0, 36, 2.25});
  CHECK(variance_vector(g, VarianceMode::RawEntries) == Vector{9, 0, 1, 0.25});
  CHECK(variance_vector(Matrix{{3, -4, 5}}) == Vector::zeros(3));
  CHECK(variance_vector(Matrix::zeros(4, 3)) == Vector::zeros(3));
}

TEST_CASE("gradtrust score: worked example") {
  const auto report = gradtrust_report(Vector{1, 2}, Vector{3, 1, 2, 0.5}, {.k = 2});
  CHECK(report.residual_grad == Vector{6, 0, 2, 1});
  CHECK(report.variance == Vector{2916, 0, 36, 2.25});
  CHECK(report.score == 162.0);

  SUBCASE("alternative switches") {
    TrustOptions o{.k = 2};
    o.denominator = DenominatorMode::AllRemaining;
    CHECK(gradtrust_score(Vector{1, 2}, Vector{3, 1, 2, 0.5}, o) ==
          doctest::Approx(2916.0 / ((0 + 36 + 2.25) / 3)));
    o = {.k = 2, .variance = VarianceMode::RawEntries};
    CHECK(gradtrust_score(Vector{1, 2}, Vector{3, 1, 2, 0.5}, o) == 18.0);
  }
}

TEST_CASE("gradtrust score: degenerate and unbounded cases") {
  CHECK(error_of([] { gradtrust_score(Vector{1, 1}, Vector{3, 1, 2, 0.5}, {.k = 2}); }) ==
        ErrorCode::DegenerateScore);
  CHECK(error_of([] { gradtrust_score(Vector{2}, Vector{3, 1, 2}, {.k = 1}); }) ==
        ErrorCode::DegenerateScore);
  CHECK(std::isinf(gradtrust_score(Vector{1, 2}, Vector{5, 1, 1}, {.k = 2})));
  CHECK(error_of([] { gradtrust_score(Vector{1, 2}, Vector{5, 1}, {.k = 2}); }) ==
        ErrorCode::InvalidK);
}

TEST_CASE("k = 1 with the peak on the counterfactual compares against the prediction") {
  // residuals 2*(0.3, 0.2-1, 0.1) = (0.6, -1.6, 0.2)
  const double r = gradtrust_score(Vector{1, 2}, Vector{0.3, 0.2, 0.1}, {.k = 1});
  CHECK(r == doctest::Approx(std::pow(1.6 / 0.6, 4)).epsilon(1e-12));
}

TEST_CASE("rank-one factorization of the variance") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto inst = random_instance(rng);
    const auto report = gradtrust_report(inst.features, inst.logits, {.k = inst.k});
    std::vector<double> f2(inst.features.begin(), inst.features.end());
    for (auto& x : f2) x *= x;
    const double var_f2 = population_variance(std::span<const double>(f2));
    for (std::size_t j = 0; j < inst.logits.size(); ++j) {
      const double expected = std::pow(report.residual_grad[j], 4) * var_f2;
      REQUIRE(testing::rel_diff(report.variance[j], expected) <= 1e-9);
      for (std::size_t i = 0; i < inst.features.size(); ++i) {
        REQUIRE(report.grad.at(i, j) == report.residual_grad[j] * inst.features[i]);
      }
    }
  }
}

TEST_CASE("score is invariant to the loss normalizer") {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> alpha(1e-3, 1e3);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto inst = random_instance(rng);
    const double base = gradtrust_score(inst.features, inst.logits, {.k = inst.k});
    TrustOptions scaled{.k = inst.k};
    scaled.loss_scale = alpha(rng);
    const double moved = gradtrust_score(inst.features, inst.logits, scaled);
    if (std::isinf(base)) {
      REQUIRE(std::isinf(moved));
    } else {
      REQUIRE(testing::rel_diff(base, moved) <= 1e-9);
    }
  }
}

TEST_CASE("score is invariant to the feature vector") {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto inst = random_instance(rng);
    const auto other = testing::random_vector(rng, testing::uniform_size(rng, 2, 16), 5.0);
    const double a = gradtrust_score(inst.features, inst.logits, {.k = inst.k});
    const double b = gradtrust_score(other, inst.logits, {.k = inst.k});
    if (std::isinf(a)) {
      REQUIRE(std::isinf(b));
    } else {
      REQUIRE(testing::rel_diff(a, b) <= 1e-9);
    }
  }
}

TEST_CASE("finite scores are positive and match the brute-force chain") {
  std::mt19937_64 rng(45);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto inst = random_instance(rng);
    const auto got = gradtrust_report(inst.features, inst.logits, {.k = inst.k});
    const auto want = oracle::gradtrust_chain(
        {inst.features.begin(), inst.features.end()}, {inst.logits.begin(), inst.logits.end()},
        inst.k);
    REQUIRE(want.score.has_value());
    if (std::isinf(*want.score)) {
      REQUIRE(std::isinf(got.score));
    } else {
      REQUIRE(got.score > 0.0);
      REQUIRE(testing::rel_diff(got.score, *want.score) <= 1e-9);
    }
    for (std::size_t j = 0; j < inst.logits.size(); ++j) {
      REQUIRE(testing::rel_diff(got.residual_grad[j], want.residual[j]) <= 1e-12);
      REQUIRE(testing::rel_diff(got.variance[j], want.variance[j]) <= 1e-9);
    }
  }
}

TEST_CASE("batch scoring") {
  const LastLayerBundle worked{Matrix{{1, 2}}, Matrix{{1, 1, 0, 0.5}, {1, 0, 1, 0}}, Vector::zeros(4),
                               {0}, std::nullopt, {}};
  const auto one = batch_gradtrust(worked, {.k = 2});
  REQUIRE(one.size() == 1);
  CHECK_FALSE(one[0].degenerate);
  CHECK(one[0].value == 162.0);

  CHECK(error_of([&] { batch_gradtrust(worked, {.k = 4}); }) == ErrorCode::InvalidK);

  SUBCASE("degenerate samples are flagged, not thrown") {
    const LastLayerBundle b{Matrix{{1, 2}, {1, 1}}, Matrix{{1, 1, 0, 0.5}, {1, 0, 1, 0}},
                            Vector::zeros(4), {0, 0}, std::nullopt, {}};
    const auto s = batch_gradtrust(b, {.k = 2});
    CHECK_FALSE(s[0].degenerate);
    CHECK(s[1].degenerate);
  }

  SUBCASE("per-sample independence under duplication and permutation") {
    std::mt19937_64 rng(46);
    const std::size_t m = 12, d = 6, n = 7;
    const Matrix features(m, d, testing::normal_draws(rng, m * d));
    const Matrix weights(d, n, testing::normal_draws(rng, d * n));
    const Vector bias = testing::random_vector(rng, n);
    std::vector<std::int64_t> labels(m, 0);
    const LastLayerBundle b{features, weights, bias, labels, std::nullopt, {}};
    const auto base = batch_gradtrust(b, {.k = 3});

    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    perm.push_back(perm.front());  // one duplicate
    std::vector<Vector> rows;
    for (auto p : perm) rows.push_back(features.row_vector(p));
    const LastLayerBundle shuffled{Matrix::from_rows(rows), weights, bias,
                                   std::vector<std::int64_t>(perm.size(), 0), std::nullopt, {}};
    const auto moved = batch_gradtrust(shuffled, {.k = 3});
    for (std::size_t i = 0; i < perm.size(); ++i) CHECK(moved[i] == base[perm[i]]);
  }
}
