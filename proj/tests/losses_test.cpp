#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "oracles.hpp"
#include "pll/losses.hpp"

namespace pll {
namespace {

Matrix random_probs(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = rng.uniform(0.02, 0.98);
  return m;
}

// Central differences of a scalar function of a probability matrix.
Matrix numeric_grad(const std::function<double(const Matrix&)>& f, Matrix at, double h = 1e-6) {
  Matrix g(at.rows(), at.cols());
  for (std::size_t k = 0; k < at.size(); ++k) {
    const double orig = at.values()[k];
    at.values()[k] = orig + h;
    const double up = f(at);
    at.values()[k] = orig - h;
    const double down = f(at);
    at.values()[k] = orig;
    g.values()[k] = (up - down) / (2 * h);
  }
  return g;
}

void expect_grad_close(const Matrix& analytic, const Matrix& numeric) {
  ASSERT_TRUE(analytic.same_shape(numeric));
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double a = analytic.values()[k];
    const double n = numeric.values()[k];
    if (std::abs(a) <= 1e-8) {
      EXPECT_NEAR(n, 0.0, 1e-7);
      continue;
    }
    EXPECT_LT(std::abs(a - n) / std::max(std::abs(a), std::abs(n)), 1e-5) << "entry " << k;
  }
}

TEST(BceFull, SingleEntryAtOneHalfIsLn2) {
  Matrix p(1, 1, 0.5);
  const PartialLabelMatrix y(1, 1, LabelState::Positive);
  EXPECT_NEAR(bce_full(p, y).loss, std::numbers::ln2, 1e-15);
}

TEST(BceFull, ConfidentCorrectPredictionsNearZero) {
  Matrix p(2, 2);
  p(0, 0) = 1.0;
  p(0, 1) = 0.0;
  p(1, 0) = 0.0;
  p(1, 1) = 1.0;
  PartialLabelMatrix y(2, 2, {LabelState::Positive, LabelState::Negative, LabelState::Missing,
                              LabelState::Positive},
                       true);
  const auto l = bce_full(p, y);
  EXPECT_LE(l.loss, 1.7e-6);
  EXPECT_GE(l.loss, 0.0);
  for (double g : l.grad.values()) EXPECT_TRUE(std::isfinite(g));
}

TEST(BceFull, TwoByTwoHandValue) {
  Matrix p(2, 2);
  p(0, 0) = 0.8;
  p(0, 1) = 0.3;
  p(1, 0) = 0.6;
  p(1, 1) = 0.1;
  PartialLabelMatrix y(2, 2, {LabelState::Positive, LabelState::Missing, LabelState::Negative,
                              LabelState::Positive},
                       true);
  // Missing counts as negative.
  const double expected = -(std::log(0.8) + std::log(0.7) + std::log(0.4) + std::log(0.1)) / 4.0;
  const auto l = bce_full(p, y);
  EXPECT_NEAR(l.loss, expected, 1e-15);
  EXPECT_NEAR(l.grad(0, 0), -1.0 / 0.8 / 4.0, 1e-15);
  EXPECT_NEAR(l.grad(0, 1), 1.0 / 0.7 / 4.0, 1e-15);

  // Masking the Missing entry averages over the remaining three.
  const auto m = bce_masked(p, y, default_mask(y));
  EXPECT_NEAR(m.loss, -(std::log(0.8) + std::log(0.4) + std::log(0.1)) / 3.0, 1e-15);
  EXPECT_EQ(m.grad(0, 1), 0.0);
}

TEST(BceMasked, AllOnesMaskMatchesFullWithoutMissing) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + rng.below(8), c = 1 + rng.below(5);
    const auto y = oracle::random_labels(rng, b, c, 0.0);
    const auto p = random_probs(rng, b, c);
    const auto full = bce_full(p, y);
    const auto masked = bce_masked(p, y, LossMask(b, c, 1));
    EXPECT_EQ(full.loss, masked.loss);
    EXPECT_EQ(full.grad, masked.grad);
  }
}

TEST(BceMasked, ZeroMaskGivesZero) {
  Rng rng(4);
  const auto y = oracle::random_labels(rng, 4, 3, 0.2);
  const auto l = bce_masked(random_probs(rng, 4, 3), y, LossMask(4, 3, 0));
  EXPECT_EQ(l.loss, 0.0);
  for (double g : l.grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(BceMasked, InvariantToMaskedOutProbabilities) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t b = 1 + rng.below(6), c = 1 + rng.below(4);
    const auto y = oracle::random_labels(rng, b, c, 0.4);
    LossMask mask(b, c);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t k = 0; k < c; ++k) mask.set(i, k, rng.bernoulli(0.6));
    }
    auto p = random_probs(rng, b, c);
    const auto before = bce_masked(p, y, mask);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        if (mask(i, k) == 0) p(i, k) = rng.uniform();
      }
    }
    const auto after = bce_masked(p, y, mask);
    EXPECT_EQ(before.loss, after.loss);
    EXPECT_EQ(before.grad, after.grad);
  }
}

TEST(BceMasked, ShapeMismatchThrows) {
  const PartialLabelMatrix y(2, 2, LabelState::Negative);
  EXPECT_THROW(bce_masked(Matrix(2, 2, 0.5), y, LossMask(2, 3)), std::invalid_argument);
  EXPECT_THROW(bce_full(Matrix(3, 2, 0.5), y), std::invalid_argument);
}

TEST(DefaultMask, FollowsObservation) {
  EXPECT_EQ(default_mask(PartialLabelMatrix(3, 2, LabelState::Negative)).count_ones(), 6u);
  EXPECT_EQ(default_mask(PartialLabelMatrix(3, 2, LabelState::Missing)).count_ones(), 0u);
  PartialLabelMatrix m(20000, 20, LabelState::Missing, true);
  for (std::size_t k = 0; k < 41268; ++k) m.set(k / 20, k % 20, LabelState::Positive);
  const auto mask = default_mask(m);
  EXPECT_NEAR(static_cast<double>(mask.count_ones()) / 400000.0, 0.1032, 5e-5);
}

TEST(ConsistencyMse, Examples) {
  Rng rng(6);
  const auto s = random_probs(rng, 3, 4);
  const auto same = consistency_mse(s, s);
  EXPECT_EQ(same.loss, 0.0);

  EXPECT_EQ(consistency_mse(Matrix(1, 1, 1.0), Matrix(1, 1, 0.0)).loss, 1.0);

  Matrix a(2, 2), b(2, 2);
  a(0, 0) = 0.9;
  a(0, 1) = 0.2;
  a(1, 0) = 0.5;
  a(1, 1) = 0.4;
  b(0, 0) = 0.6;
  b(0, 1) = 0.2;
  b(1, 0) = 0.1;
  b(1, 1) = 0.8;
  const auto l = consistency_mse(a, b);
  EXPECT_NEAR(l.loss, (0.09 + 0.0 + 0.16 + 0.16) / 4.0, 1e-15);
  EXPECT_NEAR(l.grad(0, 0), 2 * 0.3 / 4.0, 1e-15);
  EXPECT_NEAR(consistency_mse(b, a).loss, l.loss, 1e-15);
}

TEST(CombinedLoss, Examples) {
  EXPECT_EQ(combined_loss(0.5, 0.1, 0.0), 0.5);
  EXPECT_NEAR(combined_loss(0.5, 0.1, 3.0), 0.8, 1e-15);
  EXPECT_EQ(combined_loss(0.0, 0.0, 1.0), 0.0);
  EXPECT_THROW(combined_loss(0.1, 0.1, -1.0), std::invalid_argument);
  const auto g = combined_gradient(Matrix(1, 2, 1.0), Matrix(1, 2, 0.5), 3.0);
  EXPECT_EQ(g(0, 1), 2.5);
}

TEST(LossGradients, MatchFiniteDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 1 + rng.below(5), c = 1 + rng.below(4);
    const auto y = oracle::random_labels(rng, b, c, 0.3);
    const auto p = random_probs(rng, b, c);
    const auto t = random_probs(rng, b, c);
    LossMask mask(b, c);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t k = 0; k < c; ++k) mask.set(i, k, rng.bernoulli(0.7));
    }
    expect_grad_close(bce_full(p, y).grad, numeric_grad([&](const Matrix& q) { return bce_full(q, y).loss; }, p));
    expect_grad_close(bce_masked(p, y, mask).grad,
                      numeric_grad([&](const Matrix& q) { return bce_masked(q, y, mask).loss; }, p));
    expect_grad_close(consistency_mse(p, t).grad,
                      numeric_grad([&](const Matrix& q) { return consistency_mse(q, t).loss; }, p));
    const double beta = rng.uniform(0.0, 4.0);
    const auto combined = combined_gradient(bce_masked(p, y, mask).grad, consistency_mse(p, t).grad, beta);
    expect_grad_close(combined, numeric_grad(
                                    [&](const Matrix& q) {
                                      return combined_loss(bce_masked(q, y, mask).loss,
                                                           consistency_mse(q, t).loss, beta);
                                    },
                                    p));
  }
}

TEST(Losses, NonNegative) {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto y = oracle::random_labels(rng, 3, 3, 0.3);
    const auto p = random_probs(rng, 3, 3);
    EXPECT_GE(bce_full(p, y).loss, 0.0);
    EXPECT_GE(bce_masked(p, y, default_mask(y)).loss, 0.0);
    EXPECT_GE(consistency_mse(p, random_probs(rng, 3, 3)).loss, 0.0);
  }
}

}  // namespace
}  // namespace pll
