#include <gtest/gtest.h>

#include "setid/errors.hpp"
#include "setid/learners.hpp"
#include "support.hpp"

using namespace setid;
using setid::testing::Gen;

namespace {

LearnerSpec fixed(double lambda, double tol = 1e-12) {
  LearnerSpec s;
  s.penalty.kind = Penalty::Kind::FIXED;
  s.penalty.lambda = lambda;
  s.tol = tol;
  s.max_iter = 100000;
  return s;
}

}  // namespace

TEST(Lasso, ZeroPenaltyReproducesOls) {
  Gen gen(1);
  const MatrixXd X = gen.normal_matrix(10, 2);
  VectorXd y(10);
  for (Index i = 0; i < 10; ++i) y(i) = 1.0 + 2.0 * X(i, 0) - X(i, 1) + 0.3 * gen.normal();
  const auto fit = fit_lasso(X, y, fixed(0.0));

  MatrixXd A(10, 3);
  A << VectorXd::Ones(10), X;
  const VectorXd ols = A.colPivHouseholderQr().solve(y);
  EXPECT_NEAR(fit.intercept, ols(0), 1e-8);
  EXPECT_NEAR(fit.coefficients(0), ols(1), 1e-8);
  EXPECT_NEAR(fit.coefficients(1), ols(2), 1e-8);
}

TEST(Lasso, PenaltyAboveThresholdZeroesEverySlope) {
  Gen gen(2);
  const MatrixXd X = gen.normal_matrix(40, 6);
  const VectorXd y = X.col(0) + gen.normal_vector(40);
  // max_j |(1/n) X_j'(y - ybar)| computed directly.
  const VectorXd yc = y.array() - y.mean();
  double threshold = 0.0;
  for (Index j = 0; j < 6; ++j) {
    const VectorXd xc = X.col(j).array() - X.col(j).mean();
    threshold = std::max(threshold, std::abs(xc.dot(yc)) / 40.0);
  }
  EXPECT_NEAR(lambda_max(X, y), threshold, 1e-12);
  const auto fit = fit_lasso(X, y, fixed(threshold));
  for (Index j = 0; j < 6; ++j) EXPECT_EQ(fit.coefficients(j), 0.0);
  EXPECT_DOUBLE_EQ(fit.intercept, y.mean());
}

TEST(Lasso, ConstantOutcome) {
  Gen gen(3);
  const MatrixXd X = gen.normal_matrix(20, 3);
  const VectorXd y = VectorXd::Constant(20, 2.5);
  const auto fit = fit_lasso(X, y, LearnerSpec{});
  EXPECT_DOUBLE_EQ(fit.intercept, 2.5);
  for (Index j = 0; j < 3; ++j) EXPECT_EQ(fit.coefficients(j), 0.0);
}

TEST(Lasso, RejectsNonFiniteInput) {
  Gen gen(4);
  MatrixXd X = gen.normal_matrix(5, 2);
  X(2, 1) = std::nan("");
  EXPECT_THROW(fit_lasso(X, VectorXd::Ones(5), LearnerSpec{}), std::invalid_argument);
}

TEST(Lasso, ReportsIterationsWhenNotConverged) {
  Gen gen(5);
  const MatrixXd X = gen.normal_matrix(50, 10);
  const VectorXd y = X * VectorXd::Ones(10) + gen.normal_vector(50);
  LearnerSpec spec = fixed(1e-3, 1e-14);
  spec.max_iter = 1;
  try {
    fit_lasso(X, y, spec);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_EQ(e.iterations(), 1);
  }
}

TEST(Lasso, KktResidualWithinTenTolerances) {
  Gen gen(6);
  for (int trial = 0; trial < 40; ++trial) {
    const Index n = gen.integer(20, 80), p = gen.integer(1, 30);
    const MatrixXd X = gen.normal_matrix(n, p);
    const VectorXd y = X.col(0) * gen.uniform(-2, 2) + gen.normal_vector(n);
    LearnerSpec spec;
    spec.tol = 1e-7;
    if (trial % 2) spec = fixed(gen.uniform(0.0, 0.5) * lambda_max(X, y), 1e-7);
    const auto fit = fit_lasso(X, y, spec);
    EXPECT_LE(lasso_kkt_residual(X, y, fit), 10 * spec.tol) << "trial " << trial;
  }
}

TEST(Lasso, RefitIsBitIdentical) {
  Gen gen(7);
  const MatrixXd X = gen.normal_matrix(60, 8);
  const VectorXd y = X.col(1) + gen.normal_vector(60);
  const auto a = fit_lasso(X, y, LearnerSpec{}), b = fit_lasso(X, y, LearnerSpec{});
  EXPECT_EQ(a.coefficients, b.coefficients);
  EXPECT_EQ(a.intercept, b.intercept);
  const VectorXd x = gen.normal_vector(8);
  EXPECT_EQ(a.predict(x), b.predict(x));
}

TEST(Lasso, PluginPenaltyHasTheStatedRate) {
  Gen gen(8);
  const MatrixXd X = gen.normal_matrix(200, 5);
  const VectorXd y = gen.normal_vector(200);
  const double rate = std::sqrt(2.0 * std::log(2.0 * 5 * 200) / 200.0);
  const double lambda = plugin_lambda(X, y);
  // sigma_hat of pure noise with unit variance.
  EXPECT_GT(lambda / rate, 0.8);
  EXPECT_LT(lambda / rate, 1.2);
}

TEST(LogisticLasso, HugePenaltyPredictsTheSampleMean) {
  Gen gen(9);
  const MatrixXd X = gen.normal_matrix(30, 3);
  VectorXd y(30);
  for (Index i = 0; i < 30; ++i) y(i) = X(i, 0) + gen.normal() > 0 ? 1.0 : 0.0;
  const auto fit = fit_logistic_lasso(X, y, fixed(1e6, 1e-10));
  for (Index j = 0; j < 3; ++j) EXPECT_EQ(fit.coefficients(j), 0.0);
  for (int t = 0; t < 5; ++t) EXPECT_NEAR(fit.predict(gen.normal_vector(3)), y.mean(), 1e-12);
}

TEST(LogisticLasso, SymmetricDesignHasZeroIntercept) {
  Gen gen(10);
  const Index half = 25;
  MatrixXd X(2 * half, 2);
  VectorXd y(2 * half);
  for (Index i = 0; i < half; ++i) {
    const VectorXd x = gen.normal_vector(2);
    const double label = x(0) + 0.5 * gen.normal() > 0 ? 1.0 : 0.0;
    X.row(i) = x.transpose();
    X.row(half + i) = -x.transpose();
    y(i) = label;
    y(half + i) = 1.0 - label;
  }
  const auto fit = fit_logistic_lasso(X, y, fixed(0.01, 1e-10));
  EXPECT_NEAR(fit.intercept, 0.0, 1e-6);
}

TEST(LogisticLasso, UnpenalizedFitMatchesNewtonOracle) {
  // 50 points on [-2, 2], labelled by sign with the four labels nearest to
  // zero flipped so that the maximum-likelihood estimate exists.
  const Index n = 50;
  MatrixXd X(n, 1);
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    X(i, 0) = -2.0 + 4.0 * static_cast<double>(i) / (n - 1);
    y(i) = X(i, 0) > 0 ? 1.0 : 0.0;
  }
  for (Index i : {23, 24, 25, 26}) y(i) = 1.0 - y(i);

  // Slow Newton on (a, b) with a fixed number of steps.
  double a = 0.0, b = 0.0;
  for (int it = 0; it < 200; ++it) {
    double ga = 0, gb = 0, haa = 0, hab = 0, hbb = 0;
    for (Index i = 0; i < n; ++i) {
      const double mu = 1.0 / (1.0 + std::exp(-(a + b * X(i, 0))));
      const double w = mu * (1 - mu);
      ga += y(i) - mu;
      gb += (y(i) - mu) * X(i, 0);
      haa += w;
      hab += w * X(i, 0);
      hbb += w * X(i, 0) * X(i, 0);
    }
    const double det = haa * hbb - hab * hab;
    a += (hbb * ga - hab * gb) / det;
    b += (haa * gb - hab * ga) / det;
  }
  const auto fit = fit_logistic_lasso(X, y, fixed(0.0, 1e-12));
  EXPECT_NEAR(fit.intercept, a, 1e-5);
  EXPECT_NEAR(fit.coefficients(0), b, 1e-5);
  double prev = -1.0;
  for (Index i = 0; i < n; ++i) {
    const double p = fit.predict(VectorXd(X.row(i).transpose()));
    EXPECT_GE(p, 1e-6);
    EXPECT_LE(p, 1 - 1e-6);
    EXPECT_GE(p, prev);
    prev = p;
  }
}

TEST(LogisticLasso, SingleClassIsRejected) {
  Gen gen(11);
  EXPECT_THROW(fit_logistic_lasso(gen.normal_matrix(10, 2), VectorXd::Ones(10), LearnerSpec{}),
               std::invalid_argument);
}

TEST(Quantile, EmpiricalQuantileExamples) {
  EXPECT_EQ(empirical_quantile({1, 2, 3}, 0.5), 2.0);
  EXPECT_EQ(empirical_quantile({0, 10}, 0.25), 2.5);
  EXPECT_EQ(empirical_quantile({-1, 4, 7, 9}, 0.0), -1.0);
  EXPECT_EQ(empirical_quantile({-1, 4, 7, 9}, 1.0), 9.0);
}

TEST(Quantile, CellsAndMissingCell) {
  MatrixXd X(6, 2);
  X << 0, 5, 0, 6, 0, 7, 1, 5, 1, 6, 1, 7;
  VectorXd y(6);
  y << 3, 1, 2, 10, 0, 20;
  LearnerSpec spec;
  spec.kind = LearnerKind::EMPIRICAL_QUANTILE;
  spec.quantile_cells = {0};
  const auto fit = fit_conditional_quantile(X, y, spec);
  VectorXd x(2);
  x << 0, 99;
  EXPECT_EQ(fit.predict_quantile(0.5, x), 2.0);
  x << 1, 99;
  EXPECT_EQ(fit.predict_quantile(0.25, x), 5.0);
  x << 2, 5;
  try {
    fit.predict_quantile(0.5, x);
    FAIL() << "expected MissingCellError";
  } catch (const MissingCellError& e) {
    EXPECT_EQ(e.key(), "x_1=2");
  }
}

TEST(Quantile, NondecreasingInLevel) {
  Gen gen(12);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = gen.integer(2, 40);
    MatrixXd X(n, 1);
    VectorXd y(n);
    for (Index i = 0; i < n; ++i) {
      X(i, 0) = gen.integer(0, 1);
      y(i) = gen.normal();
    }
    X(0, 0) = 0;
    LearnerSpec spec;
    spec.kind = LearnerKind::EMPIRICAL_QUANTILE;
    spec.quantile_cells = {0};
    spec.jitter = trial % 3 == 0;
    const auto fit = fit_conditional_quantile(X, y, spec);
    const VectorXd x = VectorXd::Zero(1);
    double prev = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 100; ++k) {
      const double v = fit.predict_quantile(k / 100.0, x);
      ASSERT_GE(v, prev);
      prev = v;
    }
  }
}

TEST(Quantile, JitterIsReproducibleAndSmall) {
  MatrixXd X = MatrixXd::Zero(4, 1);
  VectorXd y(4);
  y << 1, 1, 1, 1;
  LearnerSpec spec;
  spec.kind = LearnerKind::EMPIRICAL_QUANTILE;
  spec.quantile_cells = {0};
  spec.jitter = true;
  spec.jitter_seed = 17;
  const auto a = fit_conditional_quantile(X, y, spec), b = fit_conditional_quantile(X, y, spec);
  EXPECT_EQ(a.cell_quantile_tables, b.cell_quantile_tables);
  const auto& values = a.cell_quantile_tables.at("x_1=0");
  EXPECT_NE(values.front(), values.back());
  for (double v : values) EXPECT_LT(std::abs(v - 1.0), 0.1);
}

TEST(LearnerSpec, ValidationRejectsBadValues) {
  LearnerSpec s;
  s.tol = 0.0;
  EXPECT_THROW(validate(s), DataError);
  s = LearnerSpec{};
  s.penalty.kind = Penalty::Kind::FIXED;
  s.penalty.lambda = -1.0;
  EXPECT_THROW(validate(s), DataError);
  EXPECT_THROW(learner_kind_from_string("FOREST"), DataError);
  EXPECT_EQ(learner_kind_from_string("LASSO"), LearnerKind::LASSO);
}

TEST(Oracle, ExternalDataIsUnsupported) { EXPECT_THROW(oracle_learner(nullptr), UnsupportedError); }
