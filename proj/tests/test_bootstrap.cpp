#include <gtest/gtest.h>

#include <tbb/global_control.h>

#include "setid/bootstrap.hpp"
#include "setid/crossfit.hpp"
#include "setid/dgp.hpp"
#include "setid/errors.hpp"
#include "setid/learners.hpp"
#include "support.hpp"

using namespace setid;
using setid::testing::Gen;

namespace {

struct Fitted {
  SimulatedData sim;
  NuisanceProfile profile;
};

Fitted fitted(Index n, Index d, std::uint64_t seed) {
  DgpSpec spec;
  spec.n = n;
  spec.p = 4;
  spec.beta0 = VectorXd::Ones(d);
  spec.seed = seed;
  Fitted f{generate_plp(spec), {}};
  CrossfitOptions opt;
  opt.seed = seed;
  f.profile = crossfit(f.sim.data, Model::PLP, LearnerSet::defaults(Model::PLP), opt);
  return f;
}

SecondStageConfig support_config(std::vector<VectorXd> grid) {
  SecondStageConfig cfg;
  cfg.kind = SecondStageKind::SUPPORT_UNKNOWN_SIGMA;
  cfg.grid = std::move(grid);
  return cfg;
}

BootstrapRun run_from(const MatrixXd& draws, Index n) {
  BootstrapRun run;
  run.draws = draws;
  run.B = static_cast<int>(draws.rows());
  run.n = n;
  return run;
}

}  // namespace

TEST(Bootstrap, IdentityWeightsReproduceTheEstimate) {
  const auto f = fitted(300, 1, 1);
  const auto est = support_unknown_sigma(f.sim.data, f.profile, axis_grid(1));
  BootstrapOptions opt;
  opt.B = 5;
  opt.identity_weights = true;
  const auto run = bootstrap_draws(f.sim.data, f.profile, support_config(axis_grid(1)), opt);
  for (Index b = 0; b < 5; ++b) EXPECT_EQ(run.draws.row(b).transpose(), est.values);
  EXPECT_EQ(run.point_estimate, est.values);
}

TEST(Bootstrap, UnitWeightsMatchTheUnweightedEvaluation) {
  const auto f = fitted(200, 2, 2);
  const SecondStage stage(f.sim.data, f.profile, support_config(direction_grid(2, 6)));
  const VectorXd ones = VectorXd::Ones(200);
  EXPECT_EQ(stage.evaluate(&ones).values, stage.evaluate().values);
}

TEST(BootstrapWeights, HaveMeanOneAndArePositive) {
  Gen gen(3);
  for (int t = 0; t < 100; ++t) {
    const Index n = gen.integer(2, 500);
    const VectorXd w = bootstrap_weights(n, gen.seed(), gen.integer(0, 1000));
    ASSERT_NEAR(w.sum(), static_cast<double>(n), 1e-9 * n);
    ASSERT_GT(w.minCoeff(), 0.0);
  }
  EXPECT_EQ(bootstrap_weights(10, 4, 2), bootstrap_weights(10, 4, 2));
  EXPECT_NE(bootstrap_weights(10, 4, 2), bootstrap_weights(10, 4, 3));
  EXPECT_NE(bootstrap_weights(10, 4, 2), bootstrap_weights(10, 4, 2, 1));
}

TEST(Bootstrap, DrawsDoNotDependOnThreadCount) {
  const auto f = fitted(200, 1, 5);
  BootstrapOptions opt;
  opt.B = 40;
  opt.seed = 11;
  const auto cfg = support_config(axis_grid(1));
  const auto a = bootstrap_draws(f.sim.data, f.profile, cfg, opt);
  BootstrapRun b;
  {
    tbb::global_control one(tbb::global_control::max_allowed_parallelism, 1);
    b = bootstrap_draws(f.sim.data, f.profile, cfg, opt);
  }
  EXPECT_EQ(a.draws, b.draws);
  EXPECT_EQ(format_draws_csv(a), format_draws_csv(b));
}

TEST(Bootstrap, ASingleDrawCanBeReproducedInIsolation) {
  const auto f = fitted(200, 1, 6);
  BootstrapOptions opt;
  opt.B = 20;
  opt.seed = 12;
  const auto cfg = support_config(axis_grid(1));
  const auto run = bootstrap_draws(f.sim.data, f.profile, cfg, opt);
  const SecondStage stage(f.sim.data, f.profile, cfg);
  for (int b : {0, 7, 19}) {
    const VectorXd w = bootstrap_weights(200, 12, b);
    EXPECT_EQ(stage.evaluate(&w).values, run.draws.row(b).transpose()) << "draw " << b;
  }
}

TEST(Bootstrap, RejectsTooFewDraws) {
  const auto f = fitted(50, 1, 7);
  BootstrapOptions opt;
  opt.B = 1;
  EXPECT_THROW(bootstrap_draws(f.sim.data, f.profile, support_config(axis_grid(1)), opt), std::invalid_argument);
}

TEST(Bootstrap, MeanIsNearThePointEstimate) {
  const auto f = fitted(1000, 1, 8);
  BootstrapOptions opt;
  opt.B = 400;
  opt.seed = 13;
  const auto run = bootstrap_draws(f.sim.data, f.profile, support_config(axis_grid(1)), opt);
  for (Index k = 0; k < 2; ++k) {
    const VectorXd col = run.draws.col(k);
    const double sd = setid::testing::sample_sd(col);
    EXPECT_LE(std::abs(col.mean() - run.point_estimate(k)), 4.0 * sd / std::sqrt(400.0)) << "target " << k;
  }
}

TEST(Bootstrap, GridPermutationPermutesColumns) {
  const auto f = fitted(200, 2, 9);
  const auto grid = direction_grid(2, 5);
  std::vector<VectorXd> reversed(grid.rbegin(), grid.rend());
  BootstrapOptions opt;
  opt.B = 10;
  opt.seed = 14;
  const auto a = bootstrap_draws(f.sim.data, f.profile, support_config(grid), opt);
  const auto b = bootstrap_draws(f.sim.data, f.profile, support_config(reversed), opt);
  for (Index k = 0; k < 5; ++k) EXPECT_EQ(a.draws.col(k), b.draws.col(4 - k));
}

TEST(CovarianceEstimate, ConstantDrawsGiveZero) {
  const MatrixXd draws = MatrixXd::Constant(10, 3, 2.5);
  EXPECT_EQ(covariance_estimate(draws, 100), MatrixXd::Zero(3, 3));
}

TEST(CovarianceEstimate, IsSymmetricAndScaledByN) {
  Gen gen(10);
  const MatrixXd draws = gen.normal_matrix(50, 4);
  const MatrixXd omega = covariance_estimate(draws, 7);
  EXPECT_EQ(omega, omega.transpose());
  const MatrixXd c = draws.rowwise() - draws.colwise().mean();
  const MatrixXd ref = 7.0 * (c.transpose() * c) / 49.0;
  EXPECT_TRUE(omega.isApprox(ref, 1e-13));
}

TEST(PsdSqrt, SquaresBackAndClipsNegatives) {
  MatrixXd a(2, 2);
  a << 4, 2, 2, 3;
  const MatrixXd r = psd_sqrt(a);
  EXPECT_TRUE((r * r).isApprox(a, 1e-13));
  MatrixXd neg(2, 2);
  neg << 1, 0, 0, -1;
  bool clipped = false;
  const MatrixXd rn = psd_sqrt(neg, &clipped);
  EXPECT_TRUE(clipped);
  EXPECT_NEAR(rn(1, 1), 0.0, 1e-15);
  EXPECT_NEAR(rn(0, 0), 1.0, 1e-15);
}

TEST(NormalQuantile, KnownValues) {
  EXPECT_NEAR(normal_quantile(std::sqrt(0.95)), 1.9545083272139914, 1e-14);
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-14);
  EXPECT_EQ(normal_quantile(0.5), 0.0);
  EXPECT_THROW(normal_quantile(1.0), std::invalid_argument);
}

TEST(PointwiseRegion, ZeroVarianceGivesTheEstimatedInterval) {
  BoundsEstimate est;
  est.kind = BoundsKind::LEE_OUTCOME;
  est.lower = -0.5;
  est.upper = 1.25;
  const auto run = run_from(MatrixXd::Constant(20, 2, 0.3), 100);
  const auto region = pointwise_region(est, run, 0.05);
  EXPECT_EQ(region.lower(0), -0.5);
  EXPECT_EQ(region.upper(0), 1.25);
  EXPECT_NEAR(region.critical_value, 1.9545083272139914, 1e-14);
  EXPECT_EQ(region.kind, RegionKind::POINTWISE_SET);
}

TEST(PointwiseRegion, DiagonalCovarianceByHand) {
  // Draws of (lower, upper) with sample variances 1 and 4 and no correlation.
  MatrixXd draws(4, 2);
  draws << 1, 2, -1, -2, 1, -2, -1, 2;
  draws *= std::sqrt(3.0 / 4.0);
  BoundsEstimate est;
  est.kind = BoundsKind::LEE_OUTCOME;
  const auto run = run_from(draws, 1);
  const auto region = pointwise_region(est, run, 0.05);
  const double c = 1.9545083272139914;
  EXPECT_NEAR(region.lower(0), -c, 1e-12);
  EXPECT_NEAR(region.upper(0), 2.0 * c, 1e-12);
}

TEST(PointwiseRegion, ShrinksAsAlphaGrows) {
  const auto f = fitted(500, 1, 15);
  const auto est = plp_bounds_1d(f.sim.data, f.profile);
  BootstrapOptions opt;
  opt.B = 200;
  opt.seed = 16;
  const auto run = bootstrap_draws(f.sim.data, f.profile, support_config(axis_grid(1)), opt);
  double prev_width = INFINITY;
  for (double alpha : {0.01, 0.05, 0.1, 0.5}) {
    const auto r = pointwise_region(est, run, alpha);
    const double width = r.upper(0) - r.lower(0);
    EXPECT_LT(width, prev_width) << "alpha " << alpha;
    EXPECT_LE(r.lower(0), est.lower);
    EXPECT_GE(r.upper(0), est.upper);
    prev_width = width;
  }
}

TEST(UniformBand, SingleDirectionIsASymmetricInterval) {
  Gen gen(17);
  SupportFunctionEstimate est;
  est.values = VectorXd::Constant(1, 2.0);
  MatrixXd draws(101, 1);
  for (Index b = 0; b < 101; ++b) draws(b, 0) = 2.0 + gen.normal();
  const auto band = uniform_band(est, run_from(draws, 50), 0.1);
  EXPECT_NEAR(band.upper(0) - 2.0, 2.0 - band.lower(0), 1e-12);
  EXPECT_GT(band.critical_value, 0.0);
  EXPECT_TRUE(band.excluded.empty());
}

TEST(UniformBand, CriticalValueIsAtLeastPointwise) {
  const auto f = fitted(500, 2, 18);
  const auto grid = direction_grid(2, 12);
  const auto est = support_unknown_sigma(f.sim.data, f.profile, grid);
  BootstrapOptions opt;
  opt.B = 300;
  opt.seed = 19;
  const auto run = bootstrap_draws(f.sim.data, f.profile, support_config(grid), opt);
  const auto band = uniform_band(est, run, 0.05);
  // The sup over directions dominates each direction's own |t| quantile.
  for (Index k = 0; k < 12; ++k) {
    const VectorXd col = run.draws.col(k);
    const double sd = setid::testing::sample_sd(col);
    std::vector<double> t;
    for (Index b = 0; b < col.size(); ++b) t.push_back(std::abs(col(b) - est.values(k)) / sd);
    std::sort(t.begin(), t.end());
    EXPECT_GE(band.critical_value, empirical_quantile(t, 0.95)) << "direction " << k;
  }
}

TEST(UniformBand, ZeroSdDirectionsAreExcluded) {
  Gen gen(20);
  SupportFunctionEstimate est;
  est.values = VectorXd::Zero(2);
  MatrixXd draws(30, 2);
  for (Index b = 0; b < 30; ++b) {
    draws(b, 0) = gen.normal();
    draws(b, 1) = 0.0;
  }
  const auto band = uniform_band(est, run_from(draws, 30), 0.05);
  ASSERT_EQ(band.excluded, std::vector<Index>{1});
  EXPECT_EQ(band.lower(1), 0.0);
  EXPECT_EQ(band.upper(1), 0.0);
}
