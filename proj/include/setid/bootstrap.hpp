#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "setid/estimators.hpp"

namespace setid {

struct BootstrapOptions {
  int B = 500;
  std::uint64_t seed = 0;
  // Test hook: every weight equals one.
  bool identity_weights = false;
  // Share of draws allowed to hit a singular Sigma / Lambda before failing.
  double max_flagged_share = 0.01;
};

struct BootstrapRun {
  MatrixXd draws;  // B x targets
  int B = 0;
  std::uint64_t seed = 0;
  std::string weights_scheme = "EXP1";
  VectorXd point_estimate;  // identity-weight evaluation
  int flagged = 0;          // resampled draws
  Index n = 0;
  SecondStageKind kind = SecondStageKind::SUPPORT_UNKNOWN_SIGMA;
};

// Exp(1) draws for replicate b (attempt counts resamples) divided by their
// mean.
VectorXd bootstrap_weights(Index n, std::uint64_t seed, int b, int attempt = 0);

BootstrapRun bootstrap_draws(const SecondStage& stage, const BootstrapOptions& options);
BootstrapRun bootstrap_draws(const Dataset& data, const NuisanceProfile& profile, const SecondStageConfig& config,
                             const BootstrapOptions& options);

// N times the sample covariance of the draws.
MatrixXd covariance_estimate(const BootstrapRun& run);
MatrixXd covariance_estimate(const MatrixXd& draws, Index n);

// Symmetric square root with negative eigenvalues clipped to zero.
MatrixXd psd_sqrt(const MatrixXd& omega, bool* clipped = nullptr);

double normal_quantile(double u);

enum class RegionKind { POINTWISE_SET, UNIFORM_BAND };

std::string to_string(RegionKind k);

struct ConfidenceRegion {
  double level = 0.95;
  VectorXd lower;
  VectorXd upper;
  double critical_value = 0.0;
  RegionKind kind = RegionKind::POINTWISE_SET;
  std::vector<Index> excluded;  // directions with zero bootstrap SD
};

// Draws of (lower, upper) for a bounds estimate.
MatrixXd bounds_draws(const BoundsEstimate& estimate, const BootstrapRun& run);

// [L - C_1 / sqrt(N), U + C_2 / sqrt(N)], C = Omega^{1/2} (c, c)',
// c = Phi^{-1}(sqrt(1 - alpha)).
ConfidenceRegion pointwise_region(const BoundsEstimate& estimate, const BootstrapRun& run, double alpha);
// Sup-t band: sigma_hat(q) +/- crit SD_b(q), crit the (1 - alpha) quantile of
// max_q |draw - sigma_hat| / SD_b.
ConfidenceRegion uniform_band(const SupportFunctionEstimate& estimate, const BootstrapRun& run, double alpha);

std::string format_draws_csv(const BootstrapRun& run);

}  // namespace setid
