#include "setid/bootstrap.hpp"

#include <spdlog/spdlog.h>
#include <tbb/parallel_for.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/random/exponential_distribution.hpp>
#include <cmath>
#include <sstream>

#include "setid/errors.hpp"
#include "setid/learners.hpp"
#include "setid/rng.hpp"

namespace setid {

std::string to_string(RegionKind k) {
  return k == RegionKind::POINTWISE_SET ? "POINTWISE_SET" : "UNIFORM_BAND";
}

VectorXd bootstrap_weights(Index n, std::uint64_t seed, int b, int attempt) {
  auto eng = make_engine(seed, Stream::Bootstrap, static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(attempt));
  boost::random::exponential_distribution<double> exp1(1.0);
  VectorXd e(n);
  for (Index i = 0; i < n; ++i) e(i) = exp1(eng);
  return e / e.mean();
}

BootstrapRun bootstrap_draws(const SecondStage& stage, const BootstrapOptions& options) {
  if (options.B < 2) throw std::invalid_argument("bootstrap needs B >= 2");
  BootstrapRun run;
  run.B = options.B;
  run.seed = options.seed;
  run.n = stage.n();
  run.kind = stage.config().kind;
  run.point_estimate = stage.evaluate().values;
  run.draws.resize(options.B, stage.targets());

  const int max_attempts = std::max(1, static_cast<int>(std::floor(options.max_flagged_share * options.B)) + 1);
  std::vector<int> flagged(options.B, 0);
  std::vector<std::exception_ptr> errors(options.B);
  tbb::parallel_for(0, options.B, [&](int b) {
    try {
      for (int attempt = 0;; ++attempt) {
        if (attempt >= max_attempts) throw DegenerateError("bootstrap draw " + std::to_string(b) + " stayed singular");
        try {
          if (options.identity_weights) {
            run.draws.row(b) = stage.evaluate().values.transpose();
          } else {
            const VectorXd w = bootstrap_weights(stage.n(), options.seed, b, attempt);
            run.draws.row(b) = stage.evaluate(&w).values.transpose();
          }
          break;
        } catch (const DegenerateError&) {
          ++flagged[b];
        }
      }
    } catch (...) {
      errors[b] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (int f : flagged) run.flagged += f;
  if (run.flagged > options.max_flagged_share * options.B)
    throw DegenerateError("bootstrap: " + std::to_string(run.flagged) + " of " + std::to_string(options.B) +
                          " draws had a singular second-stage matrix");
  if (run.flagged > 0) spdlog::warn("bootstrap resampled {} singular draws", run.flagged);
  return run;
}

BootstrapRun bootstrap_draws(const Dataset& data, const NuisanceProfile& profile, const SecondStageConfig& config,
                             const BootstrapOptions& options) {
  const SecondStage stage(data, profile, config);
  return bootstrap_draws(stage, options);
}

MatrixXd covariance_estimate(const MatrixXd& draws, Index n) {
  const double B = static_cast<double>(draws.rows());
  if (draws.rows() < 2) throw std::invalid_argument("covariance_estimate needs at least two draws");
  const MatrixXd c = draws.rowwise() - draws.colwise().mean();
  MatrixXd omega = (c.transpose() * c) / (B - 1.0) * static_cast<double>(n);
  // Exact symmetry regardless of the product's rounding.
  for (Index a = 0; a < omega.rows(); ++a)
    for (Index b = a + 1; b < omega.cols(); ++b) omega(b, a) = omega(a, b);
  return omega;
}

MatrixXd covariance_estimate(const BootstrapRun& run) { return covariance_estimate(run.draws, run.n); }

MatrixXd psd_sqrt(const MatrixXd& omega, bool* clipped) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(omega);
  VectorXd ev = es.eigenvalues();
  bool clip = false;
  for (Index j = 0; j < ev.size(); ++j) {
    if (ev(j) < 0.0) {
      clip = clip || ev(j) < -1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
      ev(j) = 0.0;
    }
  }
  if (clipped) *clipped = clip;
  return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

double normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) throw std::invalid_argument("normal_quantile needs u in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), u);
}

MatrixXd bounds_draws(const BoundsEstimate& estimate, const BootstrapRun& run) {
  if (run.draws.cols() != 2) throw std::invalid_argument("bounds bootstrap needs two targets");
  MatrixXd out(run.draws.rows(), 2);
  if (estimate.kind == BoundsKind::PLP_1D) {
    // Targets are sigma(+1) = upper and sigma(-1) = -lower.
    out.col(0) = -run.draws.col(1);
    out.col(1) = run.draws.col(0);
  } else {
    out = run.draws;
  }
  return out;
}

ConfidenceRegion pointwise_region(const BoundsEstimate& estimate, const BootstrapRun& run, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const MatrixXd omega = covariance_estimate(bounds_draws(estimate, run), run.n);
  bool clipped = false;
  const MatrixXd root = psd_sqrt(omega, &clipped);
  if (clipped) spdlog::warn("bootstrap covariance of the bounds is not PSD; negative eigenvalues clipped");
  const double c = normal_quantile(std::sqrt(1.0 - alpha));
  const Eigen::Vector2d C = root * Eigen::Vector2d(c, c);
  const double scale = 1.0 / std::sqrt(static_cast<double>(run.n));
  ConfidenceRegion region;
  region.level = 1.0 - alpha;
  region.kind = RegionKind::POINTWISE_SET;
  region.critical_value = c;
  region.lower = VectorXd::Constant(1, estimate.lower - scale * C(0));
  region.upper = VectorXd::Constant(1, estimate.upper + scale * C(1));
  return region;
}

ConfidenceRegion uniform_band(const SupportFunctionEstimate& estimate, const BootstrapRun& run, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const Index m = estimate.values.size();
  if (run.draws.cols() != m) throw std::invalid_argument("bootstrap run does not match the estimate's grid");
  const Index B = run.draws.rows();
  VectorXd sd(m);
  ConfidenceRegion region;
  region.level = 1.0 - alpha;
  region.kind = RegionKind::UNIFORM_BAND;
  for (Index k = 0; k < m; ++k) {
    const VectorXd c = run.draws.col(k).array() - run.draws.col(k).mean();
    sd(k) = std::sqrt(c.squaredNorm() / static_cast<double>(B - 1));
    if (!(sd(k) > 0.0)) {
      region.excluded.push_back(k);
      spdlog::warn("uniform band: direction {} has zero bootstrap SD and is excluded", k);
    }
  }
  std::vector<double> sup(B, 0.0);
  for (Index b = 0; b < B; ++b)
    for (Index k = 0; k < m; ++k)
      if (sd(k) > 0.0) sup[b] = std::max(sup[b], std::abs(run.draws(b, k) - estimate.values(k)) / sd(k));
  std::sort(sup.begin(), sup.end());
  region.critical_value = empirical_quantile(sup, 1.0 - alpha);
  region.lower = estimate.values - region.critical_value * sd;
  region.upper = estimate.values + region.critical_value * sd;
  return region;
}

std::string format_draws_csv(const BootstrapRun& run) {
  std::ostringstream out;
  out.precision(17);
  out << "draw";
  for (Index k = 0; k < run.draws.cols(); ++k) out << ",target_" << k + 1;
  out << '\n';
  for (Index b = 0; b < run.draws.rows(); ++b) {
    out << b;
    for (Index k = 0; k < run.draws.cols(); ++k) out << ',' << run.draws(b, k);
    out << '\n';
  }
  return out.str();
}

}  // namespace setid
