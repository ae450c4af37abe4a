#include "setid/estimators.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "setid/errors.hpp"

namespace setid {

std::string to_string(BoundsKind k) {
  switch (k) {
    case BoundsKind::PLP_1D: return "PLP_1D";
    case BoundsKind::LEE_OUTCOME: return "LEE_OUTCOME";
    case BoundsKind::LEE_ATE: return "LEE_ATE";
  }
  return "?";
}

namespace {

MatrixXd centered(const MatrixXd& scores) {
  return scores.rowwise() - scores.colwise().mean();
}

void require_spd(const MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols()) throw std::invalid_argument("Sigma must be square");
  if (!sigma.isApprox(sigma.transpose(), 1e-12)) throw std::invalid_argument("Sigma must be symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
  for (Index j = 0; j < es.eigenvalues().size(); ++j) {
    if (!(es.eigenvalues()(j) > 0.0)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "Sigma is not positive definite: eigenvalue " << es.eigenvalues()(j);
      throw std::invalid_argument(msg.str());
    }
  }
}

}  // namespace

SupportFunctionEstimate support_known_sigma(const Dataset& data, const NuisanceProfile& profile,
                                            const MatrixXd& sigma, const std::vector<VectorXd>& grid, bool naive) {
  require_spd(sigma);
  SecondStageConfig cfg;
  cfg.kind = SecondStageKind::SUPPORT_KNOWN_SIGMA;
  cfg.grid = grid;
  cfg.sigma = sigma;
  cfg.naive = naive;
  const SecondStage stage(data, profile, cfg);
  const auto ev = stage.evaluate(nullptr, true);
  SupportFunctionEstimate est;
  est.grid = grid;
  est.values = ev.values;
  est.sigma_hat = sigma;
  est.influence = centered(ev.scores);
  est.n = data.n();
  est.config = cfg;
  return est;
}

SupportFunctionEstimate support_unknown_sigma(const Dataset& data, const NuisanceProfile& profile,
                                              const std::vector<VectorXd>& grid, bool naive, double lambda_min,
                                              double lambda_max) {
  SecondStageConfig cfg;
  cfg.kind = SecondStageKind::SUPPORT_UNKNOWN_SIGMA;
  cfg.grid = grid;
  cfg.naive = naive;
  cfg.lambda_min = lambda_min;
  cfg.lambda_max = lambda_max;
  const SecondStage stage(data, profile, cfg);
  const auto ev = stage.evaluate(nullptr, true);
  SupportFunctionEstimate est;
  est.grid = grid;
  est.values = ev.values;
  est.sigma_hat = ev.sigma;
  est.n = data.n();
  est.config = cfg;
  est.influence = centered(ev.scores);

  // Estimation of Sigma adds -p'(A_i - Sigma_hat) Sigma_hat^{-1} b_hat with
  // b_hat = mean V_i (Y_p,i - gamma_i); the generator switch contributes only
  // at second order.
  const Index n = data.n(), d = data.dim_d();
  const MatrixXd V = data.D - profile.at("eta");
  const MatrixXd sigma_inv = ev.sigma.inverse();
  const VectorXd& yl = *data.YL;
  const VectorXd& yu = *data.YU;
  const MatrixXd& gl = profile.at("gamma_l");
  const MatrixXd& gul = profile.at("gamma_ul");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const VectorXd p = sigma_inv.transpose() * grid[k];
    VectorXd b = VectorXd::Zero(d);
    for (Index i = 0; i < n; ++i) {
      const double z = p.dot(V.row(i).transpose());
      const double target = naive ? q_generator(yl(i), yu(i), z)
                                  : q_generator(yl(i), yu(i), z) - (gl(i, 0) + 0.5 * gul(i, 0));
      b += V.row(i).transpose() * target;
    }
    b /= static_cast<double>(n);
    const VectorXd c = sigma_inv * b;
    for (Index i = 0; i < n; ++i) {
      const VectorXd v = V.row(i).transpose();
      const MatrixXd dA = v * v.transpose() - ev.sigma;
      est.influence(i, static_cast<Index>(k)) -= p.dot(dA * c);
    }
  }
  est.influence = centered(est.influence);
  return est;
}

BoundsEstimate plp_bounds_1d(const Dataset& data, const NuisanceProfile& profile, bool naive) {
  if (data.dim_d() != 1) throw std::invalid_argument("plp_bounds_1d needs d = 1");
  return coordinate_bounds(support_unknown_sigma(data, profile, axis_grid(1), naive));
}

std::vector<VectorXd> axis_grid(Index d) {
  if (d < 1) throw std::invalid_argument("axis_grid needs d >= 1");
  const VectorXd e = VectorXd::Unit(d, 0);
  return {e, -e};
}

BoundsEstimate coordinate_bounds(const SupportFunctionEstimate& est) {
  const Index d = est.grid.empty() ? 0 : est.grid.front().size();
  if (est.grid.size() != 2 || d < 1 || est.grid[0] != VectorXd::Unit(d, 0) || est.grid[1] != -VectorXd::Unit(d, 0))
    throw std::invalid_argument("coordinate_bounds needs a support estimate on {e_1, -e_1}");
  BoundsEstimate b;
  b.kind = BoundsKind::PLP_1D;
  b.upper = est.values(0);
  b.lower = -est.values(1);
  b.influence_upper = est.influence.col(0);
  b.influence_lower = -est.influence.col(1);
  b.n = est.n;
  b.config = est.config;
  return b;
}

SupportFunctionEstimate apd_support(const Dataset& data, const NuisanceProfile& profile,
                                    const std::vector<VectorXd>& grid, bool naive) {
  SecondStageConfig cfg;
  cfg.kind = SecondStageKind::APD_SUPPORT;
  cfg.grid = grid;
  cfg.naive = naive;
  const SecondStage stage(data, profile, cfg);
  const auto ev = stage.evaluate(nullptr, true);
  SupportFunctionEstimate est;
  est.grid = grid;
  est.values = ev.values;
  est.sigma_hat = ev.sigma;
  est.influence = centered(ev.scores);
  est.n = data.n();
  est.config = cfg;
  return est;
}

namespace {

BoundsEstimate lee_common(const Dataset& data, const NuisanceProfile& profile, SecondStageKind kind, bool naive) {
  SecondStageConfig cfg;
  cfg.kind = kind;
  cfg.naive = naive;
  const SecondStage stage(data, profile, cfg);
  const auto ev = stage.evaluate(nullptr, true);
  BoundsEstimate b;
  b.kind = kind == SecondStageKind::LEE_ATE ? BoundsKind::LEE_ATE : BoundsKind::LEE_OUTCOME;
  b.lower = ev.values(0);
  b.upper = ev.values(1);
  const MatrixXd h = centered(ev.scores);
  b.influence_lower = h.col(0);
  b.influence_upper = h.col(1);
  b.n = data.n();
  b.config = cfg;
  return b;
}

}  // namespace

BoundsEstimate lee_bounds(const Dataset& data, const NuisanceProfile& profile, bool naive) {
  return lee_common(data, profile, SecondStageKind::LEE_BOUNDS, naive);
}

BoundsEstimate lee_ate(const Dataset& data, const NuisanceProfile& profile) {
  return lee_common(data, profile, SecondStageKind::LEE_ATE, false);
}

double plugin_support_from_scores(const VectorXd& z, const VectorXd& y_lower, const VectorXd& y_upper) {
  if (z.size() != y_lower.size() || z.size() != y_upper.size())
    throw std::invalid_argument("plugin_support_from_scores: length mismatch");
  double sum = 0.0;
  for (Index i = 0; i < z.size(); ++i) sum += z(i) * q_generator(y_lower(i), y_upper(i), z(i));
  return sum / static_cast<double>(z.size());
}

VectorXd influence_se(const MatrixXd& influence) {
  const double n = static_cast<double>(influence.rows());
  VectorXd se(influence.cols());
  for (Index k = 0; k < influence.cols(); ++k) {
    const VectorXd c = influence.col(k).array() - influence.col(k).mean();
    se(k) = std::sqrt(c.squaredNorm() / (n - 1.0)) / std::sqrt(n);
  }
  return se;
}

}  // namespace setid
