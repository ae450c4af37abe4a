#include "setid/oracle/oracle.hpp"

#include <cmath>
#include <numbers>

#include "setid/errors.hpp"
#include "setid/learners.hpp"
#include "setid/moments.hpp"

namespace setid::oracle {

PopulationTruth analytic_plp_truth(const DgpSpec& spec) {
  if (spec.model != Model::PLP) throw UnsupportedError("analytic truth is available for the Gaussian PLP design only");
  validate(spec);
  PopulationTruth t;
  t.model = Model::PLP;
  t.spec = spec;
  const Index d = spec.beta0.size();
  const MatrixXd sigma_inv = MatrixXd::Identity(d, d) / (spec.residual_sd * spec.residual_sd);
  const VectorXd beta0 = spec.beta0;
  const double half_width = 0.5 * spec.interval_width;
  const double abs_moment = std::sqrt(2.0 / std::numbers::pi);
  t.sigma_q = [=](const VectorXd& q) {
    // q' Sigma^{-1} V ~ N(0, q' Sigma^{-1} q) and E|N(0, s^2)| = s sqrt(2/pi).
    return q.dot(beta0) + half_width * abs_moment * std::sqrt(q.dot(sigma_inv * q));
  };
  if (d == 1) {
    const VectorXd up = VectorXd::Constant(1, 1.0), down = VectorXd::Constant(1, -1.0);
    t.beta_interval = std::make_pair(-t.sigma_q(down), t.sigma_q(up));
  }
  return t;
}

BruteForceResult brute_force_from_scores(const VectorXd& z, const VectorXd& y_lower, const VectorXd& y_upper) {
  const Index n = z.size();
  if (n > kExhaustiveCap) throw UnsupportedError("exhaustive search is capped at 18 observations");
  if (n < 1) throw std::invalid_argument("brute force needs at least one observation");
  BruteForceResult res;
  res.exhaustive = -INFINITY;
  const std::uint64_t count = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    double sum = 0.0;
    for (Index i = 0; i < n; ++i) sum += z(i) * (((mask >> i) & 1u) ? y_upper(i) : y_lower(i));
    res.exhaustive = std::max(res.exhaustive, sum);
  }
  res.exhaustive /= static_cast<double>(n);
  double sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    const bool take_upper = z(i) > 0.0;
    sum += z(i) * (take_upper ? y_upper(i) : y_lower(i));
  }
  res.sign_rule = sum / static_cast<double>(n);
  return res;
}

BruteForceResult brute_force_sample_support(const Dataset& data, const VectorXd& q, const MatrixXd& eta,
                                             const MatrixXd& sigma) {
  if (!data.YL || !data.YU) throw DataError("brute force needs y_lower and y_upper");
  const VectorXd p = sigma.inverse().transpose() * q;
  VectorXd z(data.n());
  for (Index i = 0; i < data.n(); ++i) z(i) = p.dot((data.D.row(i) - eta.row(i)).transpose());
  return brute_force_from_scores(z, *data.YL, *data.YU);
}

double oracle_plugin_estimator(const Dataset& data, const VectorXd& q, const Truth& truth, const MatrixXd& sigma) {
  if (truth.model() != Model::PLP) throw UnsupportedError("oracle plug-in estimator needs the PLP design");
  const VectorXd p = sigma.inverse().transpose() * q;
  double sum = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    const VectorXd x = data.X.row(i).transpose();
    const VectorXd v = data.D.row(i).transpose() - truth.first_stage(x);
    const double z = p.dot(v);
    const double y = z > 0.0 ? (*data.YU)(i) : (*data.YL)(i);
    const double gamma = truth.gamma_l(x) + 0.5 * truth.gamma_ul();
    sum += z * (y - gamma);
  }
  return sum / static_cast<double>(data.n());
}

double oracle_mean_correction(const Dataset& data, const VectorXd& q, const Truth& truth, const MatrixXd& sigma) {
  const VectorXd p = sigma.inverse().transpose() * q;
  double sum = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    const VectorXd x = data.X.row(i).transpose();
    const double z = p.dot(data.D.row(i).transpose() - truth.first_stage(x));
    sum += -z * (truth.gamma_l(x) + 0.5 * truth.gamma_ul());
  }
  return sum / static_cast<double>(data.n());
}

std::pair<double, double> oracle_lee_bounds(const Dataset& data, const Truth& truth) {
  if (truth.model() != Model::LEE) throw UnsupportedError("oracle Lee bounds need the LEE design");
  const Index n = data.n();
  double count = 0.0;
  for (Index i = 0; i < n; ++i) count += (data.D(i, 0) == 0.0 && (*data.S)(i) == 1.0) ? 1.0 : 0.0;
  const double p01 = count / static_cast<double>(n);
  double lo = 0.0, up = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Observation o = data.row(i);
    LeeRecord r;
    r.s0 = truth.s0(o.x);
    r.s1 = truth.s1(o.x);
    r.p0 = std::min(r.s0 / r.s1, 1.0);
    r.y_lo = truth.quantile(std::clamp(r.p0, kProbabilityFloor, 1.0 - kProbabilityFloor), o.x);
    r.y_hi = truth.quantile(std::clamp(1.0 - r.p0, kProbabilityFloor, 1.0 - kProbabilityFloor), o.x);
    r.prop1 = truth.propensity();
    r.gamma_control = truth.control_mean(o.x);
    r.p01 = p01;
    lo += lee_lower_moment(o, r).g;
    up += lee_upper_moment(o, r).g;
  }
  return {lo / static_cast<double>(n), up / static_cast<double>(n)};
}

}  // namespace setid::oracle
