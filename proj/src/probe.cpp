#include <cmath>
#include <stdexcept>

#include "setid/errors.hpp"
#include "setid/learners.hpp"
#include "setid/moments.hpp"

namespace setid {

namespace {

constexpr double kDerivativeStep = 1e-5;

VectorXd d_gradient(const Perturbation& pert, const VectorXd& d, const VectorXd& x) {
  VectorXd g(d.size());
  for (Index j = 0; j < d.size(); ++j) {
    VectorXd up = d, down = d;
    up(j) += kDerivativeStep;
    down(j) -= kDerivativeStep;
    g(j) = (pert.direction(up, x) - pert.direction(down, x)) / (2.0 * kDerivativeStep);
  }
  return g;
}

[[noreturn]] void unknown_component(MomentKind kind, const std::string& c) {
  throw std::invalid_argument("component '" + c + "' cannot be perturbed for " + to_string(kind));
}

// Per-observation moment values at xi_0 + r delta.
class ProbeEvaluator {
 public:
  ProbeEvaluator(MomentKind kind, const Dataset& data, const Truth& truth, const Perturbation& pert,
                 const ProbeOptions& opt)
      : kind_(kind), data_(data), truth_(truth), pert_(pert), naive_(opt.naive) {
    const Index n = data.n();
    obs_.reserve(n);
    delta_.resize(n);
    for (Index i = 0; i < n; ++i) {
      obs_.push_back(data.row(i));
      delta_(i) = pert.direction ? pert.direction(obs_[i].d, obs_[i].x) : 0.0;
    }
    q_ = opt.q.size() ? opt.q : VectorXd(VectorXd::Unit(data.dim_d(), 0));
    switch (kind) {
      case MomentKind::PLP:
        if (pert.component != "eta" && pert.component != "gamma_l" && pert.component != "gamma_ul")
          unknown_component(kind, pert.component);
        p_ = truth.residual_covariance().inverse().transpose() * q_;
        break;
      case MomentKind::APD: {
        if (pert.component != "eta" && pert.component != "gamma_l" && pert.component != "gamma_ul")
          unknown_component(kind, pert.component);
        const MatrixXd lambda_inv = truth.residual_covariance().inverse();
        spread_ = q_.dot(lambda_inv * q_);
        VectorXd z(n);
        for (Index i = 0; i < n; ++i) z(i) = q_.dot(truth.apd_eta(obs_[i].d, obs_[i].x));
        bandwidth_ = silverman_bandwidth(z);
        if (pert.component != "eta" && pert.direction) {
          dgrad_.resize(n);
          for (Index i = 0; i < n; ++i) dgrad_[i] = d_gradient(pert, obs_[i].d, obs_[i].x);
        }
        break;
      }
      case MomentKind::LEE_UPPER:
      case MomentKind::LEE_LOWER: {
        if (pert.component != "s0" && pert.component != "s1" && pert.component != "quantile")
          unknown_component(kind, pert.component);
        double count = 0.0;
        for (const auto& o : obs_) count += (o.d(0) == 0.0 && o.s && *o.s == 1) ? 1.0 : 0.0;
        p01_ = count / static_cast<double>(n);
        break;
      }
    }
  }

  VectorXd values(double r) const {
    const Index n = data_.n();
    VectorXd out(n);
    for (Index i = 0; i < n; ++i) {
      const MomentValue v = at(i, r);
      out(i) = naive_ ? v.m : v.g;
    }
    return out;
  }

 private:
  MomentValue at(Index i, double r) const {
    const Observation& o = obs_[i];
    const double shift = r * delta_(i);
    const std::string& c = pert_.component;
    switch (kind_) {
      case MomentKind::PLP: {
        PlpRecord rec{truth_.first_stage(o.x), truth_.gamma_l(o.x), truth_.gamma_ul()};
        if (c == "eta") rec.eta.array() += shift;
        if (c == "gamma_l") rec.gamma_l += shift;
        if (c == "gamma_ul") rec.gamma_ul += shift;
        return plp_moment(o, p_, rec);
      }
      case MomentKind::APD: {
        const Index d = o.d.size();
        ApdRecord rec{truth_.apd_eta(o.d, o.x), truth_.gamma_l(o.d, o.x), truth_.gamma_ul(), truth_.dgamma_l(),
                      VectorXd::Zero(d), 0.0};
        if (c == "eta") rec.eta.array() += shift;
        if (c == "gamma_l") {
          rec.gamma_l += shift;
          if (!dgrad_.empty()) rec.dgamma_l += r * dgrad_[i];
        }
        if (c == "gamma_ul") {
          rec.gamma_ul += shift;
          if (!dgrad_.empty()) rec.dgamma_ul += r * dgrad_[i];
        }
        rec.jump_density = gaussian_kernel(q_.dot(rec.eta), bandwidth_) * spread_;
        return apd_moment(o, q_, rec);
      }
      case MomentKind::LEE_UPPER:
      case MomentKind::LEE_LOWER: {
        LeeRecord rec;
        rec.s0 = truth_.s0(o.x) + (c == "s0" ? shift : 0.0);
        rec.s1 = truth_.s1(o.x) + (c == "s1" ? shift : 0.0);
        rec.p0 = std::min(rec.s0 / rec.s1, 1.0);
        const double qshift = c == "quantile" ? shift : 0.0;
        rec.y_lo = truth_.quantile(std::clamp(rec.p0, kProbabilityFloor, 1.0 - kProbabilityFloor), o.x) + qshift;
        rec.y_hi =
            truth_.quantile(std::clamp(1.0 - rec.p0, kProbabilityFloor, 1.0 - kProbabilityFloor), o.x) + qshift;
        rec.prop1 = truth_.propensity();
        rec.gamma_control = truth_.control_mean(o.x);
        rec.p01 = p01_;
        return kind_ == MomentKind::LEE_UPPER ? lee_upper_moment(o, rec) : lee_lower_moment(o, rec);
      }
    }
    throw std::logic_error("unreachable");
  }

  MomentKind kind_;
  const Dataset& data_;
  const Truth& truth_;
  const Perturbation& pert_;
  bool naive_;
  std::vector<Observation> obs_;
  VectorXd delta_;
  VectorXd q_, p_;
  std::vector<VectorXd> dgrad_;
  double spread_ = 0.0, bandwidth_ = 1.0, p01_ = 1.0;
};

}  // namespace

ProbeResult gateaux_probe(MomentKind kind, const Dataset& data, const Truth& truth, const Perturbation& pert,
                          const ProbeOptions& options) {
  if (!(options.h > 0.0)) throw std::invalid_argument("gateaux_probe needs h > 0");
  if (data.n() < 2) throw std::invalid_argument("gateaux_probe needs at least two observations");
  const double h = options.h;
  const ProbeEvaluator eval(kind, data, truth, pert, options);

  ProbeResult res;
  const std::array<double, 5> r{-2.0 * h, -h, 0.0, h, 2.0 * h};
  VectorXd minus, plus;
  for (int k = 0; k < 5; ++k) {
    const VectorXd v = eval.values(r[k]);
    res.F[k] = v.mean();
    if (k == 1) minus = v;
    if (k == 3) plus = v;
  }
  const double n = static_cast<double>(data.n());
  res.derivative = (res.F[3] - res.F[1]) / (2.0 * h);
  const VectorXd diff = (plus - minus) / (2.0 * h);
  const double sd = std::sqrt((diff.array() - diff.mean()).square().sum() / (n - 1.0));
  res.se = sd / std::sqrt(n);
  const double kappa3 = std::abs(res.F[4] - 2.0 * res.F[3] + 2.0 * res.F[1] - res.F[0]) / (2.0 * h * h * h);
  res.curvature = kappa3 * h * h / 6.0;
  res.bound = 5.0 * (res.se + res.curvature);

  Eigen::Matrix<double, 5, 3> A;
  Eigen::Matrix<double, 5, 1> F;
  for (int k = 0; k < 5; ++k) {
    A(k, 0) = 1.0;
    A(k, 1) = r[k] / h;
    A(k, 2) = (r[k] / h) * (r[k] / h);
    F(k) = res.F[k];
  }
  const Eigen::Vector3d coef = A.colPivHouseholderQr().solve(F);
  res.second_order_residual = (F - A * coef).cwiseAbs().maxCoeff();
  return res;
}

}  // namespace setid
