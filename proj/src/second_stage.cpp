#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "setid/errors.hpp"
#include "setid/estimators.hpp"

namespace setid {

std::string to_string(SecondStageKind k) {
  switch (k) {
    case SecondStageKind::SUPPORT_KNOWN_SIGMA: return "SUPPORT_KNOWN_SIGMA";
    case SecondStageKind::SUPPORT_UNKNOWN_SIGMA: return "SUPPORT_UNKNOWN_SIGMA";
    case SecondStageKind::APD_SUPPORT: return "APD_SUPPORT";
    case SecondStageKind::LEE_BOUNDS: return "LEE_BOUNDS";
    case SecondStageKind::LEE_ATE: return "LEE_ATE";
  }
  return "?";
}

namespace {

Model model_of(SecondStageKind k) {
  switch (k) {
    case SecondStageKind::SUPPORT_KNOWN_SIGMA:
    case SecondStageKind::SUPPORT_UNKNOWN_SIGMA: return Model::PLP;
    case SecondStageKind::APD_SUPPORT: return Model::APD;
    case SecondStageKind::LEE_BOUNDS:
    case SecondStageKind::LEE_ATE: return Model::LEE;
  }
  return Model::PLP;
}

MatrixXd weighted_outer_mean(const MatrixXd& V, const VectorXd& w) {
  const Index n = V.rows(), d = V.cols();
  MatrixXd S = MatrixXd::Zero(d, d);
  for (Index i = 0; i < n; ++i)
    for (Index a = 0; a < d; ++a)
      for (Index b = 0; b < d; ++b) S(a, b) += w(i) * V(i, a) * V(i, b);
  return S / static_cast<double>(n);
}

// Inverse of a symmetric matrix whose eigenvalues must be positive and, when
// `bounds` is set, inside [0.5 lambda_min, 2 lambda_max].
MatrixXd checked_inverse(const MatrixXd& S, const char* name, const SecondStageConfig* bounds) {
  if (!S.allFinite()) throw DegenerateError(std::string(name) + " is not finite");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) {
    std::ostringstream msg;
    msg << name << " is singular (smallest eigenvalue " << lo << ")";
    throw DegenerateError(msg.str());
  }
  if (bounds && (lo < 0.5 * bounds->lambda_min || hi > 2.0 * bounds->lambda_max)) {
    std::ostringstream msg;
    msg << "projection-set violation: eigenvalues of " << name << " in [" << lo << ", " << hi
        << "] leave [" << 0.5 * bounds->lambda_min << ", " << 2.0 * bounds->lambda_max << "]";
    throw DegenerateError(msg.str());
  }
  return S.inverse();
}

}  // namespace

SecondStage::SecondStage(const Dataset& data, const NuisanceProfile& profile, SecondStageConfig config)
    : data_(data), profile_(profile), config_(std::move(config)) {
  const Model model = model_of(config_.kind);
  if (profile.model != model)
    throw std::invalid_argument(to_string(config_.kind) + " needs a " + to_string(model) + " nuisance profile");
  if (profile.n() != data.n()) throw std::invalid_argument("profile and dataset sizes differ");
  for (const auto& name : required_components(model)) profile.at(name);
  const Index n = data.n(), d = data.dim_d();
  obs_.reserve(n);
  for (Index i = 0; i < n; ++i) obs_.push_back(data.row(i));

  if (model == Model::LEE) return;
  if (config_.grid.empty()) throw std::invalid_argument("support estimators need a non-empty grid");
  for (const auto& q : config_.grid) {
    if (q.size() != d) throw std::invalid_argument("grid direction dimension differs from d");
    if (std::abs(q.norm() - 1.0) > 1e-12) throw std::invalid_argument("grid directions must have unit norm");
  }
  residuals_ = data.D - profile.at(model == Model::PLP ? "eta" : "m");

  if (config_.kind == SecondStageKind::SUPPORT_KNOWN_SIGMA) {
    if (config_.sigma.rows() != d || config_.sigma.cols() != d)
      throw std::invalid_argument("known Sigma has the wrong dimension");
  }
  if (model == Model::APD) {
    const MatrixXd lambda_inv = checked_inverse(weighted_outer_mean(residuals_, VectorXd::Ones(n)), "Lambda", nullptr);
    for (const auto& q : config_.grid) {
      const VectorXd u = lambda_inv.transpose() * q;
      VectorXd z(n);
      for (Index i = 0; i < n; ++i) z(i) = u.dot(residuals_.row(i));
      apd_bandwidth_.push_back(silverman_bandwidth(z));
    }
  }
}

Index SecondStage::targets() const {
  return model_of(config_.kind) == Model::LEE ? 2 : static_cast<Index>(config_.grid.size());
}

SecondStage::Evaluation SecondStage::evaluate(const VectorXd* weights, bool keep_scores) const {
  const Index n = data_.n();
  const VectorXd unit = weights ? VectorXd() : VectorXd::Ones(n);
  const VectorXd& w = weights ? *weights : unit;
  if (w.size() != n) throw std::invalid_argument("weight vector length differs from n");
  switch (model_of(config_.kind)) {
    case Model::PLP: return support(w, keep_scores);
    case Model::APD: return apd(w, keep_scores);
    case Model::LEE: return lee(w, keep_scores);
  }
  throw std::logic_error("unreachable");
}

SecondStage::Evaluation SecondStage::support(const VectorXd& w, bool keep) const {
  const Index n = data_.n();
  Evaluation ev;
  MatrixXd sigma_inv;
  if (config_.kind == SecondStageKind::SUPPORT_KNOWN_SIGMA) {
    ev.sigma = config_.sigma;
    sigma_inv = checked_inverse(ev.sigma, "Sigma", nullptr);
  } else {
    ev.sigma = weighted_outer_mean(residuals_, w);
    sigma_inv = checked_inverse(ev.sigma, "Sigma_hat", &config_);
  }
  const VectorXd& yl = *data_.YL;
  const VectorXd& yu = *data_.YU;
  const MatrixXd& gl = profile_.at("gamma_l");
  const MatrixXd& gul = profile_.at("gamma_ul");
  const Index m = targets();
  ev.values.resize(m);
  if (keep) ev.scores.resize(n, m);
  for (Index k = 0; k < m; ++k) {
    const VectorXd p = sigma_inv.transpose() * config_.grid[k];
    double sum = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double z = p.dot(residuals_.row(i));
      const double yp = q_generator(yl(i), yu(i), z);
      const double gamma = gl(i, 0) + 0.5 * gul(i, 0);
      const double v = config_.naive ? z * yp : z * (yp - gamma);
      sum += w(i) * v;
      if (keep) ev.scores(i, k) = v;
    }
    ev.values(k) = sum / static_cast<double>(n);
  }
  return ev;
}

SecondStage::Evaluation SecondStage::apd(const VectorXd& w, bool keep) const {
  const Index n = data_.n();
  Evaluation ev;
  ev.sigma = weighted_outer_mean(residuals_, w);
  const MatrixXd lambda_inv = checked_inverse(ev.sigma, "Lambda_hat", nullptr);
  const VectorXd& yl = *data_.YL;
  const VectorXd& yu = *data_.YU;
  const MatrixXd& gl = profile_.at("gamma_l");
  const MatrixXd& gul = profile_.at("gamma_ul");
  const MatrixXd& dgl = profile_.at("dgamma_l");
  const MatrixXd& dgul = profile_.at("dgamma_ul");
  const Index m = targets();
  ev.values.resize(m);
  if (keep) ev.scores.resize(n, m);
  for (Index k = 0; k < m; ++k) {
    const VectorXd& q = config_.grid[k];
    const VectorXd u = lambda_inv.transpose() * q;
    const double spread = q.dot(lambda_inv * q);
    const double b = apd_bandwidth_[k];
    double sum = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double z = u.dot(residuals_.row(i));
      const bool upper = z > 0.0;
      const double yq = q_generator(yl(i), yu(i), z);
      const double gamma_q = gl(i, 0) + (upper ? gul(i, 0) : 0.0);
      const double dgamma_q = q.dot(dgl.row(i)) + (upper ? q.dot(dgul.row(i)) : 0.0) +
                              gul(i, 0) * gaussian_kernel(z, b) * spread;
      const double v = config_.naive ? z * yq : z * yq - z * gamma_q + dgamma_q;
      sum += w(i) * v;
      if (keep) ev.scores(i, k) = v;
    }
    ev.values(k) = sum / static_cast<double>(n);
  }
  return ev;
}

SecondStage::Evaluation SecondStage::lee(const VectorXd& w, bool keep) const {
  const Index n = data_.n();
  const VectorXd& S = *data_.S;
  double count = 0.0;
  for (Index i = 0; i < n; ++i) count += w(i) * ((data_.D(i, 0) == 0.0 && S(i) == 1.0) ? 1.0 : 0.0);
  const double p01 = count / static_cast<double>(n);
  if (!(p01 >= kProbabilityFloor)) throw DegenerateError("Pr(D=0, S=1) below the probability floor");

  const auto& P = profile_.values;
  const MatrixXd &s0 = P.at("s0"), &s1 = P.at("s1"), &p0 = P.at("p0"), &ylo = P.at("y_lo"), &yhi = P.at("y_hi"),
                 &prop = P.at("prop1"), &gc = P.at("gamma_control");
  Evaluation ev;
  ev.p01 = VectorXd::Constant(1, p01);
  ev.values = VectorXd::Zero(2);
  if (keep) ev.scores.resize(n, 2);
  double lo_sum = 0.0, up_sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    LeeRecord r;
    r.s0 = s0(i, 0);
    r.s1 = s1(i, 0);
    r.p0 = p0(i, 0);
    r.y_lo = ylo(i, 0);
    r.y_hi = yhi(i, 0);
    r.prop1 = prop(i, 0);
    r.gamma_control = gc(i, 0);
    r.p01 = p01;
    double lo = 0.0, up = 0.0;
    try {
      if (config_.kind == SecondStageKind::LEE_ATE) {
        std::tie(lo, up) = lee_ate_moments(obs_[i], r);
      } else {
        const MomentValue ml = lee_lower_moment(obs_[i], r), mu = lee_upper_moment(obs_[i], r);
        lo = config_.naive ? ml.m : ml.g;
        up = config_.naive ? mu.m : mu.g;
      }
    } catch (const DegenerateError& e) {
      throw DegenerateError("observation " + std::to_string(i + 1) + ": " + e.what());
    }
    lo_sum += w(i) * lo;
    up_sum += w(i) * up;
    if (keep) {
      ev.scores(i, 0) = lo;
      ev.scores(i, 1) = up;
    }
  }
  ev.values(0) = lo_sum / static_cast<double>(n);
  ev.values(1) = up_sum / static_cast<double>(n);
  return ev;
}

}  // namespace setid
