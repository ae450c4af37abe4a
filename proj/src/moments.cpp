#include "setid/moments.hpp"

#include <cmath>
#include <stdexcept>

#include "setid/errors.hpp"
#include "setid/learners.hpp"

namespace setid {

double q_generator(double y_lower, double y_upper, double z) {
  if (y_lower > y_upper) throw std::invalid_argument("q_generator: y_lower exceeds y_upper");
  return z <= 0.0 ? y_lower : y_upper;
}

namespace {

std::pair<double, double> interval_of(const Observation& obs) {
  if (!obs.y_lower || !obs.y_upper) throw DataError("observation lacks y_lower / y_upper");
  return {*obs.y_lower, *obs.y_upper};
}

void require_probability(double v, const char* name) {
  if (!(v >= kProbabilityFloor)) throw DegenerateError(std::string(name) + " below the probability floor");
}

}  // namespace

MomentValue plp_moment(const Observation& obs, const VectorXd& p, const PlpRecord& r) {
  if (r.eta.size() != obs.d.size()) throw IncompleteProfileError("PLP record lacks eta");
  const auto [yl, yu] = interval_of(obs);
  const double z = p.dot(obs.d - r.eta);
  const double yp = q_generator(yl, yu, z);
  MomentValue out;
  out.model = Model::PLP;
  out.m = z * yp;
  out.correction = -z * plp_gamma(r);
  out.g = z * (yp - plp_gamma(r));
  return out;
}

MomentValue apd_moment(const Observation& obs, const VectorXd& q, const ApdRecord& r) {
  if (r.eta.size() != obs.d.size() || r.dgamma_l.size() != obs.d.size() || r.dgamma_ul.size() != obs.d.size())
    throw IncompleteProfileError("APD record is incomplete");
  const auto [yl, yu] = interval_of(obs);
  const double z = q.dot(r.eta);
  const bool upper = z > 0.0;
  const double yq = q_generator(yl, yu, z);
  const double gamma_q = r.gamma_l + (upper ? r.gamma_ul : 0.0);
  const double dgamma_q = q.dot(r.dgamma_l) + (upper ? q.dot(r.dgamma_ul) : 0.0) + r.gamma_ul * r.jump_density;
  MomentValue out;
  out.model = Model::APD;
  out.m = z * yq;
  out.g = z * yq - z * gamma_q + dgamma_q;
  out.correction = out.g - out.m;
  return out;
}

double gaussian_kernel(double z, double bandwidth) {
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  const double u = z / bandwidth;
  return kInvSqrt2Pi * std::exp(-0.5 * u * u) / bandwidth;
}

double silverman_bandwidth(const VectorXd& z) {
  const double n = static_cast<double>(z.size());
  if (n < 2) throw DegenerateError("bandwidth needs at least two observations");
  const double sd = std::sqrt((z.array() - z.mean()).square().sum() / (n - 1.0));
  if (!(sd > 0.0)) throw DegenerateError("projected residuals have zero spread");
  return 1.06 * sd * std::pow(n, -0.2);
}

namespace {

struct LeeTerms {
  double D, S, Y, P0, P1;
};

LeeTerms lee_terms(const Observation& obs, const LeeRecord& r) {
  if (!obs.s) throw DataError("LEE observation lacks s");
  require_probability(r.s0, "s(0,X)");
  require_probability(r.s1, "s(1,X)");
  require_probability(r.p01, "Pr(D=0,S=1)");
  require_probability(r.prop1, "Pr(D=1|X)");
  require_probability(1.0 - r.prop1, "Pr(D=0|X)");
  LeeTerms t;
  t.D = obs.d(0);
  t.S = static_cast<double>(*obs.s);
  t.Y = (t.S == 1.0 && obs.y) ? *obs.y : 0.0;
  t.P1 = r.prop1;
  t.P0 = 1.0 - r.prop1;
  return t;
}

}  // namespace

MomentValue lee_upper_moment(const Observation& obs, const LeeRecord& r) {
  const LeeTerms t = lee_terms(obs, r);
  const double w = t.P0 / (r.p01 * t.P1);
  const double ds = t.D * t.S;
  MomentValue out;
  out.model = Model::LEE;
  out.m = ds * t.Y * (t.Y >= r.y_hi ? 1.0 : 0.0) * w;
  const double a1 = r.y_hi * t.P0 / r.p01 * ((1.0 - t.D) * t.S / t.P0 - r.s0);
  const double a2 = -r.y_hi * r.s0 * t.P0 / (r.s1 * r.p01) * (ds / t.P1 - r.s1);
  const double a3 = r.y_hi * w * ds * ((t.Y <= r.y_hi ? 1.0 : 0.0) - 1.0 + r.p0);
  out.correction = a1 + a2 + a3;
  out.g = out.m + out.correction;
  return out;
}

MomentValue lee_lower_moment(const Observation& obs, const LeeRecord& r) {
  const LeeTerms t = lee_terms(obs, r);
  const double w = t.P0 / (r.p01 * t.P1);
  const double ds = t.D * t.S;
  MomentValue out;
  out.model = Model::LEE;
  out.m = ds * t.Y * (t.Y <= r.y_lo ? 1.0 : 0.0) * w;
  const double a4 = r.y_lo * t.P0 / r.p01 * ((1.0 - t.D) * t.S / t.P0 - r.s0);
  const double a5 = -r.y_lo * r.s0 * t.P0 / (r.s1 * r.p01) * (ds / t.P1 - r.s1);
  const double a6 = -r.y_lo * w * ds * ((t.Y <= r.y_lo ? 1.0 : 0.0) - r.p0);
  out.correction = a4 + a5 + a6;
  out.g = out.m + out.correction;
  return out;
}

std::pair<double, double> lee_ate_moments(const Observation& obs, const LeeRecord& r) {
  const LeeTerms t = lee_terms(obs, r);
  const double control = (1.0 - t.D) * t.S * t.Y / (t.P0 * r.s0);
  const double residual = (1.0 - t.D) * t.S / t.P0 - r.s0;
  const double theta_l = lee_lower_moment(obs, r).g - control - r.gamma_control * residual;
  const double theta_u = lee_upper_moment(obs, r).g - control - r.gamma_control / (r.s0 * r.s0) * residual;
  return {theta_l, theta_u};
}

std::string to_string(MomentKind k) {
  switch (k) {
    case MomentKind::PLP: return "PLP";
    case MomentKind::APD: return "APD";
    case MomentKind::LEE_UPPER: return "LEE_UPPER";
    case MomentKind::LEE_LOWER: return "LEE_LOWER";
  }
  return "?";
}

}  // namespace setid
