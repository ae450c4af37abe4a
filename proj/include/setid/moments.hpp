#pragma once

#include <array>
#include <functional>
#include <string>
#include <utility>

#include "setid/dataset.hpp"
#include "setid/dgp.hpp"

namespace setid {

// Interval endpoint selected by the sign of z; ties go to the lower endpoint.
double q_generator(double y_lower, double y_upper, double z);

// g = m + correction.
struct MomentValue {
  double g = 0.0;
  double m = 0.0;
  double correction = 0.0;
  Model model = Model::PLP;
};

// PLP ----------------------------------------------------------------------

struct PlpRecord {
  VectorXd eta;          // E[D|X]
  double gamma_l = 0.0;  // E[Y_L|X]
  double gamma_ul = 0.0; // E[Y_U - Y_L|X]
};

// E[Y_p|X] under a residual distribution symmetric around zero.
inline double plp_gamma(const PlpRecord& r) { return r.gamma_l + 0.5 * r.gamma_ul; }

// z = p'(D - eta); g = z (Y_p - gamma); m = z Y_p.
MomentValue plp_moment(const Observation& obs, const VectorXd& p, const PlpRecord& r);

// APD ----------------------------------------------------------------------

struct ApdRecord {
  VectorXd eta;  // weighting variable, Lambda^{-1}(D - m(X)) in the Gaussian case
  double gamma_l = 0.0;
  double gamma_ul = 0.0;
  VectorXd dgamma_l;  // D-gradients of the reduced forms
  VectorXd dgamma_ul;
  // Smoothed density of the branch switch at z, K_b(z) q'Lambda^{-1}q; it is
  // the D-derivative of gamma_ul 1{z > 0} carried by the jump. Zero disables it.
  double jump_density = 0.0;
};

// z = q'eta; gamma_q = gamma_l + gamma_ul 1{z > 0};
// g = z Y_q - z gamma_q + q'd_D gamma_q; m = z Y_q.
MomentValue apd_moment(const Observation& obs, const VectorXd& q, const ApdRecord& r);

double gaussian_kernel(double z, double bandwidth);
// 1.06 sd(z) n^{-1/5}.
double silverman_bandwidth(const VectorXd& z);

// LEE ----------------------------------------------------------------------

struct LeeRecord {
  double s0 = 1.0;     // Pr(S=1|D=0,X)
  double s1 = 1.0;     // Pr(S=1|D=1,X)
  double p0 = 1.0;     // min(s0/s1, 1)
  double y_lo = 0.0;   // Q(p0|D=1,S=1,X)
  double y_hi = 0.0;   // Q(1-p0|D=1,S=1,X)
  double prop1 = 0.5;  // Pr(D=1|X)
  double gamma_control = 0.0;  // E[Y|S=1,D=0,X]
  double p01 = 1.0;    // sample frequency of (D=0, S=1)
};

// Throws DegenerateError when a denominator is below kProbabilityFloor.
MomentValue lee_upper_moment(const Observation& obs, const LeeRecord& r);
MomentValue lee_lower_moment(const Observation& obs, const LeeRecord& r);
// (theta_L, theta_U) contributions.
std::pair<double, double> lee_ate_moments(const Observation& obs, const LeeRecord& r);

// Orthogonality probe ------------------------------------------------------

enum class MomentKind { PLP, APD, LEE_UPPER, LEE_LOWER };

std::string to_string(MomentKind k);

struct Perturbation {
  // PLP: eta, gamma_l, gamma_ul. APD: eta, gamma_l, gamma_ul.
  // LEE: s0, s1, quantile.
  std::string component;
  // Bounded direction; APD gamma components may depend on d.
  std::function<double(const VectorXd& d, const VectorXd& x)> direction;
};

struct ProbeOptions {
  double h = 1e-3;
  bool naive = false;  // probe m instead of g
  VectorXd q;          // direction for PLP / APD (defaults to e_1)
};

struct ProbeResult {
  double derivative = 0.0;          // (F(h) - F(-h)) / 2h
  double second_order_residual = 0.0;  // max residual of a quadratic fit through F
  double se = 0.0;                  // sampling SE of the central difference
  double curvature = 0.0;           // third-order remainder bound kappa_3 h^2 / 6
  double bound = 0.0;               // 5 (se + curvature)
  std::array<double, 5> F{};        // at r = -2h, -h, 0, h, 2h
};

// Mean moment along xi_0 + r delta on a simulated dataset, with xi_0 the
// population nuisance of `truth`.
ProbeResult gateaux_probe(MomentKind kind, const Dataset& data, const Truth& truth, const Perturbation& pert,
                          const ProbeOptions& options);

}  // namespace setid
