#pragma once

#include <cstdint>
#include <utility>

#include "setid/dataset.hpp"

namespace setid {

// Synthetic designs with closed-form nuisances.
//
// PLP / APD: X ~ N(0, I_p); D_j = sum of `sparsity` coordinates of X starting
// at j (cyclically) + V_j with V ~ N(0, residual_sd^2 I_d); Y = D'beta0 +
// f0(X) + U with f0(X) = x_1 + ... + x_s and U ~ N(0, noise_sd^2);
// Y_L = Y - w/2, Y_U = Y + w/2.
//
// LEE: X has p independent Bernoulli(1/2) columns; D ~ Bernoulli(1/2);
// S_0 = 1{k(X) + e > 0}, S_1 = max(S_0, 1{k(X) + shift + e > 0}) with
// k(X) = 0.5 (x_1 + ... + x_s) - 0.25 s and e ~ N(0, residual_sd^2);
// Y_d = mu(X) + d beta0_1 + u, mu(X) = 2 + 0.5 (x_1 + ... + x_s),
// u ~ N(0, noise_sd^2); Y observed only when S = 1.
struct DgpSpec {
  Model model = Model::PLP;
  Index n = 1000;
  Index p = 10;
  Index sparsity = 2;
  VectorXd beta0 = VectorXd::Ones(1);
  double interval_width = 1.0;
  double noise_sd = 1.0;
  double residual_sd = 1.0;
  double selection_shift = 0.5;  // LEE only; 0 means no selection effect
  std::uint64_t seed = 0;
};

void validate(const DgpSpec& spec);

class Truth {
 public:
  explicit Truth(DgpSpec spec);

  const DgpSpec& spec() const { return spec_; }
  Model model() const { return spec_.model; }

  // PLP / APD ---------------------------------------------------------------
  // E[D | X = x]; eta_0 for PLP and m_0 for APD.
  VectorXd first_stage(const VectorXd& x) const;
  MatrixXd first_stage(const MatrixXd& X) const;
  double f0(const VectorXd& x) const;
  // E[Y_L | X] for PLP.
  double gamma_l(const VectorXd& x) const;
  // E[Y_L | D, X] for APD.
  double gamma_l(const VectorXd& d, const VectorXd& x) const;
  double gamma_ul() const { return spec_.interval_width; }
  VectorXd dgamma_l() const { return spec_.beta0; }
  MatrixXd residual_covariance() const;
  // APD weighting variable Lambda^{-1}(d - m_0(x)).
  VectorXd apd_eta(const VectorXd& d, const VectorXd& x) const;

  // Population support function q'beta0 + (w/2) E|q' Sigma^{-1} V|.
  double support(const VectorXd& q) const;
  // (beta_L, beta_U) for d = 1.
  std::pair<double, double> bounds_1d() const;

  // LEE ---------------------------------------------------------------------
  double s0(const VectorXd& x) const;
  double s1(const VectorXd& x) const;
  double p0(const VectorXd& x) const { return s0(x) / s1(x); }
  double propensity() const { return 0.5; }
  // Conditional u-quantile of Y given D = 1, S = 1, X = x.
  double quantile(double u, const VectorXd& x) const;
  // E[Y | S = 1, D = 0, X = x].
  double control_mean(const VectorXd& x) const;
  double treated_mean(const VectorXd& x) const;
  // Sharp bounds on E[Y_1 | always selected] and on the effect for the always
  // selected.
  std::pair<double, double> lee_bounds() const;
  std::pair<double, double> lee_effect_bounds() const;

 private:
  double selection_index(const VectorXd& x) const;
  DgpSpec spec_;
};

struct SimulatedData {
  Dataset data;
  Truth truth;
};

SimulatedData generate_plp(const DgpSpec& spec);
SimulatedData generate_apd(const DgpSpec& spec);
SimulatedData generate_lee(const DgpSpec& spec);
SimulatedData generate(const DgpSpec& spec);

}  // namespace setid
