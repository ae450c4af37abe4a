#pragma once

#include <functional>
#include <optional>
#include <utility>

#include "setid/dataset.hpp"
#include "setid/dgp.hpp"

namespace setid::oracle {

struct PopulationTruth {
  Model model = Model::PLP;
  std::function<double(const VectorXd& q)> sigma_q;
  std::optional<std::pair<double, double>> beta_interval;  // d = 1
  DgpSpec spec;
};

// Closed form for the Gaussian PLP design:
// sigma(q) = q'beta0 + (c/2) sqrt(2/pi) sqrt(q' Sigma^{-1} q), Sigma = sd_v^2 I.
PopulationTruth analytic_plp_truth(const DgpSpec& spec);

struct BruteForceResult {
  double exhaustive = 0.0;  // max over all 2^n endpoint selections
  double sign_rule = 0.0;   // endpoint chosen by the sign of z_i
};

inline constexpr Index kExhaustiveCap = 18;

// z_i = q' Sigma^{-1} (d_i - eta_i); both values are (1/n) sum_i z_i y_i
// summed in index order.
BruteForceResult brute_force_sample_support(const Dataset& data, const VectorXd& q, const MatrixXd& eta,
                                             const MatrixXd& sigma);
BruteForceResult brute_force_from_scores(const VectorXd& z, const VectorXd& y_lower, const VectorXd& y_upper);

// Orthogonal PLP estimator at the population nuisances, known Sigma.
double oracle_plugin_estimator(const Dataset& data, const VectorXd& q, const Truth& truth, const MatrixXd& sigma);
// Mean correction term -z (gamma_L + gamma_{U-L} / 2) at the population nuisances.
double oracle_mean_correction(const Dataset& data, const VectorXd& q, const Truth& truth, const MatrixXd& sigma);

// Orthogonal Lee bounds (lower, upper) at the population nuisances.
std::pair<double, double> oracle_lee_bounds(const Dataset& data, const Truth& truth);

}  // namespace setid::oracle
