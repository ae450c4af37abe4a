#pragma once

#include <optional>
#include <string>
#include <vector>

#include "setid/crossfit.hpp"
#include "setid/dataset.hpp"
#include "setid/moments.hpp"

namespace setid {

// Direction grids ------------------------------------------------------------

// d = 1: {+1, -1}. d = 2: m equally spaced angles starting at e_1. d >= 3:
// first m points of a Halton sequence pushed through the normal quantile and
// normalized.
std::vector<VectorXd> direction_grid(Index d, int m);

// Second stage ---------------------------------------------------------------

enum class SecondStageKind { SUPPORT_KNOWN_SIGMA, SUPPORT_UNKNOWN_SIGMA, APD_SUPPORT, LEE_BOUNDS, LEE_ATE };

std::string to_string(SecondStageKind k);

struct SecondStageConfig {
  SecondStageKind kind = SecondStageKind::SUPPORT_UNKNOWN_SIGMA;
  std::vector<VectorXd> grid;  // support kinds only
  MatrixXd sigma;              // SUPPORT_KNOWN_SIGMA
  bool naive = false;          // average m instead of g
  double lambda_min = 1e-4;
  double lambda_max = 1e4;
};

// Averages moments over observations with optional observation weights. All
// means are sum_i w_i x_i / n in index order, so unit weights reproduce the
// unweighted estimate bit for bit.
class SecondStage {
 public:
  SecondStage(const Dataset& data, const NuisanceProfile& profile, SecondStageConfig config);

  struct Evaluation {
    VectorXd values;     // per target: grid direction, or (lower, upper)
    MatrixXd scores;     // n x targets moment values (when requested)
    MatrixXd sigma;      // Sigma or Lambda used (support kinds)
    VectorXd p01;        // LEE: weighted Pr(D=0, S=1)
  };

  // `weights` are normalized to mean one by the caller; nullptr = unit.
  // Throws DegenerateError when the weighted Sigma / Lambda is singular or
  // leaves the projection set.
  Evaluation evaluate(const VectorXd* weights = nullptr, bool keep_scores = false) const;

  Index targets() const;
  Index n() const { return data_.n(); }
  const SecondStageConfig& config() const { return config_; }

 private:
  Evaluation support(const VectorXd& w, bool keep) const;
  Evaluation apd(const VectorXd& w, bool keep) const;
  Evaluation lee(const VectorXd& w, bool keep) const;

  const Dataset& data_;
  const NuisanceProfile& profile_;
  SecondStageConfig config_;
  std::vector<Observation> obs_;
  MatrixXd residuals_;         // D - eta (PLP) or D - m (APD)
  std::vector<double> apd_bandwidth_;  // per direction, from unweighted z
};

// Estimates ------------------------------------------------------------------

struct SupportFunctionEstimate {
  std::vector<VectorXd> grid;
  VectorXd values;
  std::optional<MatrixXd> sigma_hat;
  MatrixXd influence;  // n x grid
  Index n = 0;
  SecondStageConfig config;
};

enum class BoundsKind { PLP_1D, LEE_OUTCOME, LEE_ATE };

std::string to_string(BoundsKind k);

struct BoundsEstimate {
  double lower = 0.0;
  double upper = 0.0;
  BoundsKind kind = BoundsKind::PLP_1D;
  VectorXd influence_lower;
  VectorXd influence_upper;
  Index n = 0;
  SecondStageConfig config;
};

SupportFunctionEstimate support_known_sigma(const Dataset& data, const NuisanceProfile& profile,
                                            const MatrixXd& sigma, const std::vector<VectorXd>& grid,
                                            bool naive = false);
SupportFunctionEstimate support_unknown_sigma(const Dataset& data, const NuisanceProfile& profile,
                                              const std::vector<VectorXd>& grid, bool naive = false,
                                              double lambda_min = 1e-4, double lambda_max = 1e4);
BoundsEstimate plp_bounds_1d(const Dataset& data, const NuisanceProfile& profile, bool naive = false);
// {e_1, -e_1} in R^d.
std::vector<VectorXd> axis_grid(Index d);
// Bounds on the first coordinate from a support estimate on axis_grid(d):
// upper = sigma(e_1), lower = -sigma(-e_1).
BoundsEstimate coordinate_bounds(const SupportFunctionEstimate& estimate);
SupportFunctionEstimate apd_support(const Dataset& data, const NuisanceProfile& profile,
                                    const std::vector<VectorXd>& grid, bool naive = false);
BoundsEstimate lee_bounds(const Dataset& data, const NuisanceProfile& profile, bool naive = false);
BoundsEstimate lee_ate(const Dataset& data, const NuisanceProfile& profile);

// Sample support function of the plug-in set {Sigma^{-1} (1/n) sum V_i y_i :
// y_i in [y_L,i, y_U,i]} by the sign rule, given scores z_i = p'V_i.
double plugin_support_from_scores(const VectorXd& z, const VectorXd& y_lower, const VectorXd& y_upper);

// Analytic standard errors from influence contributions: sd(h) / sqrt(n).
VectorXd influence_se(const MatrixXd& influence);

}  // namespace setid
