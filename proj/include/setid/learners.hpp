#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "setid/dataset.hpp"

namespace setid {

enum class LearnerKind {
  LASSO,
  LOGISTIC_LASSO,
  EMPIRICAL_QUANTILE,
  ORACLE,
  // Training mean; used by hand-checkable cross-fitting fixtures.
  CONSTANT,
  // Lasso that also reproduces a share of each training row's own residual
  // when asked to predict at that exact row. Generalizes like the lasso but
  // overfits in-sample, the way deep trees do.
  MEMORIZING,
};

std::string to_string(LearnerKind k);
LearnerKind learner_kind_from_string(const std::string& name);

struct Penalty {
  enum class Kind { PLUGIN, FIXED, CV };
  Kind kind = Kind::PLUGIN;
  double lambda = 0.0;  // FIXED
  int folds = 5;        // CV
};

struct LearnerSpec {
  LearnerKind kind = LearnerKind::LASSO;
  Penalty penalty;
  std::vector<int> quantile_cells;  // 0-based covariate columns
  int max_iter = 10000;
  double tol = 1e-8;
  bool jitter = false;
  double jitter_sd = 0.01;
  std::uint64_t jitter_seed = 0;
  double memorize_share = 0.5;
};

void validate(const LearnerSpec& spec);

// Population nuisance supplied by a data-generating process.
struct OracleFunctions {
  std::function<double(const VectorXd& x)> value;
  // Gradient with respect to the leading `k` features (the D block for
  // reduced forms fitted on [D, X]).
  std::function<VectorXd(const VectorXd& x)> gradient;
  std::function<double(double u, const VectorXd& x)> quantile;
};

class FittedModel {
 public:
  LearnerKind kind = LearnerKind::LASSO;
  VectorXd coefficients;
  double intercept = 0.0;
  double lambda = 0.0;
  int iterations = 0;
  int training_fold = 0;
  // EMPIRICAL_QUANTILE: cell key -> sorted outcomes.
  std::map<std::string, std::vector<double>> cell_quantile_tables;
  std::vector<int> quantile_cells;
  // MEMORIZING: training rows and their base-model residuals.
  MatrixXd memorized_x;
  VectorXd memorized_residual;
  double memorize_share = 0.0;
  // ORACLE
  std::shared_ptr<const OracleFunctions> oracle;

  double predict(const VectorXd& x) const;
  VectorXd predict(const MatrixXd& X) const;
  // Gradient of the prediction with respect to the first `k` features.
  VectorXd gradient(const VectorXd& x, Index k) const;
  // Linearly interpolated empirical u-quantile of the cell containing x.
  double predict_quantile(double u, const VectorXd& x) const;
};

FittedModel fit_lasso(const MatrixXd& X, const VectorXd& y, const LearnerSpec& spec);
FittedModel fit_logistic_lasso(const MatrixXd& X, const VectorXd& y, const LearnerSpec& spec);
FittedModel fit_conditional_quantile(const MatrixXd& X, const VectorXd& y, const LearnerSpec& spec);
FittedModel fit_constant(const VectorXd& y);
FittedModel fit_memorizing(const MatrixXd& X, const VectorXd& y, const LearnerSpec& spec);
FittedModel oracle_learner(std::shared_ptr<const OracleFunctions> fn);

// Dispatches on spec.kind for the regression-type kinds (LASSO,
// LOGISTIC_LASSO, CONSTANT, MEMORIZING).
FittedModel fit_regression(const MatrixXd& X, const VectorXd& y, const LearnerSpec& spec);

// sigma_hat * sqrt(2 log(2 p n) / n), sigma_hat from a ridge fit.
double plugin_lambda(const MatrixXd& X, const VectorXd& y);
// Smallest lambda at which every slope is zero.
double lambda_max(const MatrixXd& X, const VectorXd& y);
// Largest soft-threshold KKT violation of a lasso solution.
double lasso_kkt_residual(const MatrixXd& X, const VectorXd& y, const FittedModel& fit);

// Linear interpolation between order statistics at position (m - 1) u.
double empirical_quantile(const std::vector<double>& sorted, double u);
std::string cell_key(const VectorXd& x, const std::vector<int>& cells);

inline constexpr double kProbabilityFloor = 1e-6;
double clamp_probability(double p);

}  // namespace setid
