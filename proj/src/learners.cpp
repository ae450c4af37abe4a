#include "setid/learners.hpp"

#include <algorithm>
#include <boost/random/normal_distribution.hpp>
#include <cmath>
#include <sstream>

#include "setid/errors.hpp"
#include "setid/rng.hpp"

namespace setid {

std::string to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::LASSO: return "LASSO";
    case LearnerKind::LOGISTIC_LASSO: return "LOGISTIC_LASSO";
    case LearnerKind::EMPIRICAL_QUANTILE: return "EMPIRICAL_QUANTILE";
    case LearnerKind::ORACLE: return "ORACLE";
    case LearnerKind::CONSTANT: return "CONSTANT";
    case LearnerKind::MEMORIZING: return "MEMORIZING";
  }
  return "?";
}

LearnerKind learner_kind_from_string(const std::string& name) {
  for (auto k : {LearnerKind::LASSO, LearnerKind::LOGISTIC_LASSO, LearnerKind::EMPIRICAL_QUANTILE,
                 LearnerKind::ORACLE, LearnerKind::CONSTANT, LearnerKind::MEMORIZING})
    if (to_string(k) == name) return k;
  throw DataError("unknown learner kind '" + name + "'");
}

void validate(const LearnerSpec& spec) {
  if (!(spec.tol > 0.0)) throw DataError("learner tol must be positive");
  if (spec.max_iter < 1) throw DataError("learner max_iter must be positive");
  if (spec.penalty.kind == Penalty::Kind::FIXED && !(spec.penalty.lambda >= 0.0))
    throw DataError("FIXED penalty needs lambda >= 0");
  if (spec.penalty.kind == Penalty::Kind::CV && spec.penalty.folds < 2)
    throw DataError("CV penalty needs at least 2 folds");
  if (spec.jitter && !(spec.jitter_sd > 0.0)) throw DataError("jitter_sd must be positive");
  if (!(spec.memorize_share >= 0.0 && spec.memorize_share < 1.0))
    throw DataError("memorize_share must lie in [0, 1)");
}

double clamp_probability(double p) { return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor); }

namespace {

void require_finite(const MatrixXd& X, const VectorXd& y) {
  if (X.rows() != y.size()) throw std::invalid_argument("X and y have different lengths");
  if (X.rows() < 2) throw std::invalid_argument("need at least two observations");
  if (!X.allFinite() || !y.allFinite()) throw std::invalid_argument("non-finite learner input");
}

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

double sigmoid(double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

// Weighted lasso on centered data by cyclic coordinate descent:
// min (1/2n) sum w_i (r_i)^2 + lambda |beta|_1 with an unpenalized intercept
// absorbed by weighted centering. Returns the number of sweeps, or -1 if
// max_iter was exhausted.
struct CdProblem {
  const MatrixXd& X;
  const VectorXd& y;
  const VectorXd* w;  // nullptr = unit weights
  double lambda;
};

struct CdResult {
  VectorXd beta;
  double intercept = 0.0;
  int sweeps = 0;
  bool converged = false;
};

CdResult coordinate_descent(const CdProblem& prob, const VectorXd& beta_start, int max_iter, double tol) {
  const Index n = prob.X.rows(), p = prob.X.cols();
  VectorXd w = prob.w ? *prob.w : VectorXd::Ones(n);
  const double wsum = w.sum();
  const VectorXd xbar = (prob.X.transpose() * w) / wsum;
  const double ybar = w.dot(prob.y) / wsum;
  MatrixXd Xc = prob.X.rowwise() - xbar.transpose();
  VectorXd col_sq(p);
  for (Index j = 0; j < p; ++j) col_sq(j) = w.dot(Xc.col(j).cwiseAbs2()) / static_cast<double>(n);

  CdResult res;
  res.beta = beta_start;
  VectorXd r = (prob.y.array() - ybar).matrix() - Xc * res.beta;
  VectorXd wr(n);
  for (res.sweeps = 1; res.sweeps <= max_iter; ++res.sweeps) {
    double max_step = 0.0;
    for (Index j = 0; j < p; ++j) {
      if (col_sq(j) <= 0.0) {
        res.beta(j) = 0.0;
        continue;
      }
      const double old = res.beta(j);
      const double grad = (Xc.col(j).cwiseProduct(w)).dot(r) / static_cast<double>(n);
      const double updated = soft_threshold(grad + col_sq(j) * old, prob.lambda) / col_sq(j);
      if (updated != old) {
        r.noalias() -= (updated - old) * Xc.col(j);
        res.beta(j) = updated;
        max_step = std::max(max_step, std::abs(updated - old) * col_sq(j));
      }
    }
    if (max_step > tol) continue;
    // Full KKT check on the current residual.
    wr = r.cwiseProduct(w);
    const VectorXd g = Xc.transpose() * wr / static_cast<double>(n);
    double kkt = 0.0;
    for (Index j = 0; j < p; ++j) {
      if (col_sq(j) <= 0.0) continue;
      const double v = res.beta(j) != 0.0 ? std::abs(g(j) - prob.lambda * (res.beta(j) > 0 ? 1.0 : -1.0))
                                          : std::max(0.0, std::abs(g(j)) - prob.lambda);
      kkt = std::max(kkt, v);
    }
    if (kkt <= tol) {
      res.converged = true;
      break;
    }
  }
  res.intercept = ybar - xbar.dot(res.beta);
  return res;
}

double ridge_sigma(const MatrixXd& X, const VectorXd& y) {
  const Index n = X.rows(), p = X.cols();
  const VectorXd xbar = X.colwise().mean();
  const MatrixXd Xc = X.rowwise() - xbar.transpose();
  const VectorXd yc = (y.array() - y.mean()).matrix();
  const double scale = Xc.cwiseAbs2().sum() / static_cast<double>(n * std::max<Index>(p, 1));
  const double kappa = 0.1 * std::max(scale, 1e-12) * static_cast<double>(n);
  VectorXd fitted;
  double df = 0.0;
  if (p <= n) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Xc.transpose() * Xc);
    const VectorXd e = es.eigenvalues().cwiseMax(0.0);
    const VectorXd proj = es.eigenvectors().transpose() * (Xc.transpose() * yc);
    const VectorXd coef = es.eigenvectors() * (proj.array() / (e.array() + kappa)).matrix();
    fitted = Xc * coef;
    df = (e.array() / (e.array() + kappa)).sum();
  } else {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Xc * Xc.transpose());
    const VectorXd e = es.eigenvalues().cwiseMax(0.0);
    const VectorXd proj = es.eigenvectors().transpose() * yc;
    fitted = es.eigenvectors() * ((e.array() / (e.array() + kappa)) * proj.array()).matrix();
    df = (e.array() / (e.array() + kappa)).sum();
  }
  const double rss = (yc - fitted).squaredNorm();
  const double dof = static_cast<double>(n) - 1.0 - df;
  return std::sqrt(rss / std::max(dof, 1.0));
}

double choose_lambda(const MatrixXd& X, const VectorXd& y, const LearnerSpec& spec);

}  // namespace

double lambda_max(const MatrixXd& X, const VectorXd& y) {
  const VectorXd xbar = X.colwise().mean();
  const VectorXd yc = (y.array() - y.mean()).matrix();
  const VectorXd g = (X.rowwise() - xbar.transpose()).transpose() * yc / static_cast<double>(X.rows());
  return g.cwiseAbs().maxCoeff();
}

double plugin_lambda(const MatrixXd& X, const VectorXd& y) {
  const double n = static_cast<double>(X.rows());
  const double p = static_cast<double>(X.cols());
  return ridge_sigma(X, y) * std::sqrt(2.0 * std::log(2.0 * p * n) / n);
}

double lasso_kkt_residual(const MatrixXd& X, const VectorXd& y, const FittedModel& fit) {
  const double n = static_cast<double>(X.rows());
  const VectorXd r = y - (X * fit.coefficients).array().matrix() - VectorXd::Constant(X.rows(), fit.intercept);
  const VectorXd g = X.transpose() * r / n;
  double kkt = std::abs(r.mean());
  for (Index j = 0; j < X.cols(); ++j) {
    const double b = fit.coefficients(j);
    kkt = std::max(kkt, b != 0.0 ? std::abs(g(j) - fit.lambda * (b > 0 ? 1.0 : -1.0))
                                 : std::max(0.0, std::abs(g(j)) - fit.lambda));
  }
  return kkt;
}

namespace {

double choose_lambda(const MatrixXd& X, const VectorXd& y, const LearnerSpec& spec) {
  switch (spec.penalty.kind) {
    case Penalty::Kind::FIXED: return spec.penalty.lambda;
    case Penalty::Kind::PLUGIN: return plugin_lambda(X, y);
    case Penalty::Kind::CV: break;
  }
  // K-fold cross-validation over a log-spaced path below lambda_max.
  const double top = std::max(lambda_max(X, y), 1e-12);
  const int grid = 30;
  const auto folds = kfold_partition(X.rows(), spec.penalty.folds, 0x5eedULL);
  std::vector<double> lambdas(grid), mse(grid, 0.0);
  for (int g = 0; g < grid; ++g) lambdas[g] = top * std::pow(1e-3, static_cast<double>(g) / (grid - 1));
  for (int k = 1; k <= folds.K; ++k) {
    const auto train = folds.complement(k), test = folds.members(k);
    MatrixXd Xt(train.size(), X.cols()), Xv(test.size(), X.cols());
    VectorXd yt(train.size()), yv(test.size());
    for (std::size_t i = 0; i < train.size(); ++i) { Xt.row(i) = X.row(train[i]); yt(i) = y(train[i]); }
    for (std::size_t i = 0; i < test.size(); ++i) { Xv.row(i) = X.row(test[i]); yv(i) = y(test[i]); }
    VectorXd beta = VectorXd::Zero(X.cols());
    for (int g = 0; g < grid; ++g) {
      auto res = coordinate_descent({Xt, yt, nullptr, lambdas[g]}, beta, spec.max_iter, spec.tol);
      beta = res.beta;
      const VectorXd pred = (Xv * res.beta).array() + res.intercept;
      mse[g] += (yv - pred).squaredNorm();
    }
  }
  return lambdas[std::min_element(mse.begin(), mse.end()) - mse.begin()];
}

}  // namespace

FittedModel fit_lasso(const MatrixXd& X, const VectorXd& y, const LearnerSpec& spec) {
  require_finite(X, y);
  validate(spec);
  FittedModel fit;
  fit.kind = LearnerKind::LASSO;
  fit.lambda = choose_lambda(X, y, spec);
  auto res = coordinate_descent({X, y, nullptr, fit.lambda}, VectorXd::Zero(X.cols()), spec.max_iter, spec.tol);
  if (!res.converged) throw ConvergenceError("lasso did not converge", spec.max_iter);
  fit.coefficients = res.beta;
  fit.intercept = res.intercept;
  fit.iterations = res.sweeps;
  return fit;
}

FittedModel fit_logistic_lasso(const MatrixXd& X, const VectorXd& y, const LearnerSpec& spec) {
  require_finite(X, y);
  validate(spec);
  const Index n = X.rows(), p = X.cols();
  double ones = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw std::invalid_argument("logistic lasso needs 0/1 outcomes");
    ones += y(i);
  }
  if (ones == 0.0 || ones == static_cast<double>(n))
    throw std::invalid_argument("logistic lasso needs both classes present");
  const double ybar = ones / static_cast<double>(n);

  FittedModel fit;
  fit.kind = LearnerKind::LOGISTIC_LASSO;
  switch (spec.penalty.kind) {
    case Penalty::Kind::FIXED: fit.lambda = spec.penalty.lambda; break;
    case Penalty::Kind::PLUGIN:
    case Penalty::Kind::CV:
      fit.lambda = std::sqrt(ybar * (1.0 - ybar)) *
                   std::sqrt(2.0 * std::log(2.0 * static_cast<double>(p) * n) / static_cast<double>(n));
      break;
  }

  auto objective = [&](double b0, const VectorXd& b) {
    const VectorXd eta = (X * b).array() + b0;
    double nll = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double t = eta(i);
      // log(1 + exp(t)) - y t, evaluated stably.
      nll += (t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t))) - y(i) * t;
    }
    return nll / static_cast<double>(n) + fit.lambda * b.lpNorm<1>();
  };

  // Proximal Newton: quadratic approximation solved by weighted coordinate
  // descent, with step halving when the objective does not decrease.
  double b0 = std::log(ybar / (1.0 - ybar));
  VectorXd beta = VectorXd::Zero(p);
  double f = objective(b0, beta);
  bool converged = false;
  int iter = 0;
  for (iter = 1; iter <= spec.max_iter; ++iter) {
    const VectorXd eta = (X * beta).array() + b0;
    VectorXd w(n), z(n);
    for (Index i = 0; i < n; ++i) {
      const double mu = sigmoid(eta(i));
      w(i) = std::max(mu * (1.0 - mu), 1e-10);
      z(i) = eta(i) + (y(i) - mu) / w(i);
    }
    auto inner = coordinate_descent({X, z, &w, fit.lambda}, beta, spec.max_iter, spec.tol * 0.1);
    double step = 1.0, b0_new = inner.intercept, f_new = 0.0;
    VectorXd beta_new = inner.beta;
    for (int h = 0; h < 30; ++h) {
      b0_new = b0 + step * (inner.intercept - b0);
      beta_new = beta + step * (inner.beta - beta);
      f_new = objective(b0_new, beta_new);
      if (f_new <= f + 1e-15 * std::abs(f)) break;
      step *= 0.5;
    }
    const double change = std::max(std::abs(b0_new - b0), (beta_new - beta).cwiseAbs().maxCoeff());
    b0 = b0_new;
    beta = beta_new;
    const double decrease = f - f_new;
    f = f_new;
    if (change <= spec.tol || decrease <= spec.tol * spec.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) throw ConvergenceError("logistic lasso did not converge", spec.max_iter);
  fit.coefficients = beta;
  fit.intercept = b0;
  fit.iterations = iter;
  return fit;
}

std::string cell_key(const VectorXd& x, const std::vector<int>& cells) {
  std::ostringstream key;
  key.precision(17);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (c) key << '|';
    key << "x_" << cells[c] + 1 << '=' << x(cells[c]);
  }
  return key.str();
}

double empirical_quantile(const std::vector<double>& sorted, double u) {
  if (sorted.empty()) throw std::invalid_argument("empirical_quantile of an empty sample");
  if (!(u >= 0.0 && u <= 1.0)) throw std::invalid_argument("quantile level must lie in [0, 1]");
  const double pos = static_cast<double>(sorted.size() - 1) * u;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

FittedModel fit_conditional_quantile(const MatrixXd& X, const VectorXd& y, const LearnerSpec& spec) {
  require_finite(X, y);
  validate(spec);
  for (int c : spec.quantile_cells)
    if (c < 0 || c >= X.cols()) throw std::invalid_argument("quantile cell column out of range");
  FittedModel fit;
  fit.kind = LearnerKind::EMPIRICAL_QUANTILE;
  fit.quantile_cells = spec.quantile_cells;
  auto eng = make_engine(spec.jitter_seed, Stream::Jitter);
  boost::random::normal_distribution<double> noise(0.0, spec.jitter_sd);
  for (Index i = 0; i < X.rows(); ++i) {
    const double v = spec.jitter ? y(i) + noise(eng) : y(i);
    fit.cell_quantile_tables[cell_key(X.row(i).transpose(), spec.quantile_cells)].push_back(v);
  }
  for (auto& [key, values] : fit.cell_quantile_tables) std::sort(values.begin(), values.end());
  return fit;
}

FittedModel fit_constant(const VectorXd& y) {
  if (y.size() < 1 || !y.allFinite()) throw std::invalid_argument("constant learner needs finite data");
  FittedModel fit;
  fit.kind = LearnerKind::CONSTANT;
  fit.intercept = y.mean();
  return fit;
}

FittedModel fit_memorizing(const MatrixXd& X, const VectorXd& y, const LearnerSpec& spec) {
  LearnerSpec base = spec;
  base.kind = LearnerKind::LASSO;
  FittedModel fit = fit_lasso(X, y, base);
  fit.kind = LearnerKind::MEMORIZING;
  fit.memorize_share = spec.memorize_share;
  fit.memorized_x = X;
  fit.memorized_residual = y - ((X * fit.coefficients).array() + fit.intercept).matrix();
  return fit;
}

FittedModel oracle_learner(std::shared_ptr<const OracleFunctions> fn) {
  if (!fn) throw UnsupportedError("oracle learner needs population nuisance functions");
  FittedModel fit;
  fit.kind = LearnerKind::ORACLE;
  fit.oracle = std::move(fn);
  return fit;
}

FittedModel fit_regression(const MatrixXd& X, const VectorXd& y, const LearnerSpec& spec) {
  switch (spec.kind) {
    case LearnerKind::LASSO: return fit_lasso(X, y, spec);
    case LearnerKind::LOGISTIC_LASSO: return fit_logistic_lasso(X, y, spec);
    case LearnerKind::CONSTANT: return fit_constant(y);
    case LearnerKind::MEMORIZING: return fit_memorizing(X, y, spec);
    case LearnerKind::EMPIRICAL_QUANTILE:
    case LearnerKind::ORACLE: break;
  }
  throw std::invalid_argument("fit_regression does not handle learner kind " + to_string(spec.kind));
}

// ---------------------------------------------------------------------------

double FittedModel::predict(const VectorXd& x) const {
  switch (kind) {
    case LearnerKind::LASSO: return intercept + coefficients.dot(x);
    case LearnerKind::LOGISTIC_LASSO: return clamp_probability(sigmoid(intercept + coefficients.dot(x)));
    case LearnerKind::CONSTANT: return intercept;
    case LearnerKind::MEMORIZING: {
      double out = intercept + coefficients.dot(x);
      for (Index j = 0; j < memorized_x.rows(); ++j) {
        if ((memorized_x.row(j).transpose().array() == x.array()).all()) {
          out += memorize_share * memorized_residual(j);
          break;
        }
      }
      return out;
    }
    case LearnerKind::ORACLE: return oracle->value(x);
    case LearnerKind::EMPIRICAL_QUANTILE: break;
  }
  throw std::logic_error("predict(x) is undefined for quantile learners; use predict_quantile");
}

VectorXd FittedModel::predict(const MatrixXd& X) const {
  VectorXd out(X.rows());
  for (Index i = 0; i < X.rows(); ++i) out(i) = predict(VectorXd(X.row(i).transpose()));
  return out;
}

VectorXd FittedModel::gradient(const VectorXd& x, Index k) const {
  switch (kind) {
    case LearnerKind::LASSO:
    case LearnerKind::MEMORIZING: return coefficients.head(k);
    case LearnerKind::LOGISTIC_LASSO: {
      const double mu = sigmoid(intercept + coefficients.dot(x));
      return mu * (1.0 - mu) * coefficients.head(k);
    }
    case LearnerKind::CONSTANT: return VectorXd::Zero(k);
    case LearnerKind::ORACLE:
      if (!oracle->gradient) throw UnsupportedError("oracle nuisance has no gradient");
      return oracle->gradient(x);
    case LearnerKind::EMPIRICAL_QUANTILE: break;
  }
  throw std::logic_error("gradient is undefined for quantile learners");
}

double FittedModel::predict_quantile(double u, const VectorXd& x) const {
  if (kind == LearnerKind::ORACLE) {
    if (!oracle->quantile) throw UnsupportedError("oracle nuisance has no quantile function");
    return oracle->quantile(u, x);
  }
  if (kind != LearnerKind::EMPIRICAL_QUANTILE) throw std::logic_error("model is not a quantile learner");
  const auto key = cell_key(x, quantile_cells);
  auto it = cell_quantile_tables.find(key);
  if (it == cell_quantile_tables.end() || it->second.empty()) throw MissingCellError(key);
  return empirical_quantile(it->second, u);
}

}  // namespace setid
