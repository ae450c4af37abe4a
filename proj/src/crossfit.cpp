#include "setid/crossfit.hpp"

#include <tbb/parallel_for.h>

#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>

#include "setid/errors.hpp"
#include "setid/rng.hpp"

namespace setid {

LearnerSet LearnerSet::defaults(Model model) {
  LearnerSet s;
  s.selection.kind = LearnerKind::LOGISTIC_LASSO;
  s.quantile.kind = LearnerKind::EMPIRICAL_QUANTILE;
  s.control.kind = LearnerKind::LASSO;
  if (model == Model::LEE) s.eta.kind = LearnerKind::LOGISTIC_LASSO;
  return s;
}

LearnerSet LearnerSet::oracle() {
  LearnerSet s;
  for (auto* spec : {&s.eta, &s.gamma_l, &s.gamma_ul, &s.selection, &s.quantile, &s.control})
    spec->kind = LearnerKind::ORACLE;
  return s;
}

const MatrixXd& NuisanceProfile::at(const std::string& name) const {
  auto it = values.find(name);
  if (it == values.end())
    throw IncompleteProfileError("nuisance profile has no component '" + name + "' for model " +
                                 to_string(model));
  return it->second;
}

VectorXd NuisanceProfile::column(const std::string& name, Index j) const { return at(name).col(j); }

VectorXd NuisanceProfile::record(Index i) const {
  Index width = 0;
  for (const auto& [name, m] : values) width += m.cols();
  VectorXd out(width);
  Index pos = 0;
  for (const auto& [name, m] : values) {
    out.segment(pos, m.cols()) = m.row(i).transpose();
    pos += m.cols();
  }
  return out;
}

std::vector<std::string> required_components(Model model) {
  switch (model) {
    case Model::PLP: return {"eta", "gamma_l", "gamma_ul"};
    case Model::APD: return {"m", "gamma_l", "gamma_ul", "dgamma_l", "dgamma_ul"};
    case Model::LEE: return {"s0", "s1", "p0", "y_lo", "y_hi", "prop1", "gamma_control"};
  }
  return {};
}

namespace {

using Oracle = std::shared_ptr<const OracleFunctions>;

// Population nuisances of the generating process, one per role.
struct OracleSet {
  std::vector<Oracle> eta;
  Oracle gamma_l, gamma_ul, s0, s1, quantile, control, propensity;
};

OracleSet make_oracles(const std::shared_ptr<const Truth>& truth) {
  OracleSet o;
  if (!truth) return o;
  const Truth& t = *truth;
  const Index d = t.spec().beta0.size();
  const Index p = t.spec().p;
  auto make = [](OracleFunctions f) { return std::make_shared<const OracleFunctions>(std::move(f)); };
  for (Index j = 0; j < d; ++j)
    o.eta.push_back(make({[truth, j](const VectorXd& x) { return truth->first_stage(x)(j); }, {}, {}}));
  switch (t.model()) {
    case Model::PLP:
      o.gamma_l = make({[truth](const VectorXd& x) { return truth->gamma_l(x); }, {}, {}});
      o.gamma_ul = make({[truth](const VectorXd&) { return truth->gamma_ul(); }, {}, {}});
      break;
    case Model::APD:
      o.gamma_l = make({[truth, d, p](const VectorXd& z) {
                          return truth->gamma_l(VectorXd(z.head(d)), VectorXd(z.tail(p)));
                        },
                        [truth](const VectorXd&) { return truth->dgamma_l(); }, {}});
      o.gamma_ul = make({[truth](const VectorXd&) { return truth->gamma_ul(); },
                         [d](const VectorXd&) { return VectorXd(VectorXd::Zero(d)); }, {}});
      break;
    case Model::LEE:
      o.s0 = make({[truth](const VectorXd& x) { return truth->s0(x); }, {}, {}});
      o.s1 = make({[truth](const VectorXd& x) { return truth->s1(x); }, {}, {}});
      o.quantile = make({{}, {}, [truth](double u, const VectorXd& x) { return truth->quantile(u, x); }});
      o.control = make({[truth](const VectorXd& x) { return truth->control_mean(x); }, {}, {}});
      o.propensity = make({[truth](const VectorXd&) { return truth->propensity(); }, {}, {}});
      break;
  }
  return o;
}

MatrixXd take_rows(const MatrixXd& M, const std::vector<Index>& idx) {
  MatrixXd out(static_cast<Index>(idx.size()), M.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Index>(r)) = M.row(idx[r]);
  return out;
}

VectorXd take(const VectorXd& v, const std::vector<Index>& idx) {
  VectorXd out(static_cast<Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) out(static_cast<Index>(r)) = v(idx[r]);
  return out;
}

std::vector<Index> filter(const std::vector<Index>& idx, const std::function<bool(Index)>& keep) {
  std::vector<Index> out;
  for (Index i : idx)
    if (keep(i)) out.push_back(i);
  return out;
}

FittedModel fit_role(const MatrixXd& X, const VectorXd& y, const LearnerSpec& spec, const Oracle& oracle) {
  if (spec.kind == LearnerKind::ORACLE) return oracle_learner(oracle);
  return fit_regression(X, y, spec);
}

MatrixXd design_dx(const Dataset& data) {
  MatrixXd Z(data.n(), data.dim_d() + data.dim_p());
  Z << data.D, data.X;
  return Z;
}

struct FoldJob {
  const Dataset& data;
  Model model;
  const LearnerSet& learners;
  const OracleSet& oracles;
  std::uint64_t seed;
  int fold;
  const std::vector<Index>& train;
  const std::vector<Index>& test;
};

void fit_fold(const FoldJob& job, std::map<std::string, MatrixXd>& out, std::map<std::string, int>& counts) {
  const Dataset& data = job.data;
  const LearnerSet& L = job.learners;
  const Index d = data.dim_d();
  const MatrixXd Xtr = take_rows(data.X, job.train);

  auto fit_eta = [&](const std::string& name) {
    for (Index j = 0; j < d; ++j) {
      const Oracle o = j < static_cast<Index>(job.oracles.eta.size()) ? job.oracles.eta[j] : nullptr;
      const FittedModel f = fit_role(Xtr, take(data.D.col(j), job.train), L.eta, o);
      ++counts[name];
      for (Index i : job.test) out[name](i, j) = f.predict(VectorXd(data.X.row(i).transpose()));
    }
  };

  if (job.model == Model::PLP) {
    fit_eta("eta");
    const VectorXd yl = take(*data.YL, job.train);
    const VectorXd width = take(*data.YU - *data.YL, job.train);
    const FittedModel fl = fit_role(Xtr, yl, L.gamma_l, job.oracles.gamma_l);
    const FittedModel fw = fit_role(Xtr, width, L.gamma_ul, job.oracles.gamma_ul);
    ++counts["gamma_l"];
    ++counts["gamma_ul"];
    for (Index i : job.test) {
      const VectorXd x = data.X.row(i).transpose();
      out["gamma_l"](i, 0) = fl.predict(x);
      out["gamma_ul"](i, 0) = fw.predict(x);
    }
    return;
  }

  if (job.model == Model::APD) {
    fit_eta("m");
    const MatrixXd Z = design_dx(data);
    const MatrixXd Ztr = take_rows(Z, job.train);
    const FittedModel fl = fit_role(Ztr, take(*data.YL, job.train), L.gamma_l, job.oracles.gamma_l);
    const FittedModel fw = fit_role(Ztr, take(*data.YU - *data.YL, job.train), L.gamma_ul, job.oracles.gamma_ul);
    ++counts["gamma_l"];
    ++counts["gamma_ul"];
    for (Index i : job.test) {
      const VectorXd z = Z.row(i).transpose();
      out["gamma_l"](i, 0) = fl.predict(z);
      out["gamma_ul"](i, 0) = fw.predict(z);
      out["dgamma_l"].row(i) = fl.gradient(z, d).transpose();
      out["dgamma_ul"].row(i) = fw.gradient(z, d).transpose();
    }
    return;
  }

  // LEE
  const VectorXd& S = *data.S;
  const VectorXd& Y = *data.Y;
  const VectorXd D = data.D.col(0);
  auto fit_arm_selection = [&](double arm, const Oracle& o) {
    const auto rows = filter(job.train, [&](Index i) { return D(i) == arm; });
    return fit_role(take_rows(data.X, rows), take(S, rows), L.selection, o);
  };
  const FittedModel f0 = fit_arm_selection(0.0, job.oracles.s0);
  const FittedModel f1 = fit_arm_selection(1.0, job.oracles.s1);
  ++counts["s0"];
  ++counts["s1"];

  FittedModel fq;
  if (L.quantile.kind == LearnerKind::ORACLE) {
    fq = oracle_learner(job.oracles.quantile);
  } else {
    const auto rows = filter(job.train, [&](Index i) { return D(i) == 1.0 && S(i) == 1.0; });
    LearnerSpec qs = L.quantile;
    qs.jitter_seed = derive_seed(L.quantile.jitter_seed ^ job.seed, Stream::Jitter, job.fold);
    fq = fit_conditional_quantile(take_rows(data.X, rows), take(Y, rows), qs);
  }
  ++counts["quantile"];

  const auto control_rows = filter(job.train, [&](Index i) { return D(i) == 0.0 && S(i) == 1.0; });
  const FittedModel fc =
      fit_role(take_rows(data.X, control_rows), take(Y, control_rows), L.control, job.oracles.control);
  ++counts["gamma_control"];

  std::optional<FittedModel> fp;
  if (L.propensity) {
    fp = fit_role(Xtr, take(D, job.train), *L.propensity, job.oracles.propensity);
    ++counts["prop1"];
  }

  for (Index i : job.test) {
    const VectorXd x = data.X.row(i).transpose();
    const double s0 = clamp_probability(f0.predict(x));
    const double s1 = clamp_probability(f1.predict(x));
    const double p0 = std::min(s0 / s1, 1.0);
    out["s0"](i, 0) = s0;
    out["s1"](i, 0) = s1;
    out["p0"](i, 0) = p0;
    out["y_lo"](i, 0) = fq.predict_quantile(std::clamp(p0, kQuantileFloor, 1.0 - kQuantileFloor), x);
    out["y_hi"](i, 0) = fq.predict_quantile(std::clamp(1.0 - p0, kQuantileFloor, 1.0 - kQuantileFloor), x);
    out["prop1"](i, 0) = fp ? clamp_probability(fp->predict(x)) : L.known_propensity;
    out["gamma_control"](i, 0) = fc.predict(x);
  }
}

// Rethrows the active exception with the fold id prefixed, keeping its type.
[[noreturn]] void rethrow_with_fold(int fold) {
  const std::string tag = "fold " + std::to_string(fold) + ": ";
  try {
    throw;
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(tag + e.what(), e.iterations());
  } catch (const MissingCellError&) {
    throw;
  } catch (const DataError& e) {
    throw DataError(tag + e.what());
  } catch (const DegenerateError& e) {
    throw DegenerateError(tag + e.what());
  } catch (const UnsupportedError& e) {
    throw UnsupportedError(tag + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(tag + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(tag + e.what());
  }
}

void check_model_data(const Dataset& data, Model model, const LearnerSet& learners) {
  validate_for(data, model);
  if (model == Model::LEE && !(learners.known_propensity > 0.0 && learners.known_propensity < 1.0))
    throw DataError("known propensity must lie in (0, 1)");
}

}  // namespace

NuisanceProfile crossfit(const Dataset& data, Model model, const LearnerSet& learners,
                         const CrossfitOptions& options) {
  FoldPartition folds;
  if (options.no_split) {
    folds.K = 1;
    folds.seed = options.seed;
    folds.assignments.assign(data.n(), 1);
  } else {
    folds = kfold_partition(data.n(), options.K, options.seed);
  }
  return crossfit(data, model, learners, folds, options);
}

NuisanceProfile crossfit(const Dataset& data, Model model, const LearnerSet& learners,
                         const FoldPartition& folds, const CrossfitOptions& options) {
  check_model_data(data, model, learners);
  if (folds.n() != data.n()) throw std::invalid_argument("fold partition size differs from dataset size");
  if (!options.no_split && folds.K < 2) throw std::invalid_argument("cross-fitting needs K >= 2");

  NuisanceProfile prof;
  prof.model = model;
  prof.folds = folds;
  prof.learners = learners;
  prof.options = options;
  prof.options.K = folds.K;
  const Index n = data.n(), d = data.dim_d();
  for (const auto& name : required_components(model)) {
    const bool vec = name == "eta" || name == "m" || name == "dgamma_l" || name == "dgamma_ul";
    prof.values[name] = MatrixXd::Constant(n, vec ? d : 1, std::nan(""));
  }

  const OracleSet oracles = make_oracles(options.truth);
  const int jobs = options.no_split ? 1 : folds.K;
  std::vector<std::map<std::string, int>> counts(jobs);
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<Index> all(n);
  for (Index i = 0; i < n; ++i) all[i] = i;

  tbb::parallel_for(0, jobs, [&](int j) {
    const int fold = j + 1;
    try {
      try {
        const auto train = options.no_split ? all : folds.complement(fold);
        const auto test = options.no_split ? all : folds.members(fold);
        fit_fold({data, model, learners, oracles, options.seed, fold, train, test}, prof.values, counts[j]);
      } catch (...) {
        rethrow_with_fold(fold);
      }
    } catch (...) {
      errors[j] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (const auto& c : counts)
    for (const auto& [name, k] : c) prof.fit_counts[name] += k;
  return prof;
}

bool leakage_probe(const Dataset& data, const NuisanceProfile& profile, Index i) {
  if (i < 0 || i >= data.n()) throw std::out_of_range("leakage_probe: row index out of range");
  Dataset perturbed = data;
  if (perturbed.Y && !std::isnan((*perturbed.Y)(i))) (*perturbed.Y)(i) += 1.0;
  if (perturbed.YL) (*perturbed.YL)(i) += 1.0;
  if (perturbed.YU) (*perturbed.YU)(i) += 1.0;
  const NuisanceProfile again = crossfit(perturbed, profile.model, profile.learners, profile.folds, profile.options);
  const VectorXd a = profile.record(i), b = again.record(i);
  if (a.size() != b.size()) return false;
  for (Index k = 0; k < a.size(); ++k) {
    const bool both_nan = std::isnan(a(k)) && std::isnan(b(k));
    if (!both_nan && a(k) != b(k)) return false;
  }
  return true;
}

std::string format_profile_csv(const NuisanceProfile& profile) {
  std::ostringstream out;
  out.precision(17);
  out << "fold";
  for (const auto& [name, m] : profile.values) {
    if (m.cols() == 1) {
      out << ',' << name;
    } else {
      for (Index j = 0; j < m.cols(); ++j) out << ',' << name << '_' << j + 1;
    }
  }
  out << '\n';
  for (Index i = 0; i < profile.n(); ++i) {
    out << profile.folds.assignments[i];
    for (const auto& [name, m] : profile.values)
      for (Index j = 0; j < m.cols(); ++j) out << ',' << m(i, j);
    out << '\n';
  }
  return out.str();
}

void write_profile_csv(const NuisanceProfile& profile, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write '" + path + "'");
  f << format_profile_csv(profile);
}

}  // namespace setid
