#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "setid/dataset.hpp"
#include "setid/dgp.hpp"
#include "setid/learners.hpp"

namespace setid {

// Learner per nuisance role. Roles a model does not use are ignored.
//   PLP: eta = E[D|X], gamma_l = E[Y_L|X], gamma_ul = E[Y_U - Y_L|X]
//   APD: eta = m(X) = E[D|X], gamma_l / gamma_ul fitted on [D, X]
//   LEE: selection = Pr(S=1|D=d,X) per arm, quantile = Q(u|D=1,S=1,X),
//        control = E[Y|S=1,D=0,X], propensity = Pr(D=1|X)
struct LearnerSet {
  LearnerSpec eta;
  LearnerSpec gamma_l;
  LearnerSpec gamma_ul;
  LearnerSpec selection;
  LearnerSpec quantile;
  LearnerSpec control;
  // nullopt: the propensity is known and equal to known_propensity.
  std::optional<LearnerSpec> propensity;
  double known_propensity = 0.5;

  static LearnerSet defaults(Model model);
  // Every role uses the population nuisance of the generating process.
  static LearnerSet oracle();
};

struct CrossfitOptions {
  int K = 2;
  std::uint64_t seed = 0;
  // Fit on the full sample and evaluate on the same sample.
  bool no_split = false;
  // Needed by ORACLE learners.
  std::shared_ptr<const Truth> truth;
};

// Out-of-fold nuisance values, one matrix (n x width) per component.
//   PLP: eta (n x d), gamma_l, gamma_ul
//   APD: m (n x d), gamma_l, gamma_ul, dgamma_l (n x d), dgamma_ul (n x d)
//   LEE: s0, s1, p0, y_lo, y_hi, prop1, gamma_control
struct NuisanceProfile {
  Model model = Model::PLP;
  std::map<std::string, MatrixXd> values;
  FoldPartition folds;
  LearnerSet learners;
  CrossfitOptions options;
  std::map<std::string, int> fit_counts;

  Index n() const { return folds.n(); }
  bool has(const std::string& name) const { return values.count(name) > 0; }
  // Throws IncompleteProfileError when the component is absent.
  const MatrixXd& at(const std::string& name) const;
  VectorXd column(const std::string& name, Index j = 0) const;
  // All components of observation i flattened in name order.
  VectorXd record(Index i) const;
};

std::vector<std::string> required_components(Model model);

NuisanceProfile crossfit(const Dataset& data, Model model, const LearnerSet& learners,
                         const CrossfitOptions& options);
NuisanceProfile crossfit(const Dataset& data, Model model, const LearnerSet& learners,
                         const FoldPartition& folds, const CrossfitOptions& options);

// Shifts row i's outcome columns (and D for continuous designs), refits with
// the profile's partition and options, and reports whether row i's record is
// bit-identical.
bool leakage_probe(const Dataset& data, const NuisanceProfile& profile, Index i);

std::string format_profile_csv(const NuisanceProfile& profile);
void write_profile_csv(const NuisanceProfile& profile, const std::string& path);

// Lee quantile levels are clamped into [kQuantileFloor, 1 - kQuantileFloor].
inline constexpr double kQuantileFloor = 1e-6;

}  // namespace setid
