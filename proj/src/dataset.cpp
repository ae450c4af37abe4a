#include "setid/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "setid/errors.hpp"
#include "setid/rng.hpp"

namespace setid {

std::string to_string(Model m) {
  switch (m) {
    case Model::PLP: return "PLP";
    case Model::APD: return "APD";
    case Model::LEE: return "LEE";
  }
  return "?";
}

Model model_from_string(const std::string& name) {
  if (name == "PLP") return Model::PLP;
  if (name == "APD") return Model::APD;
  if (name == "LEE") return Model::LEE;
  throw DataError("unknown model '" + name + "' (expected PLP, APD or LEE)");
}

Observation Dataset::row(Index i) const {
  Observation o;
  o.d = D.row(i).transpose();
  o.x = X.row(i).transpose();
  if (S) o.s = static_cast<int>((*S)(i));
  if (Y && !std::isnan((*Y)(i))) o.y = (*Y)(i);
  if (YL) o.y_lower = (*YL)(i);
  if (YU) o.y_upper = (*YU)(i);
  return o;
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Dataset out;
  const auto m = static_cast<Index>(rows.size());
  out.D.resize(m, D.cols());
  out.X.resize(m, X.cols());
  for (Index r = 0; r < m; ++r) {
    out.D.row(r) = D.row(rows[r]);
    out.X.row(r) = X.row(rows[r]);
  }
  auto pick = [&](const std::optional<VectorXd>& col) -> std::optional<VectorXd> {
    if (!col) return std::nullopt;
    VectorXd v(m);
    for (Index r = 0; r < m; ++r) v(r) = (*col)(rows[r]);
    return v;
  };
  out.S = pick(S);
  out.Y = pick(Y);
  out.YL = pick(YL);
  out.YU = pick(YU);
  return out;
}

namespace {

std::size_t csv_line(Index i) { return static_cast<std::size_t>(i) + 2; }

void require_finite(const MatrixXd& m, const char* name) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      if (!std::isfinite(m(i, j)))
        throw DataError(std::string("non-finite value in ") + name + "_" + std::to_string(j + 1),
                        csv_line(i));
}

}  // namespace

void validate(const Dataset& data) {
  const Index n = data.n();
  if (data.X.rows() != n) throw DataError("D and X have different row counts");
  for (const auto* col : {&data.S, &data.Y, &data.YL, &data.YU})
    if (*col && (*col)->size() != n) throw DataError("column length differs from row count");
  require_finite(data.D, "d");
  require_finite(data.X, "x");
  for (Index i = 0; i < n; ++i) {
    const double yl = data.YL ? (*data.YL)(i) : -INFINITY;
    const double yu = data.YU ? (*data.YU)(i) : INFINITY;
    if (data.YL && !std::isfinite(yl)) throw DataError("missing or non-finite y_lower", csv_line(i));
    if (data.YU && !std::isfinite(yu)) throw DataError("missing or non-finite y_upper", csv_line(i));
    if (yl > yu) throw DataError("y_lower exceeds y_upper", csv_line(i));
    if (data.S) {
      const double s = (*data.S)(i);
      if (s != 0.0 && s != 1.0) throw DataError("s must be 0 or 1", csv_line(i));
      if (data.Y) {
        const bool observed = !std::isnan((*data.Y)(i));
        if (observed != (s == 1.0)) throw DataError("y must be present exactly when s = 1", csv_line(i));
      }
    }
    if (data.Y && !std::isnan((*data.Y)(i))) {
      const double y = (*data.Y)(i);
      if (!std::isfinite(y)) throw DataError("non-finite y", csv_line(i));
      if (y < yl || y > yu) throw DataError("y outside [y_lower, y_upper]", csv_line(i));
    } else if (data.Y && !data.S) {
      throw DataError("missing y", csv_line(i));
    }
  }
}

void validate_for(const Dataset& data, Model model) {
  if (data.n() < 2) throw DataError("dataset needs at least two rows");
  if (data.dim_d() < 1) throw DataError("dataset has no d_ columns");
  switch (model) {
    case Model::PLP:
    case Model::APD:
      if (!data.YL) throw DataError("column y_lower is required for " + to_string(model));
      if (!data.YU) throw DataError("column y_upper is required for " + to_string(model));
      break;
    case Model::LEE:
      if (!data.S) throw DataError("column s is required for LEE");
      if (!data.Y) throw DataError("column y is required for LEE");
      if (data.dim_d() != 1) throw DataError("LEE needs exactly one binary d_ column");
      for (Index i = 0; i < data.n(); ++i)
        if (data.D(i, 0) != 0.0 && data.D(i, 0) != 1.0) throw DataError("d_1 must be 0 or 1", csv_line(i));
      break;
  }
  validate(data);
}

// ---------------------------------------------------------------------------

std::vector<Index> FoldPartition::members(int k) const {
  std::vector<Index> out;
  for (Index i = 0; i < n(); ++i)
    if (assignments[i] == k) out.push_back(i);
  return out;
}

std::vector<Index> FoldPartition::complement(int k) const {
  std::vector<Index> out;
  for (Index i = 0; i < n(); ++i)
    if (assignments[i] != k) out.push_back(i);
  return out;
}

FoldPartition kfold_partition(Index n, int K, std::uint64_t seed) {
  if (K < 2) throw std::invalid_argument("kfold_partition: K must be at least 2");
  if (K > n) throw std::invalid_argument("kfold_partition: K exceeds the number of observations");
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  auto eng = make_engine(seed, Stream::Folds);
  std::shuffle(order.begin(), order.end(), eng);
  FoldPartition fp;
  fp.K = K;
  fp.seed = seed;
  fp.assignments.assign(n, 0);
  // Position j of the shuffled order goes to fold (j mod K) + 1, so the first
  // n mod K folds receive the extra observation.
  for (Index j = 0; j < n; ++j) fp.assignments[order[j]] = static_cast<int>(j % K) + 1;
  return fp;
}

}  // namespace setid
