#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace setid {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Model { PLP, APD, LEE };

std::string to_string(Model m);
Model model_from_string(const std::string& name);

struct Observation {
  VectorXd d;
  VectorXd x;
  std::optional<int> s;
  std::optional<double> y;
  std::optional<double> y_lower;
  std::optional<double> y_upper;
};

// Column-major table of observations. Optional columns are absent as a whole;
// within a present column, NaN marks a missing cell (only Y may have missing
// cells, on rows with S = 0).
struct Dataset {
  MatrixXd D;  // n x d
  MatrixXd X;  // n x p
  std::optional<VectorXd> S;
  std::optional<VectorXd> Y;
  std::optional<VectorXd> YL;
  std::optional<VectorXd> YU;

  Index n() const { return D.rows(); }
  Index dim_d() const { return D.cols(); }
  Index dim_p() const { return X.cols(); }

  Observation row(Index i) const;
  Dataset subset(const std::vector<Index>& rows) const;
};

// Rejects rows violating Y_L <= Y <= Y_U, non-finite values and the Lee
// presence rule (Y observed iff S = 1). Throws DataError with the 1-based CSV
// line (row index + 2).
void validate(const Dataset& data);
// validate() plus the columns each model needs.
void validate_for(const Dataset& data, Model model);

// ---------------------------------------------------------------------------
// Fold partitions

struct FoldPartition {
  std::vector<int> assignments;  // fold id in 1..K per observation
  int K = 0;
  std::uint64_t seed = 0;

  Index n() const { return static_cast<Index>(assignments.size()); }
  std::vector<Index> members(int k) const;
  std::vector<Index> complement(int k) const;
};

FoldPartition kfold_partition(Index n, int K, std::uint64_t seed);

// ---------------------------------------------------------------------------
// CSV

// Header names: d_1..d_k, x_1..x_p, s, y, y_lower, y_upper. Empty cell =
// missing.
Dataset read_csv(const std::string& path);
Dataset parse_csv(const std::string& text);
void write_csv(const Dataset& data, const std::string& path);
std::string format_csv(const Dataset& data);

}  // namespace setid
