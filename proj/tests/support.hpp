#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "setid/dataset.hpp"

namespace setid::testing {

// Seeded generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}

  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
  std::uint64_t seed() { return eng_(); }

  VectorXd normal_vector(Index d) {
    VectorXd v(d);
    for (Index j = 0; j < d; ++j) v(j) = normal();
    return v;
  }
  VectorXd unit(Index d) {
    VectorXd v = normal_vector(d);
    while (v.norm() < 1e-3) v = normal_vector(d);
    return v / v.norm();
  }
  MatrixXd normal_matrix(Index r, Index c) {
    MatrixXd m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = normal();
    return m;
  }

  // Interval dataset with d endogenous columns and p covariates.
  Dataset interval_data(Index n, Index d, Index p) {
    Dataset data;
    data.X = normal_matrix(n, p);
    data.D = normal_matrix(n, d);
    VectorXd yl(n), yu(n);
    for (Index i = 0; i < n; ++i) {
      yl(i) = normal();
      yu(i) = yl(i) + uniform(0.0, 2.0);
    }
    data.YL = yl;
    data.YU = yu;
    return data;
  }

 private:
  std::mt19937_64 eng_;
};

inline double sample_sd(const VectorXd& v) {
  const double n = static_cast<double>(v.size());
  return std::sqrt((v.array() - v.mean()).square().sum() / (n - 1.0));
}

}  // namespace setid::testing
