#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "setid/estimators.hpp"

namespace setid {

namespace {

double radical_inverse(std::uint64_t index, int base) {
  double result = 0.0, f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

int nth_prime(int k) {
  int count = 0;
  for (int c = 2;; ++c) {
    bool prime = true;
    for (int f = 2; f * f <= c; ++f)
      if (c % f == 0) {
        prime = false;
        break;
      }
    if (prime && count++ == k) return c;
  }
}

}  // namespace

std::vector<VectorXd> direction_grid(Index d, int m) {
  if (d < 1) throw std::invalid_argument("direction_grid needs d >= 1");
  std::vector<VectorXd> grid;
  if (d == 1) {
    grid.push_back(VectorXd::Constant(1, 1.0));
    grid.push_back(VectorXd::Constant(1, -1.0));
    return grid;
  }
  if (m < 1) throw std::invalid_argument("direction_grid needs m >= 1");
  if (d == 2) {
    for (int k = 0; k < m; ++k) {
      const double a = 2.0 * std::numbers::pi * k / m;
      VectorXd q(2);
      q << std::cos(a), std::sin(a);
      grid.push_back(q);
    }
    return grid;
  }
  const boost::math::normal_distribution<double> normal(0.0, 1.0);
  for (std::uint64_t idx = 1; static_cast<int>(grid.size()) < m; ++idx) {
    VectorXd q(d);
    for (Index j = 0; j < d; ++j) q(j) = boost::math::quantile(normal, radical_inverse(idx, nth_prime(static_cast<int>(j))));
    const double norm = q.norm();
    if (norm < 1e-8) continue;
    grid.push_back(q / norm);
  }
  return grid;
}

}  // namespace setid
