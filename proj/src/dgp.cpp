#include "setid/dgp.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <cmath>

#include "setid/errors.hpp"
#include "setid/rng.hpp"

namespace setid {

namespace {

const boost::math::normal_distribution<double> kStdNormal(0.0, 1.0);

double norm_cdf(double z) { return boost::math::cdf(kStdNormal, z); }
double norm_pdf(double z) { return boost::math::pdf(kStdNormal, z); }
double norm_quantile(double u) { return boost::math::quantile(kStdNormal, u); }

constexpr double kHalfAbsMoment = 0.79788456080286535588;  // E|N(0,1)| = sqrt(2/pi)

}  // namespace

void validate(const DgpSpec& s) {
  if (s.n < 2) throw DataError("dgp.n must be at least 2");
  if (s.p < 1) throw DataError("dgp.p must be at least 1");
  if (s.sparsity < 0 || s.sparsity > s.p) throw DataError("dgp.sparsity must lie in [0, p]");
  if (s.beta0.size() < 1) throw DataError("dgp.beta0 must be non-empty");
  if (!(s.interval_width >= 0.0)) throw DataError("dgp.interval_width must be non-negative");
  if (!(s.noise_sd > 0.0)) throw DataError("dgp.noise_sd must be positive");
  if (!(s.residual_sd > 0.0)) throw DataError("dgp.residual_sd must be positive");
  if (s.model == Model::LEE) {
    if (s.beta0.size() != 1) throw DataError("LEE design takes a scalar beta0");
    if (!(s.selection_shift >= 0.0)) throw DataError("dgp.selection_shift must be non-negative");
    if (s.sparsity > 20) throw DataError("LEE design supports sparsity <= 20");
  }
}

Truth::Truth(DgpSpec spec) : spec_(std::move(spec)) { validate(spec_); }

VectorXd Truth::first_stage(const VectorXd& x) const {
  const Index d = spec_.beta0.size();
  VectorXd out = VectorXd::Zero(d);
  for (Index j = 0; j < d; ++j)
    for (Index k = 0; k < spec_.sparsity; ++k) out(j) += x((j + k) % spec_.p);
  return out;
}

MatrixXd Truth::first_stage(const MatrixXd& X) const {
  MatrixXd out(X.rows(), spec_.beta0.size());
  for (Index i = 0; i < X.rows(); ++i) out.row(i) = first_stage(VectorXd(X.row(i).transpose())).transpose();
  return out;
}

double Truth::f0(const VectorXd& x) const { return x.head(spec_.sparsity).sum(); }

double Truth::gamma_l(const VectorXd& x) const {
  return first_stage(x).dot(spec_.beta0) + f0(x) - 0.5 * spec_.interval_width;
}

double Truth::gamma_l(const VectorXd& d, const VectorXd& x) const {
  return d.dot(spec_.beta0) + f0(x) - 0.5 * spec_.interval_width;
}

MatrixXd Truth::residual_covariance() const {
  const Index d = spec_.beta0.size();
  return MatrixXd::Identity(d, d) * (spec_.residual_sd * spec_.residual_sd);
}

VectorXd Truth::apd_eta(const VectorXd& d, const VectorXd& x) const {
  return (d - first_stage(x)) / (spec_.residual_sd * spec_.residual_sd);
}

double Truth::support(const VectorXd& q) const {
  if (spec_.model == Model::LEE) throw UnsupportedError("support function is defined for PLP/APD designs");
  // q' Sigma^{-1} V ~ N(0, |q|^2 / sd^2) because Sigma = sd^2 I.
  const double scale = q.norm() / spec_.residual_sd;
  return q.dot(spec_.beta0) + 0.5 * spec_.interval_width * kHalfAbsMoment * scale;
}

std::pair<double, double> Truth::bounds_1d() const {
  if (spec_.beta0.size() != 1) throw UnsupportedError("bounds_1d needs a scalar design");
  VectorXd e(1);
  e(0) = 1.0;
  return {-support(-e), support(e)};
}

// ---------------------------------------------------------------------------

double Truth::selection_index(const VectorXd& x) const {
  return 0.5 * x.head(spec_.sparsity).sum() - 0.25 * static_cast<double>(spec_.sparsity);
}

double Truth::s0(const VectorXd& x) const { return norm_cdf(selection_index(x) / spec_.residual_sd); }

double Truth::s1(const VectorXd& x) const {
  return norm_cdf((selection_index(x) + spec_.selection_shift) / spec_.residual_sd);
}

double Truth::control_mean(const VectorXd& x) const { return 2.0 + 0.5 * x.head(spec_.sparsity).sum(); }

double Truth::treated_mean(const VectorXd& x) const { return control_mean(x) + spec_.beta0(0); }

double Truth::quantile(double u, const VectorXd& x) const {
  if (u <= 0.0) return -INFINITY;
  if (u >= 1.0) return INFINITY;
  return treated_mean(x) + spec_.noise_sd * norm_quantile(u);
}

std::pair<double, double> Truth::lee_bounds() const {
  const Index s = spec_.sparsity;
  double total = 0.0, lower = 0.0, upper = 0.0;
  for (long mask = 0; mask < (1L << s); ++mask) {
    VectorXd x = VectorXd::Zero(spec_.p);
    for (Index k = 0; k < s; ++k) x(k) = (mask >> k) & 1L;
    const double w = s0(x);
    const double share = p0(x);
    double up = treated_mean(x), lo = treated_mean(x);
    if (share < 1.0) {
      up += spec_.noise_sd * norm_pdf(norm_quantile(1.0 - share)) / share;
      lo -= spec_.noise_sd * norm_pdf(norm_quantile(share)) / share;
    }
    total += w;
    lower += w * lo;
    upper += w * up;
  }
  return {lower / total, upper / total};
}

std::pair<double, double> Truth::lee_effect_bounds() const {
  const Index s = spec_.sparsity;
  double total = 0.0, control = 0.0;
  for (long mask = 0; mask < (1L << s); ++mask) {
    VectorXd x = VectorXd::Zero(spec_.p);
    for (Index k = 0; k < s; ++k) x(k) = (mask >> k) & 1L;
    total += s0(x);
    control += s0(x) * control_mean(x);
  }
  const auto [lo, up] = lee_bounds();
  return {lo - control / total, up - control / total};
}

// ---------------------------------------------------------------------------

namespace {

Dataset linear_gaussian_draw(const DgpSpec& spec, const Truth& truth) {
  auto eng = make_engine(spec.seed, Stream::Data);
  boost::random::normal_distribution<double> z(0.0, 1.0);
  const Index n = spec.n, p = spec.p, d = spec.beta0.size();
  Dataset data;
  data.X.resize(n, p);
  data.D.resize(n, d);
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    VectorXd x(p);
    for (Index j = 0; j < p; ++j) x(j) = z(eng);
    VectorXd dv = truth.first_stage(x);
    for (Index j = 0; j < d; ++j) dv(j) += spec.residual_sd * z(eng);
    const double u = spec.noise_sd * z(eng);
    data.X.row(i) = x.transpose();
    data.D.row(i) = dv.transpose();
    y(i) = dv.dot(spec.beta0) + truth.f0(x) + u;
  }
  const double half = 0.5 * spec.interval_width;
  data.YL = (y.array() - half).matrix();
  data.YU = (y.array() + half).matrix();
  if (spec.interval_width == 0.0) data.YU = data.YL;
  data.Y = y;
  if (spec.interval_width == 0.0) data.Y = data.YL;
  return data;
}

}  // namespace

SimulatedData generate_plp(const DgpSpec& spec) {
  if (spec.model != Model::PLP) throw std::invalid_argument("generate_plp needs model = PLP");
  Truth truth(spec);
  return {linear_gaussian_draw(spec, truth), truth};
}

SimulatedData generate_apd(const DgpSpec& spec) {
  if (spec.model != Model::APD) throw std::invalid_argument("generate_apd needs model = APD");
  Truth truth(spec);
  return {linear_gaussian_draw(spec, truth), truth};
}

SimulatedData generate_lee(const DgpSpec& spec) {
  if (spec.model != Model::LEE) throw std::invalid_argument("generate_lee needs model = LEE");
  Truth truth(spec);
  auto eng = make_engine(spec.seed, Stream::Data);
  boost::random::normal_distribution<double> z(0.0, 1.0);
  boost::random::bernoulli_distribution<double> coin(0.5);
  const Index n = spec.n, p = spec.p;
  Dataset data;
  data.X.resize(n, p);
  data.D.resize(n, 1);
  VectorXd s(n), y(n);
  for (Index i = 0; i < n; ++i) {
    VectorXd x(p);
    for (Index j = 0; j < p; ++j) x(j) = coin(eng) ? 1.0 : 0.0;
    const double treat = coin(eng) ? 1.0 : 0.0;
    const double e = spec.residual_sd * z(eng);
    const double u = spec.noise_sd * z(eng);
    const double k = 0.5 * x.head(spec.sparsity).sum() - 0.25 * static_cast<double>(spec.sparsity);
    const bool s0 = k + e > 0.0;
    const bool s1 = s0 || (k + spec.selection_shift + e > 0.0);
    const bool sel = treat == 1.0 ? s1 : s0;
    data.X.row(i) = x.transpose();
    data.D(i, 0) = treat;
    s(i) = sel ? 1.0 : 0.0;
    y(i) = sel ? truth.control_mean(x) + treat * spec.beta0(0) + u : std::nan("");
  }
  data.S = s;
  data.Y = y;
  return {data, truth};
}

SimulatedData generate(const DgpSpec& spec) {
  switch (spec.model) {
    case Model::PLP: return generate_plp(spec);
    case Model::APD: return generate_apd(spec);
    case Model::LEE: return generate_lee(spec);
  }
  throw std::invalid_argument("unknown model");
}

}  // namespace setid
