#include <gtest/gtest.h>

#include "setid/errors.hpp"
#include "setid/moments.hpp"
#include "support.hpp"

using namespace setid;
using setid::testing::Gen;

namespace {

Observation interval_obs(double d, double yl, double yu) {
  Observation o;
  o.d = VectorXd::Constant(1, d);
  o.x = VectorXd::Zero(1);
  o.y_lower = yl;
  o.y_upper = yu;
  return o;
}

Observation lee_obs(double d, int s, double y) {
  Observation o;
  o.d = VectorXd::Constant(1, d);
  o.x = VectorXd::Zero(1);
  o.s = s;
  if (s == 1) o.y = y;
  return o;
}

PlpRecord plp_record(double eta, double gamma_l, double gamma_ul) {
  return PlpRecord{VectorXd::Constant(1, eta), gamma_l, gamma_ul};
}

LeeRecord half_record() {
  LeeRecord r;
  r.s0 = 0.5;
  r.s1 = 1.0;
  r.p0 = 0.5;
  r.y_lo = 1.0;
  r.y_hi = 1.0;
  r.prop1 = 0.5;
  r.p01 = 0.25;
  return r;
}

}  // namespace

TEST(QGenerator, Examples) {
  EXPECT_EQ(q_generator(1, 4, -0.5), 1.0);
  EXPECT_EQ(q_generator(1, 4, 0.5), 4.0);
  EXPECT_EQ(q_generator(1, 4, 0.0), 1.0);
  EXPECT_THROW(q_generator(4, 1, 0.0), std::invalid_argument);
}

TEST(QGenerator, OutputIsAnEndpoint) {
  Gen gen(1);
  for (int t = 0; t < 1000; ++t) {
    const double a = gen.normal(), b = a + gen.uniform(0, 3), z = gen.normal();
    const double v = q_generator(a, b, z);
    ASSERT_TRUE(v == a || v == b);
    ASSERT_EQ(v == b, z > 0.0);
  }
}

TEST(PlpMoment, SubstitutionExamples) {
  const auto obs = interval_obs(1.0, 0.0, 2.0);
  const auto rec = plp_record(0.0, 0.0, 2.0);  // gamma = 0 + 2 / 2 = 1
  const auto up = plp_moment(obs, VectorXd::Constant(1, 1.0), rec);
  EXPECT_EQ(up.m, 2.0);
  EXPECT_EQ(up.g, 1.0);
  const auto down = plp_moment(obs, VectorXd::Constant(1, -1.0), rec);
  EXPECT_EQ(down.m, 0.0);
  EXPECT_EQ(down.g, 1.0);
  EXPECT_EQ(up.g, up.m + up.correction);
}

TEST(PlpMoment, PointIdentifiedIsPartiallingOut) {
  Gen gen(2);
  for (int t = 0; t < 200; ++t) {
    const double d = gen.normal(), y = gen.normal(), eta = gen.normal(), gl = gen.normal(), p = gen.normal();
    const auto v = plp_moment(interval_obs(d, y, y), VectorXd::Constant(1, p), plp_record(eta, gl, 0.0));
    ASSERT_EQ(v.g, p * (d - eta) * (y - gl));
  }
}

TEST(PlpMoment, MissingNuisanceIsIncomplete) {
  PlpRecord r;
  EXPECT_THROW(plp_moment(interval_obs(1, 0, 1), VectorXd::Ones(1), r), IncompleteProfileError);
}

TEST(PlpMoment, ScalingEquivariance) {
  Gen gen(3);
  for (int t = 0; t < 500; ++t) {
    const Index d = gen.integer(1, 3);
    Observation o;
    o.d = gen.normal_vector(d);
    o.x = VectorXd::Zero(1);
    const double yl = gen.normal(), yu = yl + gen.uniform(0, 2);
    const VectorXd p = gen.normal_vector(d);
    PlpRecord r{gen.normal_vector(d), gen.normal(), gen.uniform(0, 2)};
    o.y_lower = yl;
    o.y_upper = yu;
    const double base = plp_moment(o, p, r).g;
    // Powers of two scale every intermediate exactly.
    for (double c : {0.25, 2.0, 8.0}) {
      Observation oc = o;
      oc.y_lower = c * yl;
      oc.y_upper = c * yu;
      const PlpRecord rc{r.eta, c * r.gamma_l, c * r.gamma_ul};
      ASSERT_EQ(plp_moment(oc, p, rc).g, c * base);
    }
    const double c = gen.uniform(0.1, 10.0);
    Observation oc = o;
    oc.y_lower = c * yl;
    oc.y_upper = c * yu;
    const PlpRecord rc{r.eta, c * r.gamma_l, c * r.gamma_ul};
    ASSERT_NEAR(plp_moment(oc, p, rc).g, c * base, 1e-12 * (1.0 + std::abs(c * base)));
  }
}

TEST(PlpMoment, SignFlipSwapsTheBranch) {
  Gen gen(4);
  for (int t = 0; t < 500; ++t) {
    const Index d = gen.integer(1, 3);
    Observation o;
    o.d = gen.normal_vector(d);
    o.x = VectorXd::Zero(1);
    o.y_lower = gen.normal();
    o.y_upper = *o.y_lower + gen.uniform(0, 2);
    const VectorXd p = gen.normal_vector(d);
    PlpRecord r{gen.normal_vector(d), gen.normal(), gen.uniform(0, 2)};
    const double z = p.dot(o.d - r.eta);
    // -z <= 0 exactly when z >= 0, which selects the lower endpoint.
    const double endpoint = z >= 0.0 ? *o.y_lower : *o.y_upper;
    ASSERT_EQ(plp_moment(o, -p, r).g, (-p).dot(o.d - r.eta) * (endpoint - plp_gamma(r)));
  }
}

TEST(ApdMoment, ConstantOutcomeCancels) {
  Gen gen(5);
  for (int t = 0; t < 200; ++t) {
    const double y = gen.normal();
    Observation o = interval_obs(gen.normal(), y, y);
    ApdRecord r{gen.normal_vector(1), y, 0.0, VectorXd::Zero(1), VectorXd::Zero(1), 0.0};
    ASSERT_EQ(apd_moment(o, VectorXd::Ones(1), r).g, 0.0);
  }
}

TEST(ApdMoment, ZeroWeightLeavesTheDerivativeTerm) {
  Gen gen(6);
  for (int t = 0; t < 200; ++t) {
    const Index d = gen.integer(1, 3);
    Observation o;
    o.d = gen.normal_vector(d);
    o.x = VectorXd::Zero(1);
    o.y_lower = gen.normal();
    o.y_upper = *o.y_lower + 1.0;
    const VectorXd q = gen.unit(d);
    ApdRecord r{VectorXd::Zero(d), gen.normal(), gen.uniform(0, 1), gen.normal_vector(d), gen.normal_vector(d), 0.0};
    ASSERT_EQ(apd_moment(o, q, r).g, q.dot(r.dgamma_l));
  }
}

TEST(ApdMoment, GaussianDesignMatchesClosedForm) {
  DgpSpec spec;
  spec.model = Model::APD;
  spec.n = 100000;
  spec.p = 3;
  spec.seed = 21;
  const auto sim = generate_apd(spec);
  const Truth& truth = sim.truth;
  // sigma(q) = q beta0 + (w / 2) sqrt(2 / pi) / sd_v for d = 1.
  const double half_width = 0.5 * spec.interval_width * std::sqrt(2.0 / M_PI) / spec.residual_sd;
  for (double sign : {1.0, -1.0}) {
    const VectorXd q = VectorXd::Constant(1, sign);
    const Index n = sim.data.n();
    VectorXd z(n), g(n);
    std::vector<Observation> obs;
    for (Index i = 0; i < n; ++i) {
      obs.push_back(sim.data.row(i));
      z(i) = q.dot(truth.apd_eta(obs[i].d, obs[i].x));
    }
    const double bw = silverman_bandwidth(z);
    const double spread = q.dot(truth.residual_covariance().inverse() * q);
    for (Index i = 0; i < n; ++i) {
      ApdRecord r{truth.apd_eta(obs[i].d, obs[i].x), truth.gamma_l(obs[i].d, obs[i].x), truth.gamma_ul(),
                  truth.dgamma_l(), VectorXd::Zero(1), gaussian_kernel(z(i), bw) * spread};
      g(i) = apd_moment(obs[i], q, r).g;
    }
    const double se = setid::testing::sample_sd(g) / std::sqrt(static_cast<double>(n));
    const double target = sign * spec.beta0(0) + half_width;
    EXPECT_LE(std::abs(g.mean() - target), 3.0 * se) << "q = " << sign;
  }
}

TEST(Kernel, StandardValues) {
  EXPECT_DOUBLE_EQ(gaussian_kernel(0.0, 1.0), 0.3989422804014327);
  EXPECT_DOUBLE_EQ(gaussian_kernel(1.0, 2.0), 0.3989422804014327 * std::exp(-0.125) / 2.0);
  VectorXd z(5);
  z << -2, -1, 0, 1, 2;
  // sd = sqrt(10 / 4).
  EXPECT_DOUBLE_EQ(silverman_bandwidth(z), 1.06 * std::sqrt(2.5) * std::pow(5.0, -0.2));
  EXPECT_THROW(silverman_bandwidth(VectorXd::Zero(4)), DegenerateError);
}

TEST(LeeMoment, UpperSubstitution) {
  const auto r = half_record();
  EXPECT_EQ(lee_upper_moment(lee_obs(1, 1, 2.0), r).m, 8.0);
  EXPECT_EQ(lee_upper_moment(lee_obs(1, 1, 0.5), r).m, 0.0);
}

TEST(LeeMoment, CorrectionTermsByHand) {
  // D = 1, S = 1, Y = 2, P0 = P1 = 0.5, P01 = 0.25, s0 = 0.5, s1 = 1, p0 = 0.5,
  // y_hi = 1: a1 = 1 * 2 * (0 - 0.5) = -1; a2 = -1 * 0.5 * 2 * (2 - 1) = -1;
  // a3 = 1 * 4 * 1 * (0 - 1 + 0.5) = -2.
  const auto v = lee_upper_moment(lee_obs(1, 1, 2.0), half_record());
  EXPECT_EQ(v.correction, -4.0);
  EXPECT_EQ(v.g, 4.0);
  // Lower with y_lo = 1: a4 = -1, a5 = -1, a6 = -1 * 4 * (0 - 0.5) = 2; m_L = 0.
  const auto l = lee_lower_moment(lee_obs(1, 1, 2.0), half_record());
  EXPECT_EQ(l.m, 0.0);
  EXPECT_EQ(l.correction, 0.0);
}

TEST(LeeMoment, NoTrimmingCollapsesTheBounds) {
  Gen gen(7);
  std::vector<double> ys;
  for (int i = 0; i < 50; ++i) ys.push_back(gen.normal());
  LeeRecord r = half_record();
  r.p0 = 1.0;
  r.y_lo = *std::max_element(ys.begin(), ys.end());
  r.y_hi = *std::min_element(ys.begin(), ys.end());
  for (double y : ys) {
    const auto o = lee_obs(1, 1, y);
    EXPECT_EQ(lee_upper_moment(o, r).m, lee_lower_moment(o, r).m);
  }
}

TEST(LeeMoment, GIsMPlusCorrection) {
  Gen gen(8);
  for (int t = 0; t < 500; ++t) {
    LeeRecord r;
    r.s0 = gen.uniform(0.1, 0.9);
    r.s1 = gen.uniform(r.s0, 1.0);
    r.p0 = r.s0 / r.s1;
    r.y_lo = gen.normal();
    r.y_hi = r.y_lo + gen.uniform(0, 2);
    r.prop1 = gen.uniform(0.2, 0.8);
    r.p01 = gen.uniform(0.1, 0.5);
    const auto o = lee_obs(gen.integer(0, 1), gen.integer(0, 1), gen.normal());
    for (const auto& v : {lee_upper_moment(o, r), lee_lower_moment(o, r)}) ASSERT_EQ(v.g, v.m + v.correction);
  }
}

TEST(LeeMoment, ProbabilityFloorIsEnforced) {
  LeeRecord r = half_record();
  r.s0 = 0.0;
  EXPECT_THROW(lee_upper_moment(lee_obs(1, 1, 1.0), r), DegenerateError);
  r = half_record();
  r.prop1 = 1.0;
  EXPECT_THROW(lee_lower_moment(lee_obs(1, 1, 1.0), r), DegenerateError);
}

TEST(LeeAte, UnselectedControlContribution) {
  LeeRecord r = half_record();
  r.gamma_control = 3.0;
  const auto o = lee_obs(0, 0, 0.0);
  const auto [tl, tu] = lee_ate_moments(o, r);
  // Control term 0; residual (1-D)S/P0 - s0 = -0.5.
  EXPECT_EQ(tl, lee_lower_moment(o, r).g + 3.0 * 0.5);
  EXPECT_EQ(tu, lee_upper_moment(o, r).g + 3.0 / 0.25 * 0.5);
}

TEST(LeeMoment, OracleOrderingOnSimulatedData) {
  DgpSpec spec;
  spec.model = Model::LEE;
  spec.n = 100000;
  spec.p = 4;
  spec.seed = 5;
  const auto sim = generate_lee(spec);
  const Truth& t = sim.truth;
  double p01 = 0.0;
  for (Index i = 0; i < spec.n; ++i) p01 += sim.data.D(i, 0) == 0.0 && (*sim.data.S)(i) == 1.0;
  p01 /= static_cast<double>(spec.n);
  double mu = 0, ml = 0, tl = 0, tu = 0;
  VectorXd diff(spec.n);
  for (Index i = 0; i < spec.n; ++i) {
    const auto o = sim.data.row(i);
    LeeRecord r;
    r.s0 = t.s0(o.x);
    r.s1 = t.s1(o.x);
    r.p0 = std::min(r.s0 / r.s1, 1.0);
    r.y_lo = t.quantile(std::clamp(r.p0, 1e-6, 1 - 1e-6), o.x);
    r.y_hi = t.quantile(std::clamp(1 - r.p0, 1e-6, 1 - 1e-6), o.x);
    r.prop1 = 0.5;
    r.gamma_control = t.control_mean(o.x);
    r.p01 = p01;
    const double u = lee_upper_moment(o, r).m, l = lee_lower_moment(o, r).m;
    mu += u;
    ml += l;
    const auto [a, b] = lee_ate_moments(o, r);
    tl += a;
    tu += b;
    diff(i) = b - a;
  }
  EXPECT_GE(mu, ml);
  const double se = setid::testing::sample_sd(diff) / std::sqrt(static_cast<double>(spec.n));
  EXPECT_GE(tu / spec.n - tl / spec.n, -3.0 * se);
}

TEST(GateauxProbe, ZeroDirectionHasZeroDerivative) {
  DgpSpec spec;
  spec.n = 2000;
  const auto sim = generate_plp(spec);
  Perturbation pert{"eta", [](const VectorXd&, const VectorXd&) { return 0.0; }};
  const auto res = gateaux_probe(MomentKind::PLP, sim.data, sim.truth, pert, ProbeOptions{});
  EXPECT_EQ(res.derivative, 0.0);
}

TEST(GateauxProbe, OrthogonalPassesNaiveFails) {
  DgpSpec spec;
  spec.n = 20000;
  spec.p = 4;
  spec.seed = 8;
  const auto sim = generate_plp(spec);
  Perturbation pert{"eta", [](const VectorXd&, const VectorXd& x) { return std::tanh(x(0) + x(1)); }};
  const auto orth = gateaux_probe(MomentKind::PLP, sim.data, sim.truth, pert, ProbeOptions{});
  ProbeOptions naive;
  naive.naive = true;
  const auto plug = gateaux_probe(MomentKind::PLP, sim.data, sim.truth, pert, naive);
  EXPECT_LE(std::abs(orth.derivative), orth.bound);
  EXPECT_GT(std::abs(plug.derivative), 10.0 * orth.bound);
}

TEST(GateauxProbe, RejectsUnknownComponent) {
  DgpSpec spec;
  spec.n = 100;
  const auto sim = generate_plp(spec);
  Perturbation pert{"s0", [](const VectorXd&, const VectorXd&) { return 1.0; }};
  EXPECT_THROW(gateaux_probe(MomentKind::PLP, sim.data, sim.truth, pert, ProbeOptions{}), std::invalid_argument);
}
