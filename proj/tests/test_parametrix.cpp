#include <gtest/gtest.h>

#include <cmath>

#include "hk/error.hpp"
#include "hk/parametrix.hpp"

using namespace hk;

namespace {

// Cauchy law with scale g wrapped onto the unit circle
double wrapped_cauchy(double g, double x) {
  return std::sinh(2 * M_PI * g) / (std::cosh(2 * M_PI * g) - std::cos(2 * M_PI * x));
}

ParametrixConfig small_config(int M = 128, int K = 8) {
  ParametrixConfig c;
  c.M = M;
  c.K = K;
  return c;
}

double max_abs(const Eigen::MatrixXd& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Parametrix, DefectKernelClosedForm) {
  // kappa = a(x) for every z and phi = r: q0 = (a_x - a_y) (u^2 - g^2) / (g^2 + u^2)^2, g = pi a_y tau
  auto spec = VariableKernelSpec::periodic_level(ScalingProfile::power(1.0), 0.5, 1.0);
  auto a = [&](double x) { return spec.kappa(0.0, x, 0.0); };
  const double t = 0.0, s = 0.05, y = 0.1;
  for (double x : {0.1, 0.13, 0.3, 0.8, 2.0}) {
    double u = x - y, g = M_PI * a(y) * (s - t);
    double ref = (a(x) - a(y)) * (u * u - g * g) / std::pow(g * g + u * u, 2);
    EXPECT_NEAR(q0(spec, t, s, x, y), ref, 1e-7 * std::max(1.0, std::abs(ref))) << x;
  }
}

TEST(Parametrix, XIndependentFieldIsWrappedCauchy) {
  auto spec = VariableKernelSpec::from_frozen(FrozenKernelSpec::constant(ScalingProfile::power(1.0)), 1.0);
  Parametrix P(spec, small_config());
  const double tau = 0.05;
  HeatKernelField f = P.field(0.0, tau, tau);
  double worst = 0.0;
  for (int i = 0; i < f.M; ++i)
    for (int j = 0; j < f.M; ++j) worst = std::max(worst, std::abs(f.P(i, j) - wrapped_cauchy(M_PI * tau, f.x(i) - f.x(j))));
  EXPECT_LT(worst, 1e-8 * f.max_value());
}

TEST(Parametrix, XIndependentFieldEqualsFrozenField) {
  auto spec = VariableKernelSpec::from_frozen(FrozenKernelSpec::bump(ScalingProfile::piecewise(0.7, 1.5), 1.0, 0.5), 2.0);
  Parametrix P(spec, small_config());
  HeatKernelField a = P.field(0.0, 0.05, 0.05), b = P.frozen_field(0.0, 0.05);
  EXPECT_LT(max_abs(a.P - b.P), 1e-12 * b.max_value());
}

TEST(Parametrix, PicardAgreesWithDirectSolve) {
  auto spec = VariableKernelSpec::periodic_bump(ScalingProfile::power(1.0), 0.1, 1.0);
  Parametrix P(spec, small_config());
  auto sys = P.system(0.0, 1.0 / 64);
  QSolution it = P.solve_q(*sys), dir = P.solve_q_direct(*sys);
  ASSERT_EQ(it.q.size(), dir.q.size());
  double scale = 0.0, diff = 0.0;
  for (std::size_t k = 0; k < it.q.size(); ++k) {
    scale = std::max(scale, max_abs(dir.q[k]));
    diff = std::max(diff, max_abs(it.q[k] - dir.q[k]));
  }
  EXPECT_LT(diff, 1e-6 * scale);
  EXPECT_LE(it.residual, 3.0 * P.config().tol);
  // geometric decay of the Picard terms
  ASSERT_GE(it.ratios.size(), 2u);
  for (double r : it.ratios) EXPECT_LT(r, 0.5);
}

TEST(Parametrix, PicardStepIsLinear) {
  auto spec = VariableKernelSpec::periodic_bump(ScalingProfile::power(1.0), 0.1, 1.0);
  Parametrix P(spec, small_config());
  auto sys = P.system(0.0, 1.0 / 64);
  auto a = P.picard_step(*sys, sys->q0);
  std::vector<Eigen::MatrixXd> twice;
  for (const auto& m : sys->q0) twice.push_back(2.0 * m);
  auto b = P.picard_step(*sys, twice);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_LT(max_abs(b[k] - 2.0 * a[k]), 1e-12 * (1.0 + max_abs(a[k])));
}

TEST(Parametrix, FieldMassPositivityAndChapmanKolmogorov) {
  auto spec = VariableKernelSpec::periodic_bump(ScalingProfile::power(1.0), 0.1, 1.0);
  Parametrix P(spec, small_config());
  const double eps0 = 1.0 / 64;
  HeatKernelField f = P.field(0.0, 2 * eps0, eps0);
  for (double m : f.row_masses()) EXPECT_NEAR(m, 1.0, 1e-4);
  EXPECT_GE(f.min_value(), 0.0);
  ASSERT_FALSE(f.ledger.empty());
  EXPECT_EQ(f.ledger.back().method, "ck");

  // one long direct solve against the composition of two short ones
  HeatKernelField direct = P.field(0.0, 2 * eps0, 2 * eps0);
  EXPECT_LT(max_abs(direct.P - f.P), 1e-3 * direct.max_value());
}

TEST(Parametrix, ComposeRejectsMismatch) {
  auto spec = VariableKernelSpec::from_frozen(FrozenKernelSpec::constant(ScalingProfile::power(1.0)), 1.0);
  Parametrix P(spec, small_config());
  HeatKernelField a = P.frozen_field(0.0, 0.01), b = P.frozen_field(0.02, 0.03);
  EXPECT_THROW(compose(a, b), Error);
}

TEST(Parametrix, GateOpenAndClosed) {
  auto open = assumption_gate(VariableKernelSpec::periodic_bump(ScalingProfile::power(1.0), 0.1, 1.0));
  EXPECT_TRUE(open.open);
  EXPECT_EQ(open.hypothesis, "H1");

  auto spec = VariableKernelSpec::periodic_bump(ScalingProfile::piecewise(1.0, 2.0), 0.1, 1.0);
  spec.symmetric = false;
  auto closed = assumption_gate(spec);
  EXPECT_FALSE(closed.open);
  EXPECT_EQ(closed.hypothesis, "H2");

  spec = VariableKernelSpec::periodic_bump(ScalingProfile::power(1.0), 0.1, 1.0);
  spec.modulus = Modulus::log_power(-1.0);
  EXPECT_FALSE(assumption_gate(spec).open);
}

TEST(Parametrix, EpsilonZeroFromConstants) {
  // ell^2 = r and phi = r give Gamma(eps) = eps; C2 = 2 C0 C1 = 1.62, the largest
  // dyadic eps below 1/(2 C2) = 0.309 is 1/4, then halved
  Epsilon0Report r = epsilon0_from(Modulus::power(0.5), ScalingProfile::power(1.0), 0.9, 0.9);
  EXPECT_DOUBLE_EQ(r.eps0, 0.125);
  EXPECT_DOUBLE_EQ(r.C2, 1.62);
  EXPECT_NEAR(r.contraction, 1.62 * 0.125, 1e-8);
  // a smaller modulus never shrinks eps0
  Epsilon0Report h = epsilon0_from(Modulus::power(0.5, 0.5), ScalingProfile::power(1.0), 0.9, 0.9);
  EXPECT_GE(h.eps0, r.eps0);
}

TEST(Parametrix, PeriodizedRhoSumsImages) {
  auto p = ScalingProfile::power(1.0);
  // phi = r, tau = 1: rho = 1 / (1 + x^2), sum over x + k equals pi coth(pi) at 0
  EXPECT_NEAR(periodized_rho(p, 1.0, 0.0, 1.0), M_PI / std::tanh(M_PI), 1e-6);
}

TEST(Parametrix, ResolutionErrorWhenGridTooCoarse) {
  auto spec = VariableKernelSpec::periodic_bump(ScalingProfile::power(1.0), 0.1, 1.0);
  Parametrix P(spec, small_config(16, 4));
  try {
    P.system(0.0, 1e-5);
    FAIL() << "coarse grid accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Resolution);
  }
}

TEST(Parametrix, ModelViolationsAndConfig) {
  auto spec = VariableKernelSpec::periodic_bump(ScalingProfile::power(1.0), 0.5, 1.0);
  spec.modulus = Modulus::power(0.4, 1e-3);
  try {
    validate_variable(spec);
    FAIL() << "oscillation above ell^2 accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Model);
  }
  auto ok = VariableKernelSpec::periodic_bump(ScalingProfile::power(1.0), 0.5, 1.0);
  EXPECT_NO_THROW(validate_variable(ok));
  EXPECT_THROW(Parametrix(ok, small_config(15, 4)), Error);
  EXPECT_THROW(VariableKernelSpec::from_json({{"kind", "nope"}}, ScalingProfile::power(1.0)), Error);
  auto back = VariableKernelSpec::from_json(ok.to_json(), ok.profile);
  EXPECT_EQ(back.kappa(0.0, 0.3, 0.5), ok.kappa(0.0, 0.3, 0.5));
}
