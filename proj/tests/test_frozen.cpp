#include <gtest/gtest.h>

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

#include "hk/error.hpp"
#include "hk/frozen.hpp"

using namespace hk;

namespace {

// phi = r, kappa = c: Cauchy law with scale pi c tau
double cauchy(double tau, double c, double x) {
  double g = M_PI * c * tau;
  return g / (M_PI * (g * g + x * x));
}

// kernel (a + b sign z) / |z|^{1+alpha}; Case1 uncompensated, Case3 fully compensated
cplx stable_exponent(double alpha, double a, double b, double xi) {
  const cplx i(0.0, 1.0);
  const double G = boost::math::tgamma(-alpha);
  return G * ((a + b) * std::pow(-i * xi, alpha) + (a - b) * std::pow(i * xi, alpha));
}

}  // namespace

TEST(Frozen, CauchyExponent) {
  auto spec = FrozenKernelSpec::constant(ScalingProfile::power(1.0), 1.0);
  for (double xi : {0.1, 1.0, 7.0}) {
    cplx psi = characteristic_exponent(spec, 0.0, 1.0, xi);
    EXPECT_NEAR(psi.real(), -M_PI * xi, 1e-8 * M_PI * xi);
    EXPECT_NEAR(psi.imag(), 0.0, 1e-9);
  }
}

TEST(Frozen, StableExponentCase1Asymmetric) {
  auto spec = FrozenKernelSpec::asymmetric(ScalingProfile::power(0.5), 1.0, 0.5);
  for (double xi : {-3.0, 0.2, 1.0, 5.0}) {
    cplx psi = characteristic_exponent(spec, 0.0, 1.0, xi), ref = stable_exponent(0.5, 1.0, 0.5, xi);
    EXPECT_NEAR(std::abs(psi - ref), 0.0, 1e-7 * std::abs(ref)) << xi;
  }
}

TEST(Frozen, StableExponentCase3Asymmetric) {
  auto spec = FrozenKernelSpec::asymmetric(ScalingProfile::power(1.5), 1.0, 0.5);
  for (double xi : {-3.0, 0.2, 1.0, 5.0}) {
    cplx psi = characteristic_exponent(spec, 0.0, 1.0, xi), ref = stable_exponent(1.5, 1.0, 0.5, xi);
    EXPECT_NEAR(std::abs(psi - ref), 0.0, 1e-7 * std::abs(ref)) << xi;
  }
}

TEST(Frozen, CauchyDensityClosedForm) {
  auto spec = FrozenKernelSpec::constant(ScalingProfile::power(1.0), 1.0);
  for (double x : {0.0, 0.5, 3.0, 40.0}) EXPECT_NEAR(density_direct(spec, 0.0, 1.0, x), cauchy(1.0, 1.0, x), 1e-9);
  GridDensity g = density_fft(spec, 0.0, 0.1);
  double worst = 0.0;
  for (int i = 0; i < g.n; ++i)
    if (std::abs(g.x(i)) < 10.0) worst = std::max(worst, std::abs(g.values[i] - cauchy(0.1, 1.0, g.x(i))));
  EXPECT_LT(worst, 1e-6 * g.max_value());
}

TEST(Frozen, TimeSineIntegratesKappa) {
  const double c = 1.0, amp = 0.5, P = 1.0, t = 0.1, s = 0.6;
  auto spec = FrozenKernelSpec::time_sine(ScalingProfile::power(1.0), c, amp, P);
  double K = c * ((s - t) - amp * P / (2 * M_PI) * (std::cos(2 * M_PI * s / P) - std::cos(2 * M_PI * t / P)));
  for (double x : {0.0, 0.7, 4.0}) EXPECT_NEAR(density_direct(spec, t, s, x), cauchy(K, 1.0, x), 1e-8);
}

TEST(Frozen, CdfMatchesCauchy) {
  auto spec = FrozenKernelSpec::constant(ScalingProfile::power(1.0), 1.0);
  for (double x : {-5.0, 0.0, 1.0, 20.0})
    EXPECT_NEAR(cdf_direct(spec, 0.0, 1.0, x), 0.5 + std::atan(x / M_PI) / M_PI, 1e-7) << x;
}

TEST(Frozen, MassWithTailCorrection) {
  for (auto spec : {FrozenKernelSpec::constant(ScalingProfile::power(1.0)),
                    FrozenKernelSpec::asymmetric(ScalingProfile::power(1.5), 1.0, 0.5),
                    FrozenKernelSpec::bump(ScalingProfile::piecewise(0.7, 1.5), 1.0, 0.5)}) {
    GridDensity g = density_fft(spec, 0.0, 0.5);
    EXPECT_NEAR(g.mass() + g.outside_mass, 1.0, 1e-3) << spec.id;
    EXPECT_TRUE(g.ringing_ok(1e-6)) << spec.id;
  }
}

TEST(Frozen, ScaledGridAgreesWithDirectGrid) {
  auto spec = FrozenKernelSpec::asymmetric(ScalingProfile::power(1.5), 1.0, 0.5);
  GridDensity a = density_fft(spec, 0.0, 0.3), b = density_scaled_grid(spec, 0.0, 0.3);
  ASSERT_EQ(a.n, b.n);
  double worst = 0.0;
  for (int i = 0; i < a.n; ++i) worst = std::max(worst, std::abs(a.values[i] - b.values[i]));
  EXPECT_LT(worst, 1e-8 * a.max_value());
}

TEST(Frozen, GridAgreesWithPointwiseInversion) {
  auto spec = FrozenKernelSpec::bump(ScalingProfile::piecewise(0.7, 1.5), 1.0, 0.5);
  GridDensity g = density_fft(spec, 0.0, 0.5);
  for (double x : {0.0, 0.3, 2.0}) EXPECT_NEAR(g.at(x), density_direct(spec, 0.0, 0.5, x), 1e-6 * g.max_value());
}

TEST(Frozen, GradientMatchesCauchyDerivative) {
  auto spec = FrozenKernelSpec::constant(ScalingProfile::power(1.0), 1.0);
  auto gr = gradient(spec, 0.0, 0.2);
  ASSERT_EQ(gr.size(), 1u);
  const double g = M_PI * 0.2;
  double worst = 0.0, scale = 0.0;
  for (int i = 0; i < gr[0].n; ++i) {
    double x = gr[0].x(i);
    if (std::abs(x) > 5.0) continue;
    double ref = -2.0 * x * g / (M_PI * std::pow(g * g + x * x, 2));
    worst = std::max(worst, std::abs(gr[0].values[i] - ref));
    scale = std::max(scale, std::abs(ref));
  }
  EXPECT_LT(worst, 1e-6 * scale);
}

TEST(Frozen, GeneratorOnCauchyIsTimeDerivative) {
  // p_s(x) = s / (pi^2 s^2 + x^2) solves d/ds p = L p for L with kernel dz / z^2
  auto spec = FrozenKernelSpec::constant(ScalingProfile::power(1.0), 1.0);
  const double s = 0.5;
  GridDensity g = density_fft(spec, 0.0, s, {.n = 16384, .dx = 0.01});
  std::vector<int> idx;
  for (double x : {0.0, 0.3, 1.0, 3.0}) idx.push_back(g.index_of(x));
  auto one = [](double) { return 1.0; };
  auto r2 = delta_apply_many(g, spec.profile, one, idx, Branch::SecondDifference);
  auto r1 = delta_apply_many(g, spec.profile, one, idx, Branch::FirstOrder);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    double x = g.x(idx[k]);
    double ref = (x * x - M_PI * M_PI * s * s) / std::pow(M_PI * M_PI * s * s + x * x, 2);
    EXPECT_NEAR(r2[k].value, ref, 1e-3 * std::abs(ref) + 1e-5) << x;
    // symmetric kernel: both branches give the same operator
    EXPECT_NEAR(r1[k].value, r2[k].value, 1e-3 * std::abs(ref) + 1e-5) << x;
    EXPECT_GE(r2[k].abs_integral, std::abs(r2[k].value));
  }
}

TEST(Frozen, DriftVectorCase1) {
  // -(s-t) int_0^1 2b z^{-1/2} dz with b = 1/2
  auto spec = FrozenKernelSpec::asymmetric(ScalingProfile::power(0.5), 1.0, 0.5);
  EXPECT_NEAR(drift_vector(spec, 0.0, 1.0), -2.0, 1e-7);
  EXPECT_NEAR(drift_vector(spec, 0.2, 0.7), -1.0, 1e-7);
  EXPECT_EQ(drift_vector(FrozenKernelSpec::constant(ScalingProfile::power(1.0)), 0.0, 1.0), 0.0);
}

TEST(Frozen, DriftVectorCase3) {
  // (s-t) int_1^inf 2b z^{-3/2} dz = 2 with b = 1/2
  auto spec = FrozenKernelSpec::asymmetric(ScalingProfile::power(1.5), 1.0, 0.5);
  EXPECT_NEAR(drift_vector(spec, 0.0, 1.0), 2.0, 1e-7);
}

TEST(Frozen, SmallLargeDecomposition) {
  auto c = decompose_small_large(FrozenKernelSpec::constant(ScalingProfile::power(1.0)), 0.0, 1.0);
  EXPECT_NEAR(c.lambda, 2.0, 1e-8);
  auto pw = decompose_small_large(FrozenKernelSpec::constant(ScalingProfile::piecewise(0.5, 3.0)), 0.0, 1.0);
  EXPECT_NEAR(pw.lambda, 2.0 / 3.0, 1e-8);
  // the two parts add up to the full exponent
  auto spec = FrozenKernelSpec::bump(ScalingProfile::piecewise(0.7, 1.5), 1.0, 0.5);
  auto sl = decompose_small_large(spec, 0.0, 0.5);
  for (double xi : {0.3, 2.0, 9.0}) {
    cplx full = characteristic_exponent(spec, 0.0, 0.5, xi);
    EXPECT_NEAR(std::abs(sl.small(xi) + sl.large(xi) - full), 0.0, 1e-8 * std::abs(full));
  }
}

TEST(Frozen, TwoSidedRatioForCauchy) {
  // tau = 1, phi = r: p / rho = (1 + x^2) / (pi^2 + x^2), increasing in |x|
  auto spec = FrozenKernelSpec::constant(ScalingProfile::power(1.0), 1.0);
  GridDensity g = density_fft(spec, 0.0, 1.0);
  double xmax = 0.0;
  for (int i = 0; i < g.n; ++i)
    if (std::abs(g.x(i)) <= 20.0) xmax = std::max(xmax, std::abs(g.x(i)));
  auto [lo, hi] = two_sided_ratio(g, spec.profile);
  EXPECT_NEAR(lo, 1.0 / (M_PI * M_PI), 1e-6);
  EXPECT_NEAR(hi, (1 + xmax * xmax) / (M_PI * M_PI + xmax * xmax), 1e-5);
}

TEST(Frozen, UpsampleAndSpectralDerivative) {
  GridDensity g;
  g.n = 64;
  g.dx = 2 * M_PI / 64;
  g.x0 = 0.0;
  g.periodic = true;
  for (int i = 0; i < g.n; ++i) g.values.push_back(std::sin(g.x(i)) + 0.5 * std::cos(3 * g.x(i)));
  auto d1 = spectral_derivative(g, 1);
  for (int i = 0; i < g.n; ++i) EXPECT_NEAR(d1[i], std::cos(g.x(i)) - 1.5 * std::sin(3 * g.x(i)), 1e-12);
  GridDensity u = upsample(g, 4);
  ASSERT_EQ(u.n, 256);
  for (int i = 0; i < u.n; ++i) EXPECT_NEAR(u.values[i], std::sin(u.x(i)) + 0.5 * std::cos(3 * u.x(i)), 1e-12);
}

TEST(Frozen, ModelViolations) {
  auto spec = FrozenKernelSpec::constant(ScalingProfile::power(1.0));
  spec.kappa = [](double, double z) { return z > 0 ? 2.0 : 1.0; };
  spec.kappa0 = 2.0;
  spec.symmetric = false;
  try {
    validate_frozen(spec);
    FAIL() << "Case2 without odd cancellation accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Model);
  }
  spec = FrozenKernelSpec::constant(ScalingProfile::power(1.0));
  spec.kappa = [](double, double) { return 5.0; };
  EXPECT_THROW(validate_frozen(spec), Error);
  EXPECT_THROW(FrozenKernelSpec::asymmetric(ScalingProfile::power(1.0), 1.0, 1.0), Error);
}

TEST(Frozen, JsonRoundTrip) {
  auto p = ScalingProfile::piecewise(0.7, 1.5);
  auto spec = FrozenKernelSpec::bump(p, 1.0, 0.5, 0.8);
  auto back = FrozenKernelSpec::from_json(spec.to_json(), p);
  for (double z : {-1.0, 0.5, 0.9}) EXPECT_EQ(back.kappa(0.0, z), spec.kappa(0.0, z));
  EXPECT_THROW(FrozenKernelSpec::from_json({{"kappa", "mystery"}}, p), Error);
}
