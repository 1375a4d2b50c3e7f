#include <gtest/gtest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <limits>

#include "hk/error.hpp"
#include "hk/moduli.hpp"

using namespace hk;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

// integral over the real line with kinks at the sorted points
template <class F>
double line(F f, std::vector<double> kinks) {
  boost::math::quadrature::tanh_sinh<double> ts;
  boost::math::quadrature::exp_sinh<double> es;
  double v = es.integrate([&](double u) { return f(kinks.front() - u); }, 0.0, kInf);
  v += es.integrate([&](double u) { return f(kinks.back() + u); }, 0.0, kInf);
  for (std::size_t i = 0; i + 1 < kinks.size(); ++i) v += ts.integrate(f, kinks[i], kinks[i + 1]);
  return v;
}

}  // namespace

TEST(Modulus, Values) {
  auto m = Modulus::family(2.0, 0.5, 1.0);
  EXPECT_NEAR(m(0.25), 2.0 * 0.5 * std::log(5.0), 1e-14);
  EXPECT_NEAR(m(3.0), m(1.0), 1e-15);  // constant beyond 1
  EXPECT_NEAR(Modulus::power(0.5).squared()(0.25), 0.25, 1e-15);
  EXPECT_NEAR(Modulus::max_of(Modulus::power(0.5), Modulus::constant(0.1))(1e-4), 0.1, 1e-15);
  EXPECT_THROW(m(0.0), Error);
}

TEST(Modulus, GammaPowerClosedForm) {
  for (double eta : {0.25, 0.5, 1.0})
    for (double t : {1e-3, 0.1, 1.0}) EXPECT_NEAR(gamma_ell(Modulus::power(eta), t), std::pow(t, eta) / eta, 1e-9);
}

TEST(Modulus, GammaLogPowerAgainstQuadrature) {
  // s = t e^{-v}; beyond v = V the integrand is (v - log t)^-2 to machine precision
  auto m = Modulus::log_power(-2.0);
  boost::math::quadrature::tanh_sinh<double> ts;
  const double V = 200.0;
  for (double t : {1e-2, 0.5}) {
    double q = ts.integrate([&](double v) { return std::pow(std::log1p(std::exp(v) / t), -2.0); }, 0.0, V);
    q += 1.0 / (V - std::log(t));
    EXPECT_NEAR(gamma_ell(m, t), q, 1e-6 * q);
  }
}

TEST(Modulus, DiniDetection) {
  EXPECT_TRUE(check_dini(Modulus::power(0.3)));
  EXPECT_TRUE(check_dini(Modulus::log_power(-2.0)));
  EXPECT_FALSE(check_dini(Modulus::log_power(-1.0)));
  EXPECT_FALSE(check_dini(Modulus::constant(1.0)));
  EXPECT_THROW(gamma_ell(Modulus::log_power(-1.0), 0.5), Error);
}

TEST(Modulus, SlowlyVarying) {
  EXPECT_NEAR(s0_limit(Modulus::power(0.5), 4.0), 2.0, 1e-6);
  EXPECT_NEAR(s0_limit(Modulus::log_power(-2.0), 4.0), 1.0, 1e-3);
  EXPECT_TRUE(check_slowly_varying(Modulus::log_power(-2.0)));
  EXPECT_FALSE(check_slowly_varying(Modulus::power(0.5)));
}

TEST(Modulus, TagsFollowFamily) {
  EXPECT_TRUE(Modulus::power(0.5).tags().R);
  EXPECT_NEAR(Modulus::power(0.5).tags().alpha, 0.5, 0.0);
  EXPECT_TRUE(Modulus::log_power(-2.0).tags().S0);
  EXPECT_TRUE(Modulus::log_power(-2.0).tags().D0);
}

TEST(Modulus, EllPhiAndGamma) {
  auto p = ScalingProfile::power(1.5);
  auto m = Modulus::power(0.3);
  for (double t : {1e-3, 0.2}) {
    EXPECT_NEAR(ell_phi(m, p, t), std::pow(t, 0.3 / 1.5), 1e-12);
    EXPECT_NEAR(gamma_ell_phi(m, p, t), 1.5 / 0.3 * std::pow(t, 0.2), 1e-8);
  }
}

TEST(Modulus, MPhiEllEqualsThreeForSqrtAndLinear) {
  auto p = ScalingProfile::power(1.0);
  auto m = Modulus::power(0.5);
  for (double t : {1e-4, 0.01, 0.3, 1.0}) {
    MResult r = M_phi_ell(m, p, t);
    ASSERT_FALSE(r.divergent);
    EXPECT_NEAR(r.value, 3.0, 1e-6) << t;
  }
}

TEST(Modulus, MPhiEllPowerClosedForm) {
  // alpha t^{alpha-1} (1/(alpha+eta-1) + 1/(2 alpha - 1))
  auto p = ScalingProfile::power(1.5);
  auto m = Modulus::power(0.3);
  for (double t : {1e-3, 0.5}) {
    double closed = 1.5 * std::pow(t, 0.5) * (1.0 / 0.8 + 1.0 / 2.0);
    EXPECT_NEAR(M_phi_ell(m, p, t).value, closed, 1e-6 * closed);
  }
}

TEST(Modulus, MPhiEllDivergesBelowHalf) {
  EXPECT_TRUE(M_phi_ell(Modulus::power(0.3), ScalingProfile::power(0.5), 0.5).divergent);
  EXPECT_TRUE(M_phi_ell(Modulus::power(0.3), ScalingProfile::power(0.6), 0.5).divergent);
}

TEST(Modulus, IntegralHAgainstQuadrature) {
  auto p = ScalingProfile::power(1.0);
  auto m = Modulus::power(0.5);
  for (double t : {0.01, 0.3}) {
    const double k = 1.0 - t;  // ell flat beyond 1
    double q = line([&](double x) { return h_ell_phi(m, p, t, std::fabs(x)); }, {-k, 0.0, k});
    EXPECT_NEAR(integral_h(m, p, t), q, 1e-7 * q);
  }
}

TEST(Modulus, ConvolutionAgainstQuadrature) {
  auto p = ScalingProfile::power(1.0);
  auto m = Modulus::power(0.5);
  const double t = 0.2, s = 0.05;
  for (double x : {0.0, 0.03, 0.7}) {
    auto f = [&](double y) { return h_ell_phi(m, p, t - s, std::fabs(x - y)) * h_ell_phi(m, p, s, std::fabs(y)); };
    std::vector<double> k{std::min(0.0, x), std::max(0.0, x)};
    if (x == 0.0) k = {-1.0, 0.0, 1.0};
    double q = line(f, k);
    EXPECT_NEAR(convolve_h(m, m, p, t, s, x), q, 1e-6 * q) << x;
  }
}

TEST(Modulus, ConvolutionBoundHolds) {
  auto p = ScalingProfile::power(1.0);
  auto m = Modulus::power(0.5);
  std::vector<double> xs{0.0, 0.01, 0.1, 1.0, 10.0};
  ConvolutionReport r = verify_convolution(m, m, p, 0.5, 0.2, xs);
  EXPECT_TRUE(std::isfinite(r.dk1_ratio));
  EXPECT_GT(r.dk1_ratio, 0.0);
  EXPECT_LT(r.dk1_ratio, 50.0);
  // int h dx is comparable to ell_phi(t)/t
  EXPECT_GT(r.dk2_ratio, 0.1);
  EXPECT_LT(r.dk2_ratio, 10.0);
  EXPECT_THROW(verify_convolution(Modulus::power(1.0), m, p, 0.5, 0.2, xs), Error);
}

TEST(Modulus, PotterBound) {
  auto m = Modulus::log_power(-2.0);
  auto ell = [](double t) { return std::pow(std::log1p(1.0 / t), -2.0); };
  std::vector<double> lat;
  for (int k = -12; k <= 0; ++k) lat.push_back(std::pow(10.0, k));
  double brute = 0.0;
  for (double s : lat)
    for (double t : lat) brute = std::max(brute, ell(s) / ell(t) * std::pow(std::max(s / t, t / s), -0.1));
  double C = potter_bound(m, 0.1, lat);
  EXPECT_NEAR(C, brute, 1e-10 * brute);
  EXPECT_GE(C, 1.0);
  EXPECT_LE(potter_bound(m, 0.2, lat), C);
  EXPECT_THROW(potter_bound(Modulus::power(0.5), 0.1, lat), Error);
}

TEST(Modulus, JsonRoundTrip) {
  auto m = Modulus::from_json({{"modulus", "power"}, {"eta", 0.4}, {"c", 2.0}});
  auto n = Modulus::from_json(m.to_json());
  EXPECT_DOUBLE_EQ(m(0.3), n(0.3));
  EXPECT_THROW(Modulus::from_json({{"modulus", "unknown"}}), Error);
}
