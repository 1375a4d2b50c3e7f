#include "hk/frozen.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>

#include "hk/error.hpp"

namespace hk {

namespace {

constexpr double kPi = 3.14159265358979323846;
const double kLn2 = std::log(2.0);

DepthGrid light_depth() {
  DepthGrid g;
  g.fine_width = kLn2 / 4.0;
  g.fine_extent = 8.0 * kLn2;
  g.growth = 1.3;
  g.vmax = 800.0;
  g.order = 10;
  return g;
}

std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

// log(1 - cos u) for 0 < u <= pi/2, stable as u -> 0
double log_one_minus_cos(double lu) {
  double u = std::exp(lu);
  if (u < 1e-3) {
    double x = 0.5 * u;
    return kLn2 + 2.0 * ((lu - kLn2) + std::log1p(-x * x / 6.0 + x * x * x * x / 120.0));
  }
  double s = std::sin(0.5 * u);
  return kLn2 + 2.0 * std::log(s);
}

// log(1 - J0(u)) for small u
double log_one_minus_j0(double lu) {
  double ly = 2.0 * (lu - kLn2);
  double y = std::exp(ly);
  // 1 - J0 = y (1 - y/4 + y^2/36 - ...)
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 14; ++k) {
    term *= -y / ((k + 1.0) * (k + 1.0));
    sum += term;
  }
  return ly + std::log(sum);
}

double one_minus_j0(double u) {
  if (u < 0.5) return std::exp(log_one_minus_j0(std::log(u)));
  return 1.0 - std::cyl_bessel_j(0.0, u);
}

// sin u - u = -(u^3/6)(1 - u^2/20 + u^4/840 - u^6/60480 + ...)
double sin_minus_u_series(double u) {
  double u2 = u * u;
  return -(u * u2 / 6.0) * (1.0 - u2 / 20.0 * (1.0 - u2 / 42.0 * (1.0 - u2 / 72.0 * (1.0 - u2 / 110.0))));
}

std::vector<double> sorted_breaks(const ZKernel& k) {
  std::vector<double> b;
  for (double x : k.breaks)
    if (x > 0.0 && std::isfinite(x)) b.push_back(x);
  b.push_back(1.0);
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

struct SymbolEngine {
  const ZKernel& k;
  const ScalingProfile& p;
  double xi, lxi;
  const SymbolQuad& q;
  const GaussRule& g;
  bool has_odd;
  double pref;  // 2 pi in the isotropic d = 2 case

  double zval(double lu) const { return std::exp(std::min(lu - lxi, 690.0)); }
  double lphi(double lu) const { return p.log_phi(lu - lxi); }

  // integrands in u (not depth), both parts
  double re_u(double u) const {
    double lu = std::log(u), z = zval(lu);
    double e = k.even(z);
    if (e == 0.0) return 0.0;
    double trig = k.radial2 ? -one_minus_j0(u) : -2.0 * std::pow(std::sin(0.5 * u), 2);
    return pref * trig * e * std::exp(-lu - lphi(lu));
  }
  double im_u(double u, double c) const {
    double lu = std::log(u), z = zval(lu);
    double o = k.odd(z);
    if (o == 0.0) return 0.0;
    double trig = (c != 0.0 && u < 0.5) ? sin_minus_u_series(u) : std::sin(u) - c * u;
    return trig * o * std::exp(-lu - lphi(lu));
  }

  // [0, a0] with u = a0 e^{-v}
  cplx near_zero(double a0, double c) const {
    const double la0 = std::log(a0);
    DepthGrid dg = light_depth();
    double re = integrate_depth(
        [&](double v) {
          double lu = la0 - v, z = zval(lu);
          double e = k.even(z);
          if (e == 0.0) return 0.0;
          double lt = k.radial2 ? log_one_minus_j0(lu) : log_one_minus_cos(lu);
          return -pref * e * std::exp(lt - lphi(lu));
        },
        dg);
    double im = 0.0;
    if (has_odd) {
      im = integrate_depth(
          [&](double v) {
            double lu = la0 - v, z = zval(lu);
            double o = k.odd(z);
            if (o == 0.0) return 0.0;
            double u = std::exp(lu), lt, sg;
            if (c == 0.0) {
              lt = u < 1e-3 ? lu + std::log1p(-u * u / 6.0) : std::log(std::sin(u));
              sg = 1.0;
            } else {
              double sm = sin_minus_u_series(u);
              lt = 3.0 * lu - std::log(6.0) + std::log(-sm / (u * u * u / 6.0));
              if (u < 1e-100) lt = 3.0 * lu - std::log(6.0);
              sg = -1.0;
            }
            return sg * o * std::exp(lt - lphi(lu));
          },
          dg);
    }
    return {re, im};
  }

  // numeric panels on [a,b], 0 < a < b
  cplx panels(double a, double b, double c) const {
    std::vector<double> pts{a};
    const double geo_end = std::min(b, kPi / 4.0);
    double x = a;
    while (x < geo_end) {
      x = std::min(2.0 * x, geo_end);
      pts.push_back(x);
    }
    if (b > x) {
      int n = std::max(1, static_cast<int>(std::ceil((b - x) / (kPi / 4.0))));
      double h = (b - x) / n;
      for (int i = 1; i <= n; ++i) pts.push_back(x + i * h);
    }
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      re += gauss_panel([&](double u) { return re_u(u); }, pts[i], pts[i + 1], g);
      if (has_odd) im += gauss_panel([&](double u) { return im_u(u, c); }, pts[i], pts[i + 1], g);
    }
    return {re, im};
  }

  // int_a^b cos(u + ph) G(u) du by repeated integration by parts; b may be inf
  template <class F>
  static double osc(const F& G, double a, double b, bool sine, double ph) {
    auto ends = [&](double u, int dir) {
      double d = 1e-3 * u;
      if (std::isfinite(b)) d = std::min(d, 0.25 * (b - a));
      double g0 = G(u), g1 = G(u + dir * d), g2 = G(u + 2 * dir * d);
      double g1p = dir * (-3.0 * g0 + 4.0 * g1 - g2) / (2.0 * d);
      double g2p = (g0 - 2.0 * g1 + g2) / (d * d);
      double s = std::sin(u + ph), co = std::cos(u + ph);
      if (!sine) return s * g0 + co * g1p - s * g2p;
      return -co * g0 + s * g1p + co * g2p;
    };
    double v = -ends(a, +1);
    if (std::isfinite(b)) v += ends(b, -1);
    return v;
  }

  // int_a^b f(u) du of a non-oscillatory f given as log-native log(f u) of lu
  template <class F>
  double smooth(const F& logfu_sign, double a, double b) const {
    if (std::isfinite(b)) {
      return integrate_uniform([&](double lu) { return logfu_sign(lu); }, std::log(a), std::log(b), kLn2 / 4.0, g);
    }
    const double la = std::log(a);
    return integrate_depth([&](double v) { return logfu_sign(la + v); }, light_depth());
  }

  cplx asymptotic(double a, double b, double c) const {
    double re = 0.0, im = 0.0;
    if (!k.radial2) {
      auto G = [&](double u) {
        double lu = std::log(u);
        return k.even(zval(lu)) * std::exp(-lu - lphi(lu));
      };
      re += osc(G, a, b, false, 0.0);
    } else {
      auto G = [&](double u) {
        double lu = std::log(u);
        return std::sqrt(2.0 / (kPi * u)) * k.even(zval(lu)) * std::exp(-lu - lphi(lu));
      };
      re += pref * osc(G, a, b, false, -kPi / 4.0);
    }
    re -= pref * smooth(
                     [&](double lu) {
                       double e = k.even(zval(lu));
                       return e == 0.0 ? 0.0 : e * std::exp(-lphi(lu));
                     },
                     a, b);
    if (has_odd) {
      auto H = [&](double u) {
        double lu = std::log(u);
        return k.odd(zval(lu)) * std::exp(-lu - lphi(lu));
      };
      im += osc(H, a, b, true, 0.0);
      if (c != 0.0)
        im -= c * smooth(
                      [&](double lu) {
                        double o = k.odd(zval(lu));
                        return o == 0.0 ? 0.0 : o * std::exp(lu - lphi(lu));
                      },
                      a, b);
    }
    return {re, im};
  }
};

}  // namespace

cplx symbol(const ZKernel& k, const ScalingProfile& p, double xi, double zlo, double zhi, const SymbolQuad& q) {
  if (!std::isfinite(xi)) fail(ErrorKind::Domain, "characteristic exponent: non-finite frequency");
  if (xi == 0.0) return {0.0, 0.0};
  const bool neg = xi < 0.0;
  xi = std::abs(xi);
  SymbolEngine E{k, p, xi, std::log(xi), q, gauss_rule(q.order), static_cast<bool>(k.odd) && !k.radial2,
                 k.radial2 ? 2.0 * kPi : 1.0};

  std::vector<double> zb = sorted_breaks(k);
  if (zlo > 0.0) zb.push_back(zlo);
  if (std::isfinite(zhi)) zb.push_back(zhi);
  std::sort(zb.begin(), zb.end());
  zb.erase(std::unique(zb.begin(), zb.end()), zb.end());

  std::vector<double> ub{0.0};
  for (double z : zb) ub.push_back(xi * z);
  ub.push_back(HUGE_VAL);

  const double U = q.U;
  cplx total{0.0, 0.0};
  for (std::size_t i = 0; i + 1 < ub.size(); ++i) {
    double a = ub[i], b = ub[i + 1];
    if (!(b > a)) continue;
    double za = a / xi, zb_ = b / xi;
    if (za < zlo * (1 - 1e-14) || zb_ > zhi * (1 + 1e-14)) continue;
    double zm = std::isfinite(zb_) ? 0.5 * (za + zb_) : 2.0 * za + 1.0;
    double c = p.compensator(zm);
    if (a < U) {
      double top = std::min(b, U);
      double lo = a;
      if (a == 0.0) {
        double a0 = std::min(top, kPi / 4.0);
        total += E.near_zero(a0, c);
        lo = a0;
      }
      if (top > lo) total += E.panels(lo, top, c);
    }
    if (b > U) total += E.asymptotic(std::max(a, U), b, c);
  }
  if (!std::isfinite(total.real()) || !std::isfinite(total.imag()))
    fail(ErrorKind::Numeric, "characteristic exponent: non-finite value");
  return neg ? std::conj(total) : total;
}

// ---------------------------------------------------------------- specs

FrozenKernelSpec FrozenKernelSpec::constant(const ScalingProfile& p, double c) {
  if (!(c > 0.0)) fail(ErrorKind::Domain, "constant kappa must be positive");
  FrozenKernelSpec s;
  s.profile = p;
  s.kappa = [c](double, double) { return c; };
  s.kappa0 = std::max(c, 1.0 / c);
  s.id = "const(" + std::to_string(c) + ")";
  s.params = {{"kappa", "constant"}, {"c", c}};
  return s;
}

FrozenKernelSpec FrozenKernelSpec::asymmetric(const ScalingProfile& p, double a, double b) {
  if (!(a - std::abs(b) > 0.0)) fail(ErrorKind::Domain, "asymmetric kappa must stay positive");
  FrozenKernelSpec s;
  s.profile = p;
  s.kappa = [a, b](double, double z) { return z > 0 ? a + b : (z < 0 ? a - b : a); };
  double hi = a + std::abs(b), lo = a - std::abs(b);
  s.kappa0 = std::max(hi, 1.0 / lo);
  s.symmetric = b == 0.0;
  s.id = "asym(" + std::to_string(a) + "," + std::to_string(b) + ")";
  s.params = {{"kappa", "asymmetric"}, {"a", a}, {"b", b}};
  return s;
}

FrozenKernelSpec FrozenKernelSpec::bump(const ScalingProfile& p, double base, double bump, double radius) {
  if (!(base > 0.0) || !(base + bump > 0.0) || !(radius > 0.0)) fail(ErrorKind::Domain, "bump kappa must stay positive");
  FrozenKernelSpec s;
  s.profile = p;
  s.kappa = [base, bump, radius](double, double z) { return std::abs(z) <= radius ? base + bump : base; };
  double hi = std::max(base, base + bump), lo = std::min(base, base + bump);
  s.kappa0 = std::max(hi, 1.0 / lo);
  s.z_breaks = {radius};
  s.id = "bump(" + std::to_string(base) + "," + std::to_string(bump) + ")";
  s.params = {{"kappa", "bump"}, {"base", base}, {"bump", bump}, {"radius", radius}};
  return s;
}

FrozenKernelSpec FrozenKernelSpec::time_sine(const ScalingProfile& p, double c, double amp, double period) {
  if (!(c > 0.0) || !(std::abs(amp) < 1.0) || !(period > 0.0)) fail(ErrorKind::Domain, "time_sine: bad parameters");
  FrozenKernelSpec s;
  s.profile = p;
  s.kappa = [c, amp, period](double t, double) { return c * (1.0 + amp * std::sin(2.0 * kPi * t / period)); };
  double hi = c * (1 + std::abs(amp)), lo = c * (1 - std::abs(amp));
  s.kappa0 = std::max(hi, 1.0 / lo);
  s.time_homogeneous = amp == 0.0;
  s.id = "time_sine(" + std::to_string(c) + "," + std::to_string(amp) + ")";
  s.params = {{"kappa", "time_sine"}, {"c", c}, {"amp", amp}, {"period", period}};
  return s;
}

FrozenKernelSpec FrozenKernelSpec::from_json(const nlohmann::json& j, const ScalingProfile& p) {
  std::string fam = j.value("kappa", "constant");
  FrozenKernelSpec s;
  if (fam == "constant")
    s = constant(p, j.value("c", 1.0));
  else if (fam == "asymmetric")
    s = asymmetric(p, j.value("a", 1.0), j.value("b", 0.0));
  else if (fam == "bump")
    s = bump(p, j.value("base", 1.0), j.value("bump", 0.0), j.value("radius", 1.0));
  else if (fam == "time_sine")
    s = time_sine(p, j.value("c", 1.0), j.value("amp", 0.0), j.value("period", 1.0));
  else
    fail(ErrorKind::Config, "unknown kappa family '" + fam + "'");
  if (j.contains("kappa0")) s.kappa0 = j.at("kappa0").get<double>();
  if (j.contains("id")) s.id = j.at("id").get<std::string>();
  return s;
}

nlohmann::json FrozenKernelSpec::to_json() const {
  nlohmann::json j = params;
  j["kappa0"] = kappa0;
  j["id"] = id;
  j["profile"] = profile.to_json();
  return j;
}

void validate_frozen(const FrozenKernelSpec& spec, double t0, double t1) {
  if (!spec.kappa) fail(ErrorKind::Model, "frozen kernel: kappa missing");
  const double k0 = spec.kappa0;
  std::vector<double> zs;
  for (int e = -30; e <= 30; ++e) zs.push_back(std::ldexp(1.0, e));
  for (double b : spec.z_breaks)
    for (double f : {1 - 1e-9, 1.0, 1 + 1e-9}) zs.push_back(b * f);
  for (int i = 0; i <= 16; ++i) {
    double t = t0 + (t1 - t0) * i / 16.0;
    for (double z : zs)
      for (double sg : {1.0, -1.0}) {
        if (spec.d() == 2 && sg < 0) continue;
        double v = spec.kappa(t, sg * z);
        if (!(v >= 1.0 / k0 * (1 - 1e-12) && v <= k0 * (1 + 1e-12)))
          fail(ErrorKind::Model, "kappa(" + std::to_string(t) + "," + std::to_string(sg * z) + ") = " +
                                     std::to_string(v) + " outside [1/kappa0, kappa0]");
      }
  }
  if (spec.d() == 1 && spec.profile.case_tag() == CaseTag::Case2 && !spec.symmetric) {
    const GaussRule& g = gauss_rule(10);
    for (int i = 0; i <= 4; ++i) {
      double t = t0 + (t1 - t0) * i / 4.0;
      double acc = 0.0, prev = 0.0;
      for (int e = -40; e <= 0; ++e) {
        double r = std::ldexp(1.0, e);
        acc += gauss_panel([&](double z) { return z * (spec.kappa(t, z) - spec.kappa(t, -z)); }, prev, r, g);
        prev = r;
        if (std::abs(acc) > 1e-8 * r * r)
          fail(ErrorKind::Model, "Case2 kernel without odd cancellation: int_{|z|<=" + std::to_string(r) +
                                     "} z kappa dz = " + std::to_string(acc));
      }
    }
  }
}

FrozenKernelSpec rescale_frozen(const FrozenKernelSpec& spec, double t, double s) {
  if (!(s > t)) fail(ErrorKind::Domain, "rescale: need s > t");
  const double tau = s - t, sigma = spec.profile.phi_inverse(tau);
  FrozenKernelSpec r = spec;
  r.profile = spec.profile.rescaled(sigma);
  auto k = spec.kappa;
  r.kappa = [k, t, tau, sigma](double u, double z) { return k(t + tau * u, sigma * z); };
  for (auto& b : r.z_breaks) b /= sigma;
  r.id = spec.id + "~";
  return r;
}

// ---------------------------------------------------------------- exponent

ZKernel averaged_kernel(const FrozenKernelSpec& spec, double t, double s) {
  ZKernel zk;
  zk.breaks = spec.z_breaks;
  for (double b : spec.profile.kinks()) zk.breaks.push_back(b);
  std::function<double(double)> kap;
  auto kappa = spec.kappa;
  if (spec.time_homogeneous || !(s > t)) {
    kap = [kappa, t](double z) { return kappa(t, z); };
  } else {
    auto avg = [&](int n, double z) {
      const GaussRule& g = gauss_rule(n);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.x.size(); ++i) acc += 0.5 * g.w[i] * kappa(t + (s - t) * 0.5 * (1 + g.x[i]), z);
      return acc;
    };
    int n = 16;
    for (;; n *= 2) {
      if (n > 512) fail(ErrorKind::Numeric, "time average of kappa does not settle");
      double worst = 0.0;
      for (int e = -20; e <= 20; ++e)
        for (double sg : {1.0, -1.0}) {
          double z = sg * std::ldexp(1.0, e);
          worst = std::max(worst, std::abs(avg(n, z) - avg(2 * n, z)));
        }
      if (worst <= 1e-9) break;
    }
    const GaussRule& g = gauss_rule(n);
    std::vector<double> ts(g.x.size()), ws(g.x.size());
    for (std::size_t i = 0; i < ts.size(); ++i) {
      ts[i] = t + (s - t) * 0.5 * (1 + g.x[i]);
      ws[i] = 0.5 * g.w[i];
    }
    kap = [kappa, ts, ws](double z) {
      double acc = 0.0;
      for (std::size_t i = 0; i < ts.size(); ++i) acc += ws[i] * kappa(ts[i], z);
      return acc;
    };
  }
  if (spec.d() == 2) {
    zk.radial2 = true;
    zk.even = kap;
  } else {
    zk.even = [kap](double z) { return kap(z) + kap(-z); };
    if (!spec.symmetric) zk.odd = [kap](double z) { return kap(z) - kap(-z); };
  }
  return zk;
}

std::function<cplx(double)> exponent_function(const FrozenKernelSpec& spec, double t, double s) {
  if (!(s > t)) fail(ErrorKind::Domain, "need t < s");
  if (spec.d() != 1 && spec.d() != 2) fail(ErrorKind::Domain, "only d = 1 and d = 2 are supported");
  auto zk = std::make_shared<ZKernel>(averaged_kernel(spec, t, s));
  auto prof = std::make_shared<ScalingProfile>(spec.profile);
  const double tau = s - t;
  return [zk, prof, tau](double xi) { return tau * symbol(*zk, *prof, xi); };
}

namespace {

std::function<cplx(double)> exponent_fn(const FrozenKernelSpec& spec, double t, double s) {
  return exponent_function(spec, t, s);
}

}  // namespace

double frequency_cutoff(const std::function<cplx(double)>& psi, double start, double decay);

namespace {

double find_cutoff(const std::function<cplx(double)>& psi, double start, double decay) {
  double x = start;
  int it = 0;
  if (psi(x).real() > -decay) {
    while (psi(x).real() > -decay) {
      x *= 2.0;
      if (++it > 200) fail(ErrorKind::Config, "exponent does not decay; no frequency cutoff");
    }
  } else {
    while (psi(0.5 * x).real() <= -decay) {
      x *= 0.5;
      if (++it > 200) fail(ErrorKind::Config, "frequency cutoff search failed");
    }
  }
  double lo = std::log(0.5 * x), hi = std::log(x);
  for (int i = 0; i < 40; ++i) {
    double m = 0.5 * (lo + hi);
    if (psi(std::exp(m)).real() > -decay)
      lo = m;
    else
      hi = m;
  }
  return std::exp(hi);
}

// first-order tail density tau kbar(z)/(|z| phi(|z|)) in d = 1
double tail_density(const ZKernel& zk, const ScalingProfile& p, double tau, double z) {
  double a = std::abs(z);
  if (a == 0.0) return 0.0;
  double kb = zk.odd ? 0.5 * (zk.even(a) + (z > 0 ? zk.odd(a) : -zk.odd(a))) : 0.5 * zk.even(a);
  return tau * kb * std::exp(-std::log(a) - p.log_phi(std::log(a)));
}

// subtract periodic images: p_fft(x) = sum_k p(x + kL); images approximated by the tail density
void alias_correct(std::vector<double>& v, int n, double dx, double x0, const ZKernel& zk, const ScalingProfile& p,
                   double tau, std::vector<double>* deriv = nullptr) {
  const double L = n * dx;
  const int K = 64;
  // remainder beyond K images, nearly independent of x
  double rem = 0.0;
  for (int sg : {1, -1})
    rem += integrate_tail([&](double k) { return tail_density(zk, p, tau, sg * k * L); }, K + 0.5, 1.0, light_depth());
  for (int j = 0; j < n; ++j) {
    double x = x0 + j * dx;
    double acc = 0.0, dacc = 0.0;
    for (int k = 1; k <= K; ++k)
      for (int sg : {1, -1}) {
        double y = x + sg * k * L;
        acc += tail_density(zk, p, tau, y);
        if (deriv) {
          double h = 1e-5 * std::abs(y);
          dacc += (tail_density(zk, p, tau, y + h) - tail_density(zk, p, tau, y - h)) / (2 * h);
        }
      }
    v[j] -= acc + rem;
    if (deriv) (*deriv)[j] -= dacc;
  }
}

double outside_mass_estimate(const ZKernel& zk, const ScalingProfile& p, double tau, double X) {
  double m = 0.0;
  for (int sg : {1, -1}) m += integrate_tail([&](double z) { return tail_density(zk, p, tau, sg * z); }, X, X, light_depth());
  return m;
}

struct Grid1 {
  int n;
  double dx;
};

Grid1 choose_grid(const std::function<cplx(double)>& psi, double sigma, const GridConfig& cfg, int d) {
  Grid1 g{cfg.n > 0 ? cfg.n : (d == 1 ? 4096 : 512), 0.0};
  if (g.n < 8 || (g.n & (g.n - 1))) fail(ErrorKind::Config, "grid size must be a power of two >= 8");
  double xi_auto = find_cutoff(psi, 1.0 / sigma, cfg.decay);
  if (cfg.dx > 0.0) {
    double xi_grid = kPi / cfg.dx;
    if (d == 1 && psi(xi_grid).real() > -cfg.decay)
      fail(ErrorKind::Config, "grid step too coarse: exp(Psi) has not decayed at pi/dx; need dx <= " +
                                  std::to_string(kPi / xi_auto));
    g.dx = cfg.dx;
  } else {
    g.dx = kPi / xi_auto;
  }
  return g;
}

// p_j = (dxi / 2 pi) sum_m exp(Psi(xi_m)) e^{-i x_j xi_m}, x_j = (j - n/2) dx
std::vector<double> fft_1d(const std::function<cplx(double)>& psi, int n, double dx, int deriv_order) {
  const double dxi = 2.0 * kPi / (n * dx);
  const int h = n / 2 + 1;
  fftw_complex* in;
  double* out;
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    in = fftw_alloc_complex(h);
    out = fftw_alloc_real(n);
    plan = fftw_plan_dft_c2r_1d(n, in, out, FFTW_ESTIMATE);
  }
  for (int m = 0; m < h; ++m) {
    double xi = m * dxi;
    cplx f = std::exp(psi(xi));
    if (deriv_order == 1) f *= cplx(0.0, -xi);
    if (deriv_order == 1 && m == n / 2) f = 0.0;
    f = std::conj(f) * ((m % 2) ? -1.0 : 1.0);
    in[m][0] = f.real();
    in[m][1] = f.imag();
  }
  fftw_execute(plan);
  std::vector<double> v(n);
  for (int j = 0; j < n; ++j) v[j] = out[j] * dxi / (2.0 * kPi);
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  return v;
}

std::vector<double> fft_2d(const std::function<cplx(double)>& psi_radial, int n, double dx) {
  const double dxi = 2.0 * kPi / (n * dx);
  const int h = n / 2 + 1;
  // tabulate the radial exponent on a log grid and interpolate
  const double rmin = 0.5 * dxi, rmax = std::sqrt(2.0) * (n / 2 + 1) * dxi;
  const int nt = 600;
  std::vector<double> lr(nt), lv(nt);
  for (int i = 0; i < nt; ++i) {
    lr[i] = std::log(rmin) + (std::log(rmax) - std::log(rmin)) * i / (nt - 1);
    double re = psi_radial(std::exp(lr[i])).real();
    lv[i] = std::log(std::max(-re, 1e-300));
  }
  MonotoneSpline sp(lr, lv);
  fftw_complex* in;
  double* out;
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    in = fftw_alloc_complex(static_cast<std::size_t>(n) * h);
    out = fftw_alloc_real(static_cast<std::size_t>(n) * n);
    plan = fftw_plan_dft_c2r_2d(n, n, in, out, FFTW_ESTIMATE);
  }
  for (int a = 0; a < n; ++a) {
    int ma = a <= n / 2 ? a : a - n;
    for (int b = 0; b < h; ++b) {
      double r = dxi * std::hypot(static_cast<double>(ma), static_cast<double>(b));
      double f = r == 0.0 ? 1.0 : std::exp(-std::exp(sp(std::log(r))));
      double sg = ((ma + b) % 2 == 0) ? 1.0 : -1.0;
      in[static_cast<std::size_t>(a) * h + b][0] = f * sg;
      in[static_cast<std::size_t>(a) * h + b][1] = 0.0;
    }
  }
  fftw_execute(plan);
  std::vector<double> v(static_cast<std::size_t>(n) * n);
  const double sc = dxi * dxi / (4.0 * kPi * kPi);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = out[i] * sc;
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  return v;
}

GridDensity make_grid(const FrozenKernelSpec& spec, double t, double s, int n, double dx) {
  GridDensity g;
  g.d = spec.d();
  g.n = n;
  g.dx = dx;
  g.x0 = -(n / 2) * dx;
  g.periodic = false;
  g.scale = spec.profile.phi_inverse(s - t);
  g.t = t;
  g.s = s;
  g.profile_id = spec.profile.id();
  return g;
}

}  // namespace

cplx characteristic_exponent(const FrozenKernelSpec& spec, double t, double s, double xi) {
  if (spec.d() != 1) fail(ErrorKind::Domain, "scalar frequency requires d = 1");
  return exponent_fn(spec, t, s)(xi);
}

cplx characteristic_exponent(const FrozenKernelSpec& spec, double t, double s, std::array<double, 2> xi) {
  if (spec.d() != 2) fail(ErrorKind::Domain, "frequency pair requires d = 2");
  return exponent_fn(spec, t, s)(std::hypot(xi[0], xi[1]));
}

// ---------------------------------------------------------------- densities

GridDensity density_fft(const FrozenKernelSpec& spec, double t, double s, const GridConfig& cfg) {
  auto psi = exponent_fn(spec, t, s);
  const double sigma = spec.profile.phi_inverse(s - t);
  Grid1 gr = choose_grid(psi, sigma, cfg, spec.d());
  GridDensity g = make_grid(spec, t, s, gr.n, gr.dx);
  if (spec.d() == 1) {
    g.values = fft_1d(psi, gr.n, gr.dx, 0);
    ZKernel zk = averaged_kernel(spec, t, s);
    alias_correct(g.values, g.n, g.dx, g.x0, zk, spec.profile, s - t);
    g.outside_mass = outside_mass_estimate(zk, spec.profile, s - t, 0.5 * g.n * g.dx);
  } else {
    g.values = fft_2d(psi, gr.n, gr.dx);
  }
  return g;
}

GridDensity density_scaled_grid(const FrozenKernelSpec& spec, double t, double s, const GridConfig& cfg) {
  if (spec.d() != 1) fail(ErrorKind::Domain, "density_scaled_grid: d = 1 only");
  auto psi = exponent_fn(spec, t, s);
  const double sigma = spec.profile.phi_inverse(s - t);
  Grid1 gr = choose_grid(psi, sigma, cfg, 1);
  FrozenKernelSpec u = rescale_frozen(spec, t, s);
  auto psi_u = exponent_fn(u, 0.0, 1.0);
  GridDensity g = make_grid(spec, t, s, gr.n, gr.dx);
  // grid x~ = x / sigma, hence xi~ = sigma xi
  std::vector<double> v = fft_1d(psi_u, gr.n, gr.dx / sigma, 0);
  ZKernel zk = averaged_kernel(u, 0.0, 1.0);
  alias_correct(v, gr.n, gr.dx / sigma, g.x0 / sigma, zk, u.profile, 1.0);
  g.values.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) g.values[i] = v[i] / sigma;
  g.outside_mass = outside_mass_estimate(zk, u.profile, 1.0, 0.5 * g.n * g.dx / sigma);
  return g;
}

namespace {

// nodes and weights for int_0^Xi f(xi) dxi with geometric refinement at 0
void xi_nodes(double Xi, double xmax, std::vector<double>& nodes, std::vector<double>& weights) {
  const GaussRule& g = gauss_rule(10);
  std::vector<double> pts{Xi * std::ldexp(1.0, -60)};
  double x = pts.back();
  while (x < Xi / 64.0) {
    x = std::min(2.0 * x, Xi / 64.0);
    pts.push_back(x);
  }
  double w = Xi / 64.0;
  if (xmax > 0.0) w = std::min(w, kPi / (4.0 * xmax));
  int n = static_cast<int>(std::ceil((Xi - x) / w));
  double h = (Xi - x) / n;
  for (int i = 1; i <= n; ++i) pts.push_back(x + i * h);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    double c = 0.5 * (pts[i] + pts[i + 1]), hh = 0.5 * (pts[i + 1] - pts[i]);
    for (std::size_t k = 0; k < g.x.size(); ++k) {
      nodes.push_back(c + hh * g.x[k]);
      weights.push_back(hh * g.w[k]);
    }
  }
}

}  // namespace

double frequency_cutoff(const std::function<cplx(double)>& psi, double start, double decay) {
  return find_cutoff(psi, start, decay);
}

void frequency_nodes(double Xi, double xmax, std::vector<double>& nodes, std::vector<double>& weights) {
  xi_nodes(Xi, xmax, nodes, weights);
}

std::vector<double> density_direct_many(const FrozenKernelSpec& spec, double t, double s, const std::vector<double>& xs) {
  if (spec.d() != 1) fail(ErrorKind::Domain, "density_direct: d = 1 only");
  auto psi = exponent_fn(spec, t, s);
  const double sigma = spec.profile.phi_inverse(s - t);
  double Xi = find_cutoff(psi, 1.0 / sigma, 36.8);
  double xmax = 0.0;
  for (double x : xs) xmax = std::max(xmax, std::abs(x));
  std::vector<double> nodes, weights;
  xi_nodes(Xi, xmax, nodes, weights);
  std::vector<cplx> F(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) F[i] = std::exp(psi(nodes[i]));
  std::vector<double> out(xs.size());
  for (std::size_t j = 0; j < xs.size(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * (std::exp(cplx(0.0, -xs[j] * nodes[i])) * F[i]).real();
    out[j] = acc / kPi;
  }
  return out;
}

double density_direct(const FrozenKernelSpec& spec, double t, double s, double x) {
  return density_direct_many(spec, t, s, {x})[0];
}

double density_scaled(const FrozenKernelSpec& spec, double t, double s, double x) {
  const double sigma = spec.profile.phi_inverse(s - t);
  FrozenKernelSpec u = rescale_frozen(spec, t, s);
  return density_direct(u, 0.0, 1.0, x / sigma) / sigma;
}

std::vector<double> cdf_direct_many(const FrozenKernelSpec& spec, double t, double s, const std::vector<double>& xs) {
  if (spec.d() != 1) fail(ErrorKind::Domain, "cdf_direct: d = 1 only");
  auto psi = exponent_fn(spec, t, s);
  const double sigma = spec.profile.phi_inverse(s - t);
  double Xi = find_cutoff(psi, 1.0 / sigma, 36.8);
  double xmax = 0.0;
  for (double x : xs) xmax = std::max(xmax, std::abs(x));
  std::vector<double> nodes, weights;
  xi_nodes(Xi, xmax, nodes, weights);
  std::vector<cplx> F(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) F[i] = std::exp(psi(nodes[i]));
  std::vector<double> out(xs.size());
  for (std::size_t j = 0; j < xs.size(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      acc += weights[i] * (std::exp(cplx(0.0, -xs[j] * nodes[i])) * F[i]).imag() / nodes[i];
    out[j] = 0.5 - acc / kPi;
  }
  return out;
}

double cdf_direct(const FrozenKernelSpec& spec, double t, double s, double x) {
  return cdf_direct_many(spec, t, s, {x})[0];
}

std::vector<GridDensity> gradient(const FrozenKernelSpec& spec, double t, double s, const GridConfig& cfg) {
  if (spec.d() != 1) fail(ErrorKind::Domain, "gradient: d = 1 only");
  auto psi = exponent_fn(spec, t, s);
  const double sigma = spec.profile.phi_inverse(s - t);
  Grid1 gr = choose_grid(psi, sigma, cfg, 1);
  GridDensity g = make_grid(spec, t, s, gr.n, gr.dx);
  std::vector<double> v = fft_1d(psi, gr.n, gr.dx, 0);
  g.values = fft_1d(psi, gr.n, gr.dx, 1);
  ZKernel zk = averaged_kernel(spec, t, s);
  alias_correct(v, g.n, g.dx, g.x0, zk, spec.profile, s - t, &g.values);
  return {g};
}

// ---------------------------------------------------------------- grid utilities

int GridDensity::index_of(double x) const { return static_cast<int>(std::lround((x - x0) / dx)); }

double GridDensity::mass() const {
  double s = std::accumulate(values.begin(), values.end(), 0.0);
  return s * std::pow(dx, d);
}

double GridDensity::min_value() const { return *std::min_element(values.begin(), values.end()); }
double GridDensity::max_value() const { return *std::max_element(values.begin(), values.end()); }

double GridDensity::at(double x) const {
  if (d != 1) fail(ErrorKind::Domain, "GridDensity::at: d = 1 only");
  double u = (x - x0) / dx;
  int i0 = static_cast<int>(std::floor(u)) - 2;
  double acc = 0.0;
  for (int a = 0; a < 6; ++a) {
    int ia = i0 + a;
    double w = 1.0;
    for (int b = 0; b < 6; ++b)
      if (b != a) w *= (u - (i0 + b)) / static_cast<double>(a - b);
    double v;
    if (periodic)
      v = values[((ia % n) + n) % n];
    else
      v = (ia >= 0 && ia < n) ? values[ia] : 0.0;
    acc += w * v;
  }
  return acc;
}

void GridDensity::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) fail(ErrorKind::Config, "cannot write " + path);
  f.precision(17);
  if (d == 1) {
    f << "x,p\n";
    for (int i = 0; i < n; ++i) f << x(i) << ',' << values[i] << '\n';
  } else {
    f << "x1,x2,p\n";
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) f << x(i) << ',' << x(j) << ',' << values[static_cast<std::size_t>(i) * n + j] << '\n';
  }
}

std::vector<double> spectral_derivative(const GridDensity& g, int order) {
  if (g.d != 1) fail(ErrorKind::Domain, "spectral_derivative: d = 1 only");
  const int n = g.n, h = n / 2 + 1;
  double* buf;
  fftw_complex* c;
  fftw_plan fw, bw;
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    buf = fftw_alloc_real(n);
    c = fftw_alloc_complex(h);
    fw = fftw_plan_dft_r2c_1d(n, buf, c, FFTW_ESTIMATE);
    bw = fftw_plan_dft_c2r_1d(n, c, buf, FFTW_ESTIMATE);
  }
  std::copy(g.values.begin(), g.values.end(), buf);
  fftw_execute(fw);
  const double L = n * g.dx;
  for (int k = 0; k < h; ++k) {
    double xi = 2.0 * kPi * k / L;
    cplx f(c[k][0], c[k][1]);
    cplx m = std::pow(cplx(0.0, xi), order);
    if (k == n / 2 && order % 2 == 1) m = 0.0;
    f *= m / static_cast<double>(n);
    c[k][0] = f.real();
    c[k][1] = f.imag();
  }
  fftw_execute(bw);
  std::vector<double> out(buf, buf + n);
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(fw);
    fftw_destroy_plan(bw);
    fftw_free(buf);
    fftw_free(c);
  }
  return out;
}

GridDensity upsample(const GridDensity& g, int factor) {
  if (g.d != 1) fail(ErrorKind::Domain, "upsample: d = 1 only");
  if (factor < 1) fail(ErrorKind::Domain, "upsample: factor must be positive");
  if (factor == 1) return g;
  const int n = g.n, N = n * factor, h = n / 2 + 1, H = N / 2 + 1;
  double *buf, *big;
  fftw_complex *c, *C;
  fftw_plan fw, bw;
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    buf = fftw_alloc_real(n);
    big = fftw_alloc_real(N);
    c = fftw_alloc_complex(h);
    C = fftw_alloc_complex(H);
    fw = fftw_plan_dft_r2c_1d(n, buf, c, FFTW_ESTIMATE);
    bw = fftw_plan_dft_c2r_1d(N, C, big, FFTW_ESTIMATE);
  }
  std::copy(g.values.begin(), g.values.end(), buf);
  fftw_execute(fw);
  for (int k = 0; k < H; ++k) C[k][0] = C[k][1] = 0.0;
  for (int k = 0; k < h; ++k) {
    double f = (k == n / 2) ? 0.5 : 1.0;
    C[k][0] = c[k][0] * f / n;
    C[k][1] = c[k][1] * f / n;
  }
  fftw_execute(bw);
  GridDensity out = g;
  out.n = N;
  out.dx = g.dx / factor;
  out.values.assign(big, big + N);
  {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(fw);
    fftw_destroy_plan(bw);
    fftw_free(buf);
    fftw_free(big);
    fftw_free(c);
    fftw_free(C);
  }
  return out;
}

// ---------------------------------------------------------------- nonlocal difference

namespace {

struct DeltaContext {
  const GridDensity& g;
  const ScalingProfile& p;
  const std::function<double(double)>& kz;
  Branch branch;
  std::vector<double> d1, d2, d3, d4;
  double mean = 0.0;
};

DeltaResult delta_at(const DeltaContext& cx, int index) {
  const GridDensity& g = cx.g;
  const ScalingProfile& p = cx.p;
  const double h = g.dx, x = g.x(index), px = g.values[index];
  const double p1 = cx.d1[index], p2 = cx.d2[index], p3 = cx.d3[index], p4 = cx.d4[index];
  const bool first = cx.branch == Branch::FirstOrder;
  auto val = [&](double y) { return g.at(y); };
  // numerator of Delta times |z| phi(|z|), z signed
  auto numer = [&](double z) {
    if (first) return val(x + z) - px - p.compensator(std::abs(z)) * z * p1;
    return 0.5 * (val(x + z) + val(x - z) - 2.0 * px);
  };
  auto inv_w = [&](double az) { return std::exp(-std::log(az) - p.log_phi(std::log(az))); };

  DeltaResult r;
  // Taylor region |z| <= 2h
  const double zs = 2.0 * h, lzs = std::log(zs);
  DepthGrid dg = light_depth();
  for (int sg : {1, -1}) {
    if (!first && sg < 0) continue;
    auto taylor = [&](double lz, double& v, double& a) {
      double az = std::exp(lz), z = sg * az;
      double T;
      if (first)
        T = (1.0 - p.compensator(az)) * z * p1 + z * z * p2 / 2.0 + z * z * z * p3 / 6.0 + z * z * z * z * p4 / 24.0;
      else
        T = z * z * p2 / 2.0 + z * z * z * z * p4 / 24.0;
      double lw = -lz - p.log_phi(lz);
      // dz = az dv
      double m = T == 0.0 ? 0.0 : std::exp(std::log(std::abs(T)) + lw + lz);
      double kw = first ? cx.kz(z) : cx.kz(z) + cx.kz(-z);
      v = (T < 0 ? -m : m) * kw;
      a = first ? m : 2.0 * m;
    };
    r.value += integrate_depth([&](double vv) { double v, a; taylor(lzs - vv, v, a); return v; }, dg);
    r.abs_integral += integrate_depth([&](double vv) { double v, a; taylor(lzs - vv, v, a); return a; }, dg);
  }
  // cells out to Z
  const double L = g.n * h;
  const double Z = g.periodic ? 4.0 * L : L;
  const GaussRule& g4 = gauss_rule(4);
  const long ncell = static_cast<long>(std::ceil(Z / h));
  for (int sg : {1, -1}) {
    if (!first && sg < 0) continue;
    for (long k = 2; k < ncell; ++k) {
      double a = k * h, c = a + 0.5 * h;
      for (std::size_t q = 0; q < g4.x.size(); ++q) {
        double az = c + 0.5 * h * g4.x[q], z = sg * az;
        double w = 0.5 * h * g4.w[q];
        double dlt = numer(z) * inv_w(az);
        double kw = first ? cx.kz(z) : cx.kz(z) + cx.kz(-z);
        r.value += w * dlt * kw;
        r.abs_integral += w * std::abs(dlt) * (first ? 1.0 : 2.0);
      }
    }
  }
  // beyond Z the density is its mean (periodic) or zero
  const double Zc = ncell * h;
  const double pbar = g.periodic ? cx.mean : 0.0;
  for (int sg : {1, -1}) {
    if (!first && sg < 0) continue;
    auto tail = [&](double az, bool absolute) {
      double z = sg * az;
      double nu = first ? pbar - px - p.compensator(az) * z * p1 : pbar - px;
      double dlt = nu * inv_w(az);
      if (absolute) return std::abs(dlt) * (first ? 1.0 : 2.0);
      return dlt * (first ? cx.kz(z) : cx.kz(z) + cx.kz(-z));
    };
    r.value += integrate_tail([&](double az) { return tail(az, false); }, Zc, Zc, dg);
    r.abs_integral += integrate_tail([&](double az) { return tail(az, true); }, Zc, Zc, dg);
  }
  return r;
}

}  // namespace

std::vector<DeltaResult> delta_apply_many(const GridDensity& g, const ScalingProfile& p,
                                          const std::function<double(double)>& kz, const std::vector<int>& idx,
                                          Branch branch) {
  if (g.d != 1) fail(ErrorKind::Domain, "delta_apply: d = 1 only");
  if (g.scale > 0.0 && g.dx > g.scale / 16.0)
    fail(ErrorKind::Resolution, "grid step " + std::to_string(g.dx) + " exceeds phi^{-1}(s-t)/16 = " +
                                    std::to_string(g.scale / 16.0));
  DeltaContext cx{g, p, kz, branch, spectral_derivative(g, 1), spectral_derivative(g, 2), spectral_derivative(g, 3),
                  spectral_derivative(g, 4)};
  cx.mean = g.mass() / (g.n * g.dx);
  std::vector<DeltaResult> out;
  for (int i : idx) {
    if (i < 0 || i >= g.n) fail(ErrorKind::Domain, "delta_apply: index outside grid");
    out.push_back(delta_at(cx, i));
  }
  return out;
}

DeltaResult delta_apply(const GridDensity& g, const ScalingProfile& p, const std::function<double(double)>& kz,
                        int index, Branch branch) {
  return delta_apply_many(g, p, kz, {index}, branch)[0];
}

DeltaResult delta_phi_apply(const GridDensity& g, const FrozenKernelSpec& spec, double t, int index, Branch branch) {
  auto k = spec.kappa;
  std::function<double(double)> kz = [k, t](double z) { return k(t, z); };
  return delta_apply(g, spec.profile, kz, index, branch);
}

// ---------------------------------------------------------------- drift and splitting

namespace {

// int_lo^hi f(z) / phi(z) dz on z > 0 through log z, hi may be inf
double odd_over_phi(const ZKernel& zk, const ScalingProfile& p, double lo, double hi) {
  if (!zk.odd) return 0.0;
  auto f = [&](double lz) {
    double o = zk.odd(std::exp(std::min(lz, 690.0)));
    return o == 0.0 ? 0.0 : o * std::exp(lz - p.log_phi(lz));
  };
  std::vector<double> bp = sorted_breaks(zk);
  if (lo == 0.0) {
    double l1 = std::log(hi);
    auto sc = scan_depth([&](double v) {
      double lz = l1 - v;
      return lz - p.log_phi(lz);
    });
    if (sc.verdict == Verdict::Divergent) fail(ErrorKind::Divergence, "drift integral diverges at 0");
    return integrate_depth([&](double v) { return f(l1 - v); }, light_depth());
  }
  double l0 = std::log(lo);
  auto sc = scan_depth([&](double v) {
    double lz = l0 + v;
    return lz - p.log_phi(lz);
  });
  if (sc.verdict == Verdict::Divergent) fail(ErrorKind::Divergence, "drift integral diverges at infinity");
  double acc = 0.0;
  double start = l0;
  for (double b : bp)
    if (b > lo) {
      acc += integrate_uniform(f, start, std::log(b), kLn2 / 8.0, gauss_rule(10));
      start = std::log(b);
    }
  return acc + integrate_depth([&](double v) { return f(start + v); }, light_depth());
}

}  // namespace

double drift_vector(const FrozenKernelSpec& spec, double t, double s) {
  if (spec.d() != 1) fail(ErrorKind::Domain, "drift_vector: d = 1 only");
  if (!(s > t)) fail(ErrorKind::Domain, "need t < s");
  ZKernel zk = averaged_kernel(spec, t, s);
  switch (spec.profile.case_tag()) {
    case CaseTag::Case1: return -(s - t) * odd_over_phi(zk, spec.profile, 0.0, 1.0);
    case CaseTag::Case2: return 0.0;
    case CaseTag::Case3: return (s - t) * odd_over_phi(zk, spec.profile, 1.0, HUGE_VAL);
  }
  return 0.0;
}

SmallLarge decompose_small_large(const FrozenKernelSpec& spec, double t, double s) {
  if (!(s > t)) fail(ErrorKind::Domain, "need t < s");
  auto zk = std::make_shared<ZKernel>(averaged_kernel(spec, t, s));
  auto prof = std::make_shared<ScalingProfile>(spec.profile);
  SmallLarge out;
  out.duration = s - t;
  const double pref = spec.d() == 2 ? 2.0 * kPi : 1.0;
  out.lambda = pref * integrate_depth(
                          [&](double v) {
                            double lz = v;
                            return zk->even(std::exp(std::min(lz, 690.0))) * std::exp(-prof->log_phi(lz));
                          },
                          light_depth());
  if (spec.d() == 1 && spec.profile.case_tag() == CaseTag::Case3)
    out.large_drift = -(s - t) * odd_over_phi(*zk, *prof, 1.0, HUGE_VAL);
  const double tau = s - t;
  out.small = [zk, prof, tau](double xi) { return tau * symbol(*zk, *prof, xi, 0.0, 1.0); };
  out.large = [zk, prof, tau](double xi) { return tau * symbol(*zk, *prof, xi, 1.0, HUGE_VAL); };
  return out;
}

std::pair<double, double> two_sided_ratio(const GridDensity& g, const ScalingProfile& p, double reach) {
  const double tau = g.s - g.t, sigma = p.phi_inverse(tau);
  double lo = HUGE_VAL, hi = 0.0;
  if (g.d != 1) {
    for (int i = 0; i < g.n; ++i)
      for (int j = 0; j < g.n; ++j) {
        double r = std::hypot(g.x(i), g.x(j));
        if (r > reach * sigma) continue;
        double q = g.values[static_cast<std::size_t>(i) * g.n + j] / (tau * rho(p, tau, r));
        lo = std::min(lo, q);
        hi = std::max(hi, q);
      }
    return {lo, hi};
  }
  for (int i = 0; i < g.n; ++i) {
    double x = g.x(i);
    if (std::abs(x) > reach * sigma) continue;
    double q = g.values[i] / (tau * rho(p, tau, std::abs(x)));
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  return {lo, hi};
}

}  // namespace hk
