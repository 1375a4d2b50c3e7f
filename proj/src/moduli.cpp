#include "hk/moduli.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hk/error.hpp"
#include "hk/quad.hpp"

namespace hk {

namespace {

// log(log(1 + e^u)) for u = -log t > 0
double loglog1p(double u) {
  double L = u > 30.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
  return std::log(L);
}

double logaddexp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (!std::isfinite(a)) return a;
  return a + std::log1p(std::exp(b - a));
}

}  // namespace

Modulus Modulus::family(double c, double eta, double a) {
  if (!(c > 0.0) || !(eta >= 0.0) || !std::isfinite(a)) fail(ErrorKind::Domain, "modulus: need c > 0, eta >= 0");
  Modulus m;
  const double lc = std::log(c);
  m.logell_ = [lc, eta, a](double lt) {
    double v = lc + eta * lt;
    if (a != 0.0) v += a * loglog1p(-lt);
    return v;
  };
  m.tags_.S0 = eta == 0.0;
  m.tags_.D0 = eta > 0.0 || a < -1.0;
  m.tags_.R = true;
  m.tags_.alpha = eta;
  std::ostringstream id;
  id << c << "*t^" << eta << "*log(1+1/t)^" << a;
  m.id_ = id.str();
  m.params_ = {{"modulus", "product"}, {"c", c}, {"eta", eta}, {"a", a}};
  return m;
}

Modulus Modulus::callable(std::function<double(double)> ell, ModulusClass tags, std::string id) {
  Modulus m;
  auto raw = [ell](double lt) { return std::log(ell(std::exp(lt))); };
  m.logell_ = [raw](double lt) {
    const double lim = -700.0;
    if (lt >= lim) return raw(lt);
    double slope = raw(lim + 1.0) - raw(lim);
    return raw(lim) + slope * (lt - lim);
  };
  m.tags_ = tags;
  m.id_ = id;
  m.params_ = {{"modulus", "callable"}, {"id", id}};
  return m;
}

Modulus Modulus::max_of(const Modulus& a, const Modulus& b) {
  Modulus m;
  auto fa = a.logell_, fb = b.logell_;
  m.logell_ = [fa, fb](double lt) { return std::max(fa(lt), fb(lt)); };
  m.tags_.S0 = a.tags_.S0 && b.tags_.S0;
  m.tags_.D0 = a.tags_.D0 && b.tags_.D0;
  m.tags_.R = a.tags_.R && b.tags_.R;
  m.tags_.alpha = std::min(a.tags_.alpha, b.tags_.alpha);
  m.id_ = "max(" + a.id_ + "," + b.id_ + ")";
  m.params_ = {{"modulus", "max"}, {"a", a.to_json()}, {"b", b.to_json()}};
  return m;
}

Modulus Modulus::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("modulus")) fail(ErrorKind::Config, "modulus: missing 'modulus'");
  try {
    std::string f = j.at("modulus").get<std::string>();
    double c = j.value("c", 1.0);
    if (f == "power") return power(j.at("eta").get<double>(), c);
    if (f == "log_power") return log_power(j.at("a").get<double>(), c);
    if (f == "constant") return constant(c);
    if (f == "product") return family(c, j.value("eta", 0.0), j.value("a", 0.0));
    if (f == "max") return max_of(from_json(j.at("a")), from_json(j.at("b")));
    fail(ErrorKind::Config, "modulus: unknown family '" + f + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("modulus: ") + e.what());
  }
}

nlohmann::json Modulus::to_json() const { return params_; }

double Modulus::log_ell(double lt) const { return logell_(std::min(lt, 0.0)); }

double Modulus::operator()(double t) const {
  if (!(t > 0.0)) fail(ErrorKind::Domain, "modulus: t must be positive");
  return std::exp(log_ell(std::log(t)));
}

Modulus Modulus::squared() const {
  Modulus m = *this;
  auto f = logell_;
  m.logell_ = [f](double lt) { return 2.0 * f(lt); };
  m.tags_.alpha = 2.0 * tags_.alpha;
  m.id_ = "(" + id_ + ")^2";
  if (params_.value("modulus", "") == "product") {
    m.params_["c"] = std::pow(params_["c"].get<double>(), 2);
    m.params_["eta"] = 2.0 * params_["eta"].get<double>();
    m.params_["a"] = 2.0 * params_["a"].get<double>();
  } else {
    m.params_ = {{"modulus", "squared"}, {"of", params_}};
  }
  return m;
}

Modulus Modulus::scaled(double k) const {
  if (!(k > 0.0)) fail(ErrorKind::Domain, "modulus: scale must be positive");
  Modulus m = *this;
  auto f = logell_;
  const double lk = std::log(k);
  m.logell_ = [f, lk](double lt) { return f(lt) + lk; };
  m.id_ = std::to_string(k) + "*" + id_;
  if (params_.value("modulus", "") == "product")
    m.params_["c"] = params_["c"].get<double>() * k;
  else
    m.params_ = {{"modulus", "scaled"}, {"k", k}, {"of", params_}};
  return m;
}

bool check_dini(const Modulus& m) {
  double prev = -HUGE_VAL;
  for (int k = 200; k >= 0; --k) {
    double v = m.log_ell(-0.25 * k * std::log(2.0));
    if (v < prev - 1e-12 * std::max(1.0, std::fabs(prev))) return false;
    prev = v;
  }
  auto scan = scan_depth([&](double v) { return m.log_ell(-v); });
  return scan.verdict == Verdict::Convergent;
}

double s0_limit(const Modulus& m, double lambda) {
  // polynomial extrapolation in h = 1/k to h = 0 (Neville)
  std::vector<double> h, a;
  const double ll = std::log(lambda), ln2 = std::log(2.0);
  for (int k = 10; k <= 40; k += 5) {
    double lt = -k * ln2;
    h.push_back(1.0 / k);
    a.push_back(std::exp(m.log_ell(lt + ll) - m.log_ell(lt)));
  }
  const std::size_t n = h.size();
  for (std::size_t lev = 1; lev < n; ++lev)
    for (std::size_t i = n - 1; i >= lev; --i) a[i] = (h[i - lev] * a[i] - h[i] * a[i - 1]) / (h[i - lev] - h[i]);
  return a[n - 1];
}

bool check_slowly_varying(const Modulus& m, double tol) {
  return std::fabs(s0_limit(m, 0.5) - 1.0) <= tol && std::fabs(s0_limit(m, 2.0) - 1.0) <= tol;
}

double gamma_ell(const Modulus& m, double t) {
  if (!(t > 0.0)) fail(ErrorKind::Domain, "gamma_ell: t must be positive");
  auto scan = scan_depth([&](double v) { return m.log_ell(-v); });
  if (scan.verdict != Verdict::Convergent)
    fail(ErrorKind::Divergence, std::string("gamma_ell: Dini integral ") + verdict_name(scan.verdict) + " (" +
                                    scan.diagnostics + ")");
  const double lt = std::log(std::min(t, 1.0));
  double g = integrate_depth([&](double v) { return std::exp(m.log_ell(lt - v)); });
  if (t > 1.0) g += m(1.0) * std::log(t);
  return g;
}

double ell_phi(const Modulus& m, const ScalingProfile& p, double t) {
  if (!(t > 0.0)) fail(ErrorKind::Domain, "ell_phi: t must be positive");
  return std::exp(m.log_ell(p.log_phi_inverse(std::log(t))));
}

double gamma_ell_phi(const Modulus& m, const ScalingProfile& p, double t) {
  if (!(t > 0.0)) fail(ErrorKind::Domain, "gamma_ell_phi: t must be positive");
  // s = phi(r): int ell(r) elast(r) dlog r over r < phi^{-1}(t)
  auto lf = [&](double lr) { return m.log_ell(lr) + std::log(p.elasticity_log(lr)); };
  auto scan = scan_depth([&](double v) { return lf(-v); });
  if (scan.verdict != Verdict::Convergent)
    fail(ErrorKind::Divergence, "gamma_ell_phi: integral not convergent (" + scan.diagnostics + ")");
  const double lR = p.log_phi_inverse(std::log(t));
  double g = 0.0;
  double top = std::min(lR, 0.0);
  g += integrate_depth([&](double v) { return std::exp(lf(top - v)); });
  if (lR > 0.0) {
    // ell is flat beyond 1; the phi-part is exact
    g += m(1.0) * (std::log(t) - p.log_phi(0.0));
  }
  return g;
}

MResult M_phi_ell(const Modulus& m, const ScalingProfile& p, double t) {
  if (!(t > 0.0 && t <= 1.0)) fail(ErrorKind::Domain, "M_phi_ell: t must lie in (0,1]");
  const double lt = std::log(t), llt = m.log_ell(lt), lpt = p.log_phi(lt);
  auto L = [&](double v) {
    double lr = lt - v;
    double a = logaddexp(m.log_ell(lr) - llt, p.log_phi(lr) - lpt);
    return a + p.log_phi(lr) + std::log(p.elasticity_log(lr)) - lr;
  };
  MResult out;
  auto scan = scan_depth(L);
  out.diagnostics = scan.diagnostics;
  if (scan.verdict == Verdict::Divergent) {
    out.divergent = true;
    out.value = HUGE_VAL;
    return out;
  }
  if (scan.verdict == Verdict::Indeterminate)
    fail(ErrorKind::Indeterminate, "M_phi_ell: inconclusive (" + scan.diagnostics + ")");
  out.value = integrate_depth([&](double v) { return std::exp(L(v)); });
  return out;
}

double potter_bound(const Modulus& m, double delta, const std::vector<double>& lattice) {
  if (!m.tags().S0) fail(ErrorKind::Domain, "potter_bound: modulus is not tagged slowly varying");
  if (!(delta > 0.0)) fail(ErrorKind::Domain, "potter_bound: delta must be positive");
  double C = 0.0;
  for (double s : lattice)
    for (double t : lattice) {
      double lq = std::fabs(std::log(s / t));
      C = std::max(C, std::exp(m.log_ell(std::log(s)) - m.log_ell(std::log(t)) - delta * lq));
    }
  return C;
}

double h_ell_phi(const Modulus& m, const ScalingProfile& p, double t, double r) {
  return m(p.phi_inverse(t) + r) * rho(p, t, r);
}

double integral_h(const Modulus& m, const ScalingProfile& p, double t) {
  if (p.d() != 1) fail(ErrorKind::Domain, "integral_h: only d = 1");
  const double sg = p.phi_inverse(t);
  auto f = [&](double r) { return h_ell_phi(m, p, t, std::fabs(r)); };
  // ell is flat beyond 1, so the integrand has a kink at r = 1 - sg
  if (sg >= 1.0) return 2.0 * integrate_tail(f, 0.0, sg);
  return integrate_line(f, {-(1.0 - sg), 0.0, 1.0 - sg});
}

double convolve_h(const Modulus& m1, const Modulus& m2, const ScalingProfile& p, double t, double s, double x) {
  if (p.d() != 1) fail(ErrorKind::Domain, "convolve_h: only d = 1");
  if (!(0.0 < s && s < t)) fail(ErrorKind::Domain, "convolve_h: need 0 < s < t");
  auto f = [&](double y) { return h_ell_phi(m1, p, t - s, std::fabs(x - y)) * h_ell_phi(m2, p, s, std::fabs(y)); };
  std::vector<double> bp{0.0};
  if (x != 0.0) bp.push_back(x);
  double v = integrate_line(f, bp);
  if (!std::isfinite(v)) fail(ErrorKind::Numeric, "convolve_h: non-finite quadrature");
  return v;
}

ConvolutionReport verify_convolution(const Modulus& m1, const Modulus& m2, const ScalingProfile& p, double t,
                                     double s, const std::vector<double>& xs) {
  for (const Modulus* m : {&m1, &m2})
    if (!m->tags().R || !(m->tags().alpha < 1.0))
      fail(ErrorKind::Domain, "verify_convolution: moduli must be regularly varying with index in [0,1)");
  if (!(0.0 < s && s < t)) fail(ErrorKind::Domain, "verify_convolution: need 0 < s < t");
  ConvolutionReport rep;
  if (t <= 1.0) rep.dk2_ratio = integral_h(m1, p, t) / (ell_phi(m1, p, t) / t);
  Modulus mx = Modulus::max_of(m1, m2);
  rep.rhs_first = ell_phi(mx, p, t - s) / (t - s);
  rep.rhs_second = ell_phi(mx, p, s) / s;
  for (double x : xs) {
    double l = convolve_h(m1, m2, p, t, s, x);
    double r = (rep.rhs_first + rep.rhs_second) * h_ell_phi(mx, p, t, std::fabs(x));
    rep.xs.push_back(x);
    rep.lhs.push_back(l);
    rep.rhs.push_back(r);
    if (l / r > rep.dk1_ratio) {
      rep.dk1_ratio = l / r;
      rep.dk1_worst_x = x;
    }
  }
  return rep;
}

}  // namespace hk
