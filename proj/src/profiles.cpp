#include "hk/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hk/error.hpp"

namespace hk {

namespace {

double logsumexp(const std::vector<double>& a) {
  double m = *std::max_element(a.begin(), a.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : a) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<double> normalized(std::vector<double> w) {
  double s = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(s > 0.0)) fail(ErrorKind::Domain, "profile weights must have positive sum");
  for (auto& x : w) {
    if (!(x > 0.0)) fail(ErrorKind::Domain, "profile weights must be positive");
    x /= s;
  }
  return w;
}

CaseTag case_from_ends(double alpha0, double alpha_inf) {
  if (alpha0 < 1.0) return CaseTag::Case1;
  if (alpha_inf > 1.0) return CaseTag::Case3;
  return CaseTag::Case2;
}

}  // namespace

const char* case_name(CaseTag c) {
  switch (c) {
    case CaseTag::Case1: return "Case1";
    case CaseTag::Case2: return "Case2";
    case CaseTag::Case3: return "Case3";
  }
  return "?";
}

CompensatorMode compensator_for(CaseTag c) {
  switch (c) {
    case CaseTag::Case1: return CompensatorMode::None;
    case CaseTag::Case2: return CompensatorMode::Truncated;
    case CaseTag::Case3: return CompensatorMode::Full;
  }
  return CompensatorMode::Truncated;
}

ScalingProfile ScalingProfile::power(double alpha, int d) {
  if (!(alpha > 0.0 && alpha < 2.0)) fail(ErrorKind::Domain, "power profile needs alpha in (0,2)");
  ScalingProfile p;
  p.d_ = d;
  p.logphi_ = [alpha](double lr) { return alpha * lr; };
  p.elast_ = [alpha](double) { return alpha; };
  p.loginv_ = [alpha](double lt) { return lt / alpha; };
  p.dec_ = {alpha, alpha, 1.0, 1.0};
  p.case_ = case_from_ends(alpha, alpha);
  p.id_ = "power(" + std::to_string(alpha) + ")";
  p.params_ = {{"family", "power"}, {"alpha", alpha}, {"d", d}};
  return p;
}

ScalingProfile ScalingProfile::piecewise(double alpha, double beta, int d) {
  if (!(alpha > 0.0 && alpha < 2.0) || !(beta > 0.0))
    fail(ErrorKind::Domain, "piecewise profile needs alpha in (0,2), beta > 0");
  ScalingProfile p;
  p.d_ = d;
  p.logphi_ = [alpha, beta](double lr) { return lr <= 0.0 ? alpha * lr : beta * lr; };
  p.elast_ = [alpha, beta](double lr) { return lr <= 0.0 ? alpha : beta; };
  p.loginv_ = [alpha, beta](double lt) { return lt <= 0.0 ? lt / alpha : lt / beta; };
  p.dec_ = {alpha, std::max(alpha, beta), 1.0, 1.0};
  p.case_ = case_from_ends(alpha, beta);
  p.id_ = "piecewise(" + std::to_string(alpha) + "," + std::to_string(beta) + ")";
  p.params_ = {{"family", "piecewise"}, {"alpha", alpha}, {"beta", beta}, {"d", d}};
  p.kinks_ = {1.0};
  return p;
}

ScalingProfile ScalingProfile::mixture(std::vector<double> alphas, std::vector<double> weights, int d) {
  if (alphas.empty() || alphas.size() != weights.size()) fail(ErrorKind::Domain, "mixture: size mismatch");
  for (double a : alphas)
    if (!(a > 0.0 && a < 2.0)) fail(ErrorKind::Domain, "mixture: exponents must lie in (0,2)");
  auto w = normalized(weights);
  std::vector<double> lw(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) lw[i] = std::log(w[i]);
  ScalingProfile p;
  p.d_ = d;
  p.logphi_ = [alphas, lw](double lr) {
    std::vector<double> a(alphas.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = lw[i] + alphas[i] * lr;
    return logsumexp(a);
  };
  p.elast_ = [alphas, lw](double lr) {
    std::vector<double> a(alphas.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = lw[i] + alphas[i] * lr;
    double m = logsumexp(a), e = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) e += alphas[i] * std::exp(a[i] - m);
    return e;
  };
  double lo = *std::min_element(alphas.begin(), alphas.end());
  double hi = *std::max_element(alphas.begin(), alphas.end());
  p.dec_ = {lo, hi, 1.0, 1.0};
  p.case_ = case_from_ends(lo, hi);
  p.id_ = "mixture";
  p.params_ = {{"family", "mixture"}, {"alphas", alphas}, {"weights", weights}, {"d", d}};
  return p;
}

ScalingProfile ScalingProfile::harmonic(std::vector<double> alphas, std::vector<double> weights, int d) {
  if (alphas.empty() || alphas.size() != weights.size()) fail(ErrorKind::Domain, "harmonic: size mismatch");
  for (double a : alphas)
    if (!(a > 0.0 && a < 2.0)) fail(ErrorKind::Domain, "harmonic: exponents must lie in (0,2)");
  auto w = normalized(weights);
  std::vector<double> lw(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) lw[i] = std::log(w[i]);
  ScalingProfile p;
  p.d_ = d;
  p.logphi_ = [alphas, lw](double lr) {
    std::vector<double> a(alphas.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = lw[i] - alphas[i] * lr;
    return -logsumexp(a);
  };
  p.elast_ = [alphas, lw](double lr) {
    std::vector<double> a(alphas.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = lw[i] - alphas[i] * lr;
    double m = logsumexp(a), e = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) e += alphas[i] * std::exp(a[i] - m);
    return e;
  };
  double lo = *std::min_element(alphas.begin(), alphas.end());
  double hi = *std::max_element(alphas.begin(), alphas.end());
  p.dec_ = {lo, hi, 1.0, 1.0};
  p.case_ = case_from_ends(hi, lo);
  p.id_ = "harmonic";
  p.params_ = {{"family", "harmonic"}, {"alphas", alphas}, {"weights", weights}, {"d", d}};
  return p;
}

ScalingProfile ScalingProfile::xlog(double beta, int d) {
  if (!(beta > 0.0)) fail(ErrorKind::Domain, "xlog profile needs beta > 0");
  ScalingProfile p;
  p.d_ = d;
  p.logphi_ = [beta](double lr) { return lr <= 0.0 ? lr + std::log1p(-lr) : beta * lr; };
  p.elast_ = [beta](double lr) {
    if (lr > 0.0) return beta;
    double L = -lr;
    return L / (1.0 + L);
  };
  p.dec_ = {0.5, std::max(1.0, beta), 0.8, 1.0};
  p.case_ = beta > 1.0 ? CaseTag::Case3 : CaseTag::Case2;
  p.id_ = "xlog(" + std::to_string(beta) + ")";
  p.params_ = {{"family", "xlog"}, {"beta", beta}, {"d", d}};
  p.kinks_ = {1.0};
  return p;
}

ScalingProfile ScalingProfile::table(std::vector<double> r, std::vector<double> phi, Declared dec, int d) {
  if (r.size() < 2 || r.size() != phi.size()) fail(ErrorKind::Domain, "table profile: need matching knots");
  std::vector<double> lr(r.size()), lp(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!(r[i] > 0.0) || !(phi[i] > 0.0)) fail(ErrorKind::Domain, "table profile: knots must be positive");
    lr[i] = std::log(r[i]);
    lp[i] = std::log(phi[i]);
    if (i > 0 && (!(lr[i] > lr[i - 1]) || !(lp[i] > lp[i - 1])))
      fail(ErrorKind::Domain, "table profile: knots must be strictly increasing");
  }
  auto interp = [lr, lp](double x) {
    std::size_t n = lr.size();
    std::size_t k;
    if (x <= lr[0])
      k = 0;
    else if (x >= lr[n - 1])
      k = n - 2;
    else
      k = std::upper_bound(lr.begin(), lr.end(), x) - lr.begin() - 1;
    double s = (lp[k + 1] - lp[k]) / (lr[k + 1] - lr[k]);
    return std::make_pair(lp[k] + s * (x - lr[k]), s);
  };
  double shift = interp(0.0).first;
  ScalingProfile p;
  p.d_ = d;
  p.logphi_ = [interp, shift](double x) { return interp(x).first - shift; };
  p.elast_ = [interp](double lr) { return interp(lr).second; };
  p.dec_ = dec;
  p.id_ = "table";
  p.params_ = {{"family", "table"}, {"r", r},        {"phi", phi},     {"d", d},
               {"beta1", dec.beta1}, {"beta2", dec.beta2}, {"c1", dec.c1}, {"c2", dec.c2}};
  for (double x : r) p.kinks_.push_back(x);
  p.case_ = classify_case(p);
  return p;
}

ScalingProfile ScalingProfile::callable(std::function<double(double)> phi, Declared dec, std::string id, int d) {
  ScalingProfile p;
  p.d_ = d;
  auto lp = [phi](double x) {
    const double lim = 700.0;
    if (x > lim || x < -lim) {
      double e = x > 0 ? lim : -lim;
      double h = 1e-3;
      double s = (std::log(phi(std::exp(e))) - std::log(phi(std::exp(e - h)))) / h;
      if (x < 0) s = (std::log(phi(std::exp(e + h))) - std::log(phi(std::exp(e)))) / h;
      return std::log(phi(std::exp(e))) + s * (x - e);
    }
    return std::log(phi(std::exp(x)));
  };
  p.logphi_ = lp;
  p.elast_ = [lp](double x) {
    double h = 1e-5;
    return (lp(x + h) - lp(x - h)) / (2 * h);
  };
  p.dec_ = dec;
  p.id_ = id;
  p.params_ = {{"family", "callable"}, {"id", id}, {"d", d}};
  p.case_ = classify_case(p);
  return p;
}

ScalingProfile ScalingProfile::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("family")) fail(ErrorKind::Config, "profile: missing 'family'");
  std::string f = j.at("family").get<std::string>();
  int d = j.value("d", 1);
  ScalingProfile p;
  try {
    if (f == "power")
      p = power(j.at("alpha").get<double>(), d);
    else if (f == "piecewise")
      p = piecewise(j.at("alpha").get<double>(), j.at("beta").get<double>(), d);
    else if (f == "mixture")
      p = mixture(j.at("alphas").get<std::vector<double>>(), j.at("weights").get<std::vector<double>>(), d);
    else if (f == "harmonic")
      p = harmonic(j.at("alphas").get<std::vector<double>>(), j.at("weights").get<std::vector<double>>(), d);
    else if (f == "xlog")
      p = xlog(j.value("beta", 1.5), d);
    else if (f == "table") {
      Declared dec{j.at("beta1").get<double>(), j.at("beta2").get<double>(), j.value("c1", 1.0), j.value("c2", 1.0)};
      p = table(j.at("r").get<std::vector<double>>(), j.at("phi").get<std::vector<double>>(), dec, d);
    } else
      fail(ErrorKind::Config, "profile: unknown family '" + f + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("profile: ") + e.what());
  }
  if (f != "table" && (j.contains("beta1") || j.contains("beta2"))) {
    Declared dec = p.declared();
    dec.beta1 = j.value("beta1", dec.beta1);
    dec.beta2 = j.value("beta2", dec.beta2);
    dec.c1 = j.value("c1", dec.c1);
    dec.c2 = j.value("c2", dec.c2);
    p.set_declared(dec);
  }
  return p;
}

nlohmann::json ScalingProfile::to_json() const {
  nlohmann::json j = params_;
  j["beta1"] = dec_.beta1;
  j["beta2"] = dec_.beta2;
  j["c1"] = dec_.c1;
  j["c2"] = dec_.c2;
  j["case"] = case_name(case_);
  return j;
}

ScalingProfile ScalingProfile::rescaled(double sigma) const {
  if (!(sigma > 0.0)) fail(ErrorKind::Domain, "rescaled: sigma must be positive");
  ScalingProfile p = *this;
  const double ls = std::log(sigma);
  const double shift = log_phi(ls);
  auto base_lp = logphi_;
  auto base_el = elast_;
  p.logphi_ = [base_lp, ls, shift](double lr) { return base_lp(lr + ls) - shift; };
  p.elast_ = [base_el, ls](double lr) { return base_el(lr + ls); };
  if (loginv_) {
    auto base_inv = loginv_;
    p.loginv_ = [base_inv, ls, shift](double lt) { return base_inv(lt + shift) - ls; };
  }
  for (auto& k : p.kinks_) k /= sigma;
  p.id_ = id_ + "~" + std::to_string(sigma);
  return p;
}

double ScalingProfile::log_phi(double lr) const { return logphi_(lr); }

double ScalingProfile::phi(double r) const {
  if (!std::isfinite(r) || r < 0.0) fail(ErrorKind::Domain, "eval_phi: r must be finite and non-negative");
  if (r == 0.0) return 0.0;
  return std::exp(logphi_(std::log(r)));
}

double ScalingProfile::elasticity(double r) const { return elast_(std::log(r)); }

double ScalingProfile::elasticity_log(double lr) const { return elast_(lr); }

double ScalingProfile::dphi(double r) const { return r > 0.0 ? phi(r) * elast_(std::log(r)) / r : 0.0; }

double ScalingProfile::log_phi_inverse(double lt) const {
  if (loginv_) return loginv_(lt);
  double lo = -1.0, hi = 1.0;
  const double lim = 1500.0;
  while (logphi_(lo) > lt) {
    lo *= 2.0;
    if (lo < -lim) fail(ErrorKind::Range, "phi_inverse: target below numeric range");
  }
  while (logphi_(hi) < lt) {
    hi *= 2.0;
    if (hi > lim) fail(ErrorKind::Range, "phi_inverse: target above numeric range");
  }
  while (hi - lo > 1e-13 * std::max(1.0, std::fabs(lo))) {
    double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (logphi_(mid) < lt)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double ScalingProfile::phi_inverse(double t) const {
  if (!std::isfinite(t) || t < 0.0) fail(ErrorKind::Domain, "phi_inverse: t must be finite and non-negative");
  if (t == 0.0) return 0.0;
  return std::exp(log_phi_inverse(std::log(t)));
}

double ScalingProfile::compensator(double zabs) const {
  switch (case_) {
    case CaseTag::Case1: return 0.0;
    case CaseTag::Case2: return zabs <= 1.0 ? 1.0 : 0.0;
    case CaseTag::Case3: return 1.0;
  }
  return 0.0;
}

double ScalingProfile::gamma_weight(int i, double r) const {
  if (i == 0) return std::min(r * r, 1.0);
  if (i != 1) fail(ErrorKind::Domain, "gamma_weight: i must be 0 or 1");
  switch (case_) {
    case CaseTag::Case1: return std::min(r, 1.0);
    case CaseTag::Case2: return std::min(r * r, 1.0);
    case CaseTag::Case3: return std::min(r * r, r);
  }
  return 0.0;
}

double ScalingProfile::log_gamma_weight(int i, double lr) const {
  if (i == 0) return std::min(2.0 * lr, 0.0);
  if (i != 1) fail(ErrorKind::Domain, "gamma_weight: i must be 0 or 1");
  switch (case_) {
    case CaseTag::Case1: return std::min(lr, 0.0);
    case CaseTag::Case2: return std::min(2.0 * lr, 0.0);
    case CaseTag::Case3: return std::min(2.0 * lr, lr);
  }
  return 0.0;
}

CaseTag classify_case(const ScalingProfile& p) {
  // int_0^1 dr/phi in depth v = -log r: integrand exp(-v - log phi(e^-v))
  auto zero = scan_depth([&](double v) { return -v - p.log_phi(-v); });
  auto inf = scan_depth([&](double v) { return v - p.log_phi(v); });
  if (zero.verdict == Verdict::Indeterminate || inf.verdict == Verdict::Indeterminate) {
    fail(ErrorKind::Indeterminate, "classify_case: inconclusive (0-end " + zero.diagnostics + "; inf-end " +
                                       inf.diagnostics + ")");
  }
  if (zero.verdict == Verdict::Convergent) return CaseTag::Case1;
  if (inf.verdict == Verdict::Divergent) return CaseTag::Case2;
  return CaseTag::Case3;
}

double c0_integral(const ScalingProfile& p) {
  auto lg = [&](double lr) { return std::min(2.0 * lr, 0.0) - lr - p.log_phi(lr); };
  std::vector<double> bp{1.0};
  for (double k : p.kinks()) bp.push_back(k);
  auto res = integrate_radial_log(lg, bp);
  return res.value;
}

std::string BoundReport::summary() const {
  std::ostringstream s;
  s << (pass ? "pass" : "fail") << " lower_excess=" << worst_lower << " at (" << lower_r << "," << lower_R
    << ") upper_excess=" << worst_upper << " at (" << upper_r << "," << upper_R << ")";
  return s.str();
}

std::vector<double> log_lattice(double lo, double hi, int per_decade) {
  std::vector<double> out;
  double llo = std::log10(lo), lhi = std::log10(hi);
  int n = static_cast<int>(std::ceil((lhi - llo) * per_decade));
  for (int i = 0; i <= n; ++i) out.push_back(std::pow(10.0, llo + (lhi - llo) * i / std::max(n, 1)));
  return out;
}

BoundReport verify_scaling_bounds(const ScalingProfile& p, const std::vector<double>& radii, double slack) {
  BoundReport rep;
  const Declared& dc = p.declared();
  for (std::size_t i = 0; i < radii.size(); ++i) {
    for (std::size_t j = 0; j < radii.size(); ++j) {
      double r = radii[i], R = radii[j];
      if (!(r < R)) continue;
      double lratio = p.log_phi(std::log(R)) - p.log_phi(std::log(r));
      double lx = std::log(R / r);
      if (R <= 1.0) {
        double ex = std::exp(std::log(dc.c1) + dc.beta1 * lx - lratio) - 1.0;
        if (ex > rep.worst_lower) {
          rep.worst_lower = ex;
          rep.lower_r = r;
          rep.lower_R = R;
        }
      }
      double ex = std::exp(lratio - std::log(dc.c2) - dc.beta2 * lx) - 1.0;
      if (ex > rep.worst_upper) {
        rep.worst_upper = ex;
        rep.upper_r = r;
        rep.upper_R = R;
      }
    }
  }
  rep.pass = rep.worst_lower <= slack && rep.worst_upper <= slack;
  return rep;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  const double lmin = std::pow(2.0, -40.0);
  for (int i = 0; i < 64; ++i) g.push_back(std::exp(std::log(lmin) * (1.0 - i / 64.0)));
  g.push_back(1.0);
  return g;
}

APhi compute_A_phi(const ScalingProfile& p, int i, const std::vector<double>& lambdas, double ceiling) {
  if (i != 0 && i != 1) fail(ErrorKind::Domain, "compute_A_phi: i must be 0 or 1");
  APhi out;
  std::vector<double> lam = lambdas;
  std::sort(lam.begin(), lam.end());
  for (double l : lam) {
    const double ll = std::log(l), lpl = p.log_phi(ll);
    auto lg = [&](double lr) {
      return lpl + p.log_gamma_weight(i, lr) - lr - p.log_phi(ll + lr);
    };
    std::vector<double> bp{1.0};
    for (double k : p.kinks()) bp.push_back(k / l);
    auto res = integrate_radial_log(lg, bp);
    out.lambdas.push_back(l);
    out.values.push_back(res.value);
    if (!std::isfinite(res.value) || res.value > ceiling) {
      out.divergent = true;
      out.value = HUGE_VAL;
      out.argmax_lambda = l;
      return out;
    }
    if (res.value > out.value) {
      out.value = res.value;
      out.argmax_lambda = l;
    }
  }
  // growth of the supremum toward lambda -> 0: decade ratios of the values at
  // the three smallest decades of the grid
  std::vector<double> dec;
  const double lmin = lam.front();
  for (int k = 0; k < 4; ++k) {
    double target = lmin * std::pow(10.0, k);
    std::size_t best = 0;
    for (std::size_t j = 0; j < lam.size(); ++j)
      if (std::fabs(std::log(lam[j] / target)) < std::fabs(std::log(lam[best] / target))) best = j;
    dec.push_back(out.values[best]);
  }
  bool grow = true;
  for (int k = 0; k < 3; ++k)
    if (!(dec[k] >= 1.05 * dec[k + 1])) grow = false;
  if (grow) {
    out.divergent = true;
    out.value = HUGE_VAL;
  }
  return out;
}

double rho(const ScalingProfile& p, double t, double r) {
  if (!(t > 0.0)) fail(ErrorKind::Domain, "rho: t must be positive");
  const int d = p.d();
  double a = t * std::pow(p.phi_inverse(t), d);
  double b = r > 0.0 ? std::pow(r, d) * p.phi(r) : 0.0;
  return 1.0 / (a + b);
}

std::pair<double, double> rho_comparability(const ScalingProfile& p, const std::vector<double>& ts,
                                            const std::vector<double>& rs) {
  double lo = HUGE_VAL, hi = 0.0;
  for (double t : ts) {
    double s = p.phi_inverse(t);
    for (double r : rs) {
      double q = rho(p, t, r) * std::pow(s + r, p.d()) * p.phi(s + r);
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
  }
  return {lo, hi};
}

}  // namespace hk
