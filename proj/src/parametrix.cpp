#include "hk/parametrix.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hk/error.hpp"
#include "hk/quad.hpp"

namespace hk {

namespace {

constexpr double kPi = 3.14159265358979323846;

ZKernel kernel_of(std::function<double(double)> k, const std::vector<double>& breaks, const ScalingProfile& p,
                  bool symmetric) {
  ZKernel zk;
  zk.breaks = breaks;
  for (double b : p.kinks()) zk.breaks.push_back(b);
  zk.even = [k](double z) { return k(z) + k(-z); };
  if (!symmetric) zk.odd = [k](double z) { return k(z) - k(-z); };
  return zk;
}

std::vector<double> z_lattice() {
  std::vector<double> zs;
  for (int e = -20; e <= 20; ++e)
    for (double m : {1.0, 1.5}) {
      zs.push_back(m * std::ldexp(1.0, e));
      zs.push_back(-m * std::ldexp(1.0, e));
    }
  return zs;
}

std::vector<double> x_samples(const VariableKernelSpec& spec, int n) {
  std::vector<double> xs;
  double P = spec.x_period > 0.0 ? spec.x_period : 4.0;
  double x0 = spec.x_period > 0.0 ? 0.0 : -2.0;
  for (int i = 0; i < n; ++i) xs.push_back(x0 + P * (i + 0.37) / n);
  return xs;
}

std::vector<double> t_samples(const VariableKernelSpec& spec) {
  if (spec.time_homogeneous) return {0.0};
  return {0.0, 0.125, 0.25, 0.5, 0.75, 1.0};
}

// (e^z - 1 - z)/z^2 and (e^z (z - 1) + 1)/z^2
cplx g0(cplx z) {
  if (std::abs(z) < 1.0) {
    cplx term(0.5, 0.0), acc(0.0, 0.0);
    for (int n = 0; n < 24; ++n) {
      acc += term;
      term *= z / double(n + 3);
    }
    return acc;
  }
  return (std::exp(z) - 1.0 - z) / (z * z);
}

cplx g1(cplx z) {
  if (std::abs(z) < 1.0) {
    cplx fact(1.0, 0.0), acc(0.0, 0.0);
    for (int n = 0; n < 24; ++n) {
      acc += fact / double(n + 2);
      fact *= z / double(n + 1);
    }
    return acc;
  }
  return (std::exp(z) * (z - 1.0) + 1.0) / (z * z);
}

// sum_j (integral over [t,s] of coef_j(r, x) dr) psi_j, time-averaged via Gauss
struct SeparableLine {
  std::vector<ZKernel> basis;
  std::vector<std::function<double(double, double)>> coef;
};

SeparableLine separable_line(const VariableKernelSpec& spec) {
  SeparableLine s;
  for (const auto& term : spec.separable) {
    s.basis.push_back(kernel_of(term.basis, spec.z_breaks, spec.profile, spec.symmetric));
    s.coef.push_back(term.coef);
  }
  return s;
}

double coef_average(const std::function<double(double, double)>& c, bool homogeneous, double t, double s, double x) {
  if (homogeneous) return c(t, x);
  const GaussRule& g = gauss_rule(32);
  double acc = 0.0;
  for (std::size_t i = 0; i < g.x.size(); ++i) acc += 0.5 * g.w[i] * c(t + (s - t) * 0.5 * (1 + g.x[i]), x);
  return acc;
}

}  // namespace

// ---------------------------------------------------------------- spec

FrozenKernelSpec VariableKernelSpec::freeze(double y) const {
  FrozenKernelSpec f;
  f.profile = profile;
  auto k = kappa;
  f.kappa = [k, y](double t, double z) { return k(t, y, z); };
  f.kappa0 = kappa0;
  f.symmetric = symmetric;
  f.time_homogeneous = time_homogeneous;
  f.z_breaks = z_breaks;
  std::ostringstream os;
  os << id << "@" << y;
  f.id = os.str();
  f.params = {{"frozen_at", y}, {"of", params}};
  return f;
}

namespace {

VariableKernelSpec periodic_common(const ScalingProfile& p, double A, double P, double eta, bool bump) {
  if (!(A > 0.0) || !(P > 0.0)) fail(ErrorKind::Domain, "periodic kernel: need A > 0 and P > 0");
  if (!(eta > 0.0 && eta <= 0.5)) fail(ErrorKind::Domain, "periodic kernel: need 0 < eta <= 1/2");
  if (p.d() != 1) fail(ErrorKind::Domain, "periodic kernel: d = 1 only");
  VariableKernelSpec v;
  v.profile = p;
  auto g = [A, P](double x) { return 0.5 * A * (1.0 + std::sin(2.0 * kPi * x / P)); };
  if (bump) {
    v.kappa = [g](double, double x, double z) { return 1.0 + (std::fabs(z) <= 1.0 ? g(x) : 0.0); };
    v.z_breaks = {1.0};
    v.separable = {{[](double, double) { return 1.0; }, [](double) { return 1.0; }},
                   {[g](double, double x) { return g(x); }, [](double z) { return std::fabs(z) <= 1.0 ? 1.0 : 0.0; }}};
  } else {
    v.kappa = [g](double, double x, double) { return 1.0 + g(x); };
    v.separable = {{[g](double, double x) { return 1.0 + g(x); }, [](double) { return 1.0; }}};
  }
  v.kappa0 = 1.0 + A;
  // sup_d osc(d) / d^{2 eta} with osc(d) = min(A, A pi d / P) and ell constant beyond 1
  double c2 = A * std::pow(std::max(1.0, kPi / P), 2.0 * eta);
  v.modulus = Modulus::power(eta, std::sqrt(c2));
  v.symmetric = true;
  v.time_homogeneous = true;
  v.x_period = P;
  v.id = std::string(bump ? "periodic_bump" : "periodic_level") + "(" + std::to_string(A) + "," + std::to_string(P) + ")";
  v.params = {{"kind", bump ? "periodic_bump" : "periodic_level"}, {"A", A}, {"P", P}, {"eta", eta}};
  return v;
}

}  // namespace

VariableKernelSpec VariableKernelSpec::periodic_bump(const ScalingProfile& p, double A, double P, double eta) {
  return periodic_common(p, A, P, eta, true);
}

VariableKernelSpec VariableKernelSpec::periodic_level(const ScalingProfile& p, double A, double P, double eta) {
  return periodic_common(p, A, P, eta, false);
}

VariableKernelSpec VariableKernelSpec::from_frozen(const FrozenKernelSpec& f, double P) {
  VariableKernelSpec v;
  v.profile = f.profile;
  auto k = f.kappa;
  v.kappa = [k](double t, double, double z) { return k(t, z); };
  v.kappa0 = f.kappa0;
  v.modulus = Modulus::power(0.25, 1.0);
  v.symmetric = f.symmetric;
  v.time_homogeneous = f.time_homogeneous;
  v.x_independent = true;
  v.x_period = P;
  v.z_breaks = f.z_breaks;
  if (f.time_homogeneous) v.separable = {{[](double, double) { return 1.0; }, [k](double z) { return k(0.0, z); }}};
  v.id = "x-independent(" + f.id + ")";
  v.params = {{"kind", "frozen"}, {"kernel", f.to_json()}, {"P", P}};
  return v;
}

VariableKernelSpec VariableKernelSpec::from_json(const nlohmann::json& j, const ScalingProfile& p) {
  try {
    std::string kind = j.at("kind").get<std::string>();
    double eta = j.value("eta", 0.4);
    if (kind == "periodic_bump") return periodic_bump(p, j.at("A").get<double>(), j.value("P", 1.0), eta);
    if (kind == "periodic_level") return periodic_level(p, j.at("A").get<double>(), j.value("P", 1.0), eta);
    if (kind == "frozen") return from_frozen(FrozenKernelSpec::from_json(j.at("kernel"), p), j.value("P", 1.0));
    fail(ErrorKind::Config, "variable kernel: unknown kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("variable kernel: ") + e.what());
  }
}

nlohmann::json VariableKernelSpec::to_json() const { return params; }

void validate_variable(const VariableKernelSpec& spec) {
  if (!spec.kappa) fail(ErrorKind::Model, "variable kernel: kappa missing");
  if (!(spec.kappa0 >= 1.0)) fail(ErrorKind::Model, "variable kernel: kappa0 must be >= 1");
  const auto zs = z_lattice();
  const auto xs = x_samples(spec, 12);
  const auto ts = t_samples(spec);
  const double lo = 1.0 / spec.kappa0 * (1 - 1e-12), hi = spec.kappa0 * (1 + 1e-12);
  for (double t : ts)
    for (double x : xs)
      for (double z : zs) {
        double k = spec.kappa(t, x, z);
        if (!(k >= lo && k <= hi)) {
          std::ostringstream os;
          os << "kappa(" << t << "," << x << "," << z << ") = " << k << " outside [1/kappa0, kappa0]";
          fail(ErrorKind::Model, os.str());
        }
        if (spec.symmetric && std::fabs(k - spec.kappa(t, x, -z)) > 1e-12 * k)
          fail(ErrorKind::Model, "kappa declared symmetric in z but is not");
        if (spec.x_period > 0.0 && std::fabs(k - spec.kappa(t, x + spec.x_period, z)) > 1e-12 * k)
          fail(ErrorKind::Model, "kappa is not periodic with the declared period");
        if (!spec.separable.empty()) {
          double acc = 0.0;
          for (const auto& term : spec.separable) acc += term.coef(t, x) * term.basis(z);
          if (std::fabs(acc - k) > 1e-12 * k) fail(ErrorKind::Model, "separable terms do not reproduce kappa");
        }
      }
  // oscillation against ell^2 on pairs, including small separations
  const Modulus ell2 = spec.modulus.squared();
  std::vector<double> ds;
  for (int e = -20; e <= 2; ++e) ds.push_back(std::ldexp(1.0, e));
  for (double t : ts)
    for (double x : xs)
      for (double dd : ds)
        for (double z : zs) {
          double diff = std::fabs(spec.kappa(t, x + dd, z) - spec.kappa(t, x, z));
          if (diff > ell2(dd) * (1 + 1e-9) + 1e-15) {
            std::ostringstream os;
            os << "|kappa(x+d) - kappa(x)| = " << diff << " exceeds ell^2(d) = " << ell2(dd) << " at d = " << dd;
            fail(ErrorKind::Model, os.str());
          }
        }
  if (spec.x_independent)
    for (double t : ts)
      for (double z : zs)
        if (spec.kappa(t, xs.front(), z) != spec.kappa(t, xs.back(), z))
          fail(ErrorKind::Model, "kappa declared x-independent but varies in x");
  // frozen checks, including the Case2 odd-part cancellation when not symmetric
  for (double x : xs) validate_frozen(spec.freeze(x), 0.0, 1.0);
}

GateReport assumption_gate(const VariableKernelSpec& spec) {
  GateReport g;
  g.hypothesis = spec.symmetric ? "H1" : "H2";
  auto close = [&](const std::string& why) {
    g.open = false;
    g.failure = why;
    return g;
  };
  if (!check_dini(spec.modulus)) return close("modulus is not a Dini function");
  APhi a = compute_A_phi(spec.profile, spec.symmetric ? 0 : 1);
  g.A = a.value;
  if (a.divergent) return close(spec.symmetric ? "A^(0)_phi diverges" : "A^(1)_phi diverges");
  if (!spec.symmetric && spec.profile.case_tag() != CaseTag::Case1) {
    g.needs_M = true;
    try {
      MResult m = M_phi_ell(spec.modulus, spec.profile, 1.0);
      if (m.divergent) return close("M^phi_ell diverges");
      g.M_at_one = m.value;
    } catch (const Error& e) {
      return close(std::string("M^phi_ell: ") + e.what());
    }
  }
  g.open = true;
  return g;
}

// ---------------------------------------------------------------- pointwise q0

namespace {

// q0(t, s; ys[k] + offsets[i], ys[k]) sharing frequency nodes and basis symbols across ys
std::vector<std::vector<double>> q0_sweep(const VariableKernelSpec& spec, double t, double s,
                                          const std::vector<double>& ys, const std::vector<double>& offsets) {
  if (!(s > t)) fail(ErrorKind::Domain, "q0: need t < s");
  if (spec.profile.d() != 1) fail(ErrorKind::Domain, "q0: d = 1 only");
  std::vector<std::vector<double>> out(ys.size(), std::vector<double>(offsets.size(), 0.0));
  if (spec.x_independent) return out;
  const double tau = s - t;
  const double sigma = spec.profile.phi_inverse(tau);
  const bool sep = !spec.separable.empty();
  SeparableLine line;
  if (sep) line = separable_line(spec);
  const std::size_t nb = line.basis.size();

  // exponent over [t, s] frozen at y
  std::vector<std::vector<double>> ay(ys.size());
  std::vector<std::function<cplx(double)>> psiY(ys.size());
  for (std::size_t k = 0; k < ys.size(); ++k) {
    if (sep) {
      for (auto& c : line.coef) ay[k].push_back(tau * coef_average(c, spec.time_homogeneous, t, s, ys[k]));
      auto basis = std::make_shared<SeparableLine>(line);
      auto prof = std::make_shared<ScalingProfile>(spec.profile);
      auto a = ay[k];
      psiY[k] = [basis, prof, a](double xi) {
        cplx acc{0.0, 0.0};
        for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * symbol(basis->basis[j], *prof, xi);
        return acc;
      };
    } else {
      psiY[k] = exponent_function(spec.freeze(ys[k]), t, s);
    }
  }
  double Xi = 0.0;
  for (auto& f : psiY) Xi = std::max(Xi, frequency_cutoff(f, 1.0 / sigma, 36.8));
  double xmax = 0.0;
  for (double d : offsets) xmax = std::max(xmax, std::fabs(d));
  // panels of phase 2 pi at the largest offset are ample for the 10-point rule
  std::vector<double> nodes, weights;
  frequency_nodes(Xi, xmax / 8.0, nodes, weights);
  const std::size_t n = nodes.size();

  std::vector<std::vector<cplx>> bs(nb, std::vector<cplx>(n));
  for (std::size_t j = 0; j < nb; ++j)
    for (std::size_t i = 0; i < n; ++i) bs[j][i] = symbol(line.basis[j], spec.profile, nodes[i]);
  std::vector<cplx> phase(n);

  for (std::size_t k = 0; k < ys.size(); ++k) {
    const double y = ys[k];
    std::vector<cplx> E(n);
    if (sep) {
      for (std::size_t i = 0; i < n; ++i) {
        cplx acc{0.0, 0.0};
        for (std::size_t j = 0; j < nb; ++j) acc += ay[k][j] * bs[j][i];
        E[i] = std::exp(acc);
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) E[i] = std::exp(psiY[k](nodes[i]));
    }
    std::vector<cplx> sy;
    if (!sep) {
      ZKernel ky = kernel_of([&spec, t, y](double z) { return spec.kappa(t, y, z); }, spec.z_breaks, spec.profile,
                             spec.symmetric);
      sy.resize(n);
      for (std::size_t i = 0; i < n; ++i) sy[i] = symbol(ky, spec.profile, nodes[i]);
    }
    for (std::size_t o = 0; o < offsets.size(); ++o) {
      const double x = y + offsets[o];
      std::vector<cplx> d(n, cplx{0.0, 0.0});
      if (sep) {
        bool zero = true;
        for (std::size_t j = 0; j < nb; ++j) {
          double dc = line.coef[j](t, x) - line.coef[j](t, y);
          if (dc == 0.0) continue;
          zero = false;
          for (std::size_t i = 0; i < n; ++i) d[i] += dc * bs[j][i];
        }
        if (zero) continue;
      } else {
        ZKernel kx = kernel_of([&spec, t, x](double z) { return spec.kappa(t, x, z); }, spec.z_breaks, spec.profile,
                               spec.symmetric);
        for (std::size_t i = 0; i < n; ++i) d[i] = symbol(kx, spec.profile, nodes[i]) - sy[i];
      }
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        acc += weights[i] * (std::exp(cplx(0.0, offsets[o] * nodes[i])) * d[i] * E[i]).real();
      out[k][o] = acc / kPi;
    }
  }
  return out;
}

}  // namespace

std::vector<double> q0_many(const VariableKernelSpec& spec, double t, double s, const std::vector<double>& xs,
                            double y) {
  std::vector<double> off;
  for (double x : xs) off.push_back(x - y);
  return q0_sweep(spec, t, s, {y}, off)[0];
}

double q0(const VariableKernelSpec& spec, double t, double s, double x, double y) {
  return q0_many(spec, t, s, {x}, y)[0];
}

// ---------------------------------------------------------------- constants

double estimate_C0(const VariableKernelSpec& spec) {
  if (spec.x_independent) return 0.0;
  const Modulus ell2 = spec.modulus.squared();
  const bool fast = !spec.separable.empty();
  std::vector<int> ks = fast ? std::vector<int>{2, 3, 4, 5, 6, 7, 8, 9} : std::vector<int>{3, 6, 9};
  const auto ys = x_samples(spec, fast ? 8 : 3);
  const double reach = spec.x_period > 0.0 ? spec.x_period : 4.0;
  double C0 = 0.0;
  for (double tstart : t_samples(spec)) {
    if (tstart >= 1.0) continue;
    for (int k : ks) {
      double tau = std::ldexp(1.0, -k);
      if (tstart + tau > 1.0) continue;
      double sigma = spec.profile.phi_inverse(tau);
      std::vector<double> off{0.0};
      for (int e = -3; e <= 6; ++e) {
        double d = sigma * std::ldexp(1.0, e);
        if (d > reach) break;
        for (double m : {1.0, 1.5}) {
          off.push_back(m * d);
          off.push_back(-m * d);
        }
      }
      auto q = q0_sweep(spec, tstart, tstart + tau, ys, off);
      for (std::size_t yk = 0; yk < ys.size(); ++yk)
        for (std::size_t i = 0; i < off.size(); ++i)
          C0 = std::max(C0, std::fabs(q[yk][i]) / h_ell_phi(ell2, spec.profile, tau, std::fabs(off[i])));
    }
  }
  return C0;
}

double estimate_C1(const Modulus& ell2, const ScalingProfile& p) {
  double C1 = 0.0;
  for (int k : {2, 5, 8}) {
    double t = std::ldexp(1.0, -k);
    double sg = p.phi_inverse(t);
    for (double f : {0.125, 0.25, 0.5, 0.75, 0.875}) {
      double s = f * t;
      std::vector<double> xs;
      for (double m : {0.0, 0.5, 2.0, 8.0, 32.0, 128.0}) xs.push_back(m * sg);
      if (ell2.tags().R && ell2.tags().alpha < 1.0) {
        C1 = std::max(C1, verify_convolution(ell2, ell2, p, t, s, xs).dk1_ratio);
      } else {
        double rf = ell_phi(ell2, p, t - s) / (t - s) + ell_phi(ell2, p, s) / s;
        for (double x : xs)
          C1 = std::max(C1, convolve_h(ell2, ell2, p, t, s, x) / (rf * h_ell_phi(ell2, p, t, std::fabs(x))));
      }
    }
  }
  return C1;
}

Epsilon0Report epsilon0_from(const Modulus& ell, const ScalingProfile& p, double C0, double C1) {
  Epsilon0Report r;
  r.C0 = C0;
  r.C1 = C1;
  r.C2 = 2.0 * C1 * C0;
  const Modulus ell2 = ell.squared();
  if (!(r.C2 > 0.0)) {
    r.eps0 = 1.0;
  } else {
    double target = 1.0 / (2.0 * r.C2);
    double eps = 0.0;
    for (int k = 0; k <= 60; ++k) {
      double e = std::ldexp(1.0, -k);
      if (gamma_ell_phi(ell2, p, e) <= target) {
        eps = e;
        break;
      }
    }
    if (eps == 0.0) fail(ErrorKind::Numeric, "epsilon0: no dyadic interval down to 2^-60");
    r.eps0 = 0.5 * eps;
  }
  r.gamma_at_eps0 = gamma_ell_phi(ell2, p, r.eps0);
  r.contraction = r.C2 * r.gamma_at_eps0;
  return r;
}

Epsilon0Report epsilon0(const VariableKernelSpec& spec) {
  double C0 = estimate_C0(spec);
  double C1 = C0 > 0.0 ? estimate_C1(spec.modulus.squared(), spec.profile) : 0.0;
  return epsilon0_from(spec.modulus, spec.profile, C0, C1);
}

double periodized_rho(const ScalingProfile& p, double tau, double x, double L) {
  const int K = 64;
  double acc = 0.0;
  for (int k = -K; k <= K; ++k) acc += rho(p, tau, std::fabs(x + k * L));
  auto f = [&](double r) { return rho(p, tau, r); };
  acc += 2.0 * integrate_tail(f, (K + 0.5) * L, L) / L;
  return acc;
}

// ---------------------------------------------------------------- fields

std::vector<double> HeatKernelField::row_masses() const {
  Eigen::VectorXd m = P.rowwise().sum() * h();
  return std::vector<double>(m.data(), m.data() + m.size());
}

namespace {

GridDensity periodic_grid(const HeatKernelField& f, const Eigen::VectorXd& v) {
  GridDensity g;
  g.d = 1;
  g.n = f.M;
  g.dx = f.h();
  g.x0 = 0.0;
  g.periodic = true;
  g.scale = f.scale;
  g.t = f.t;
  g.s = f.s;
  g.values.assign(v.data(), v.data() + v.size());
  return g;
}

}  // namespace

GridDensity HeatKernelField::column(int j) const { return periodic_grid(*this, P.col(j)); }
GridDensity HeatKernelField::row(int i) const { return periodic_grid(*this, P.row(i).transpose()); }

void HeatKernelField::write_slices(const std::string& prefix, int i0, int j0) const {
  std::ofstream a(prefix + "_x.csv"), b(prefix + "_y.csv");
  if (!a || !b) fail(ErrorKind::Config, "cannot write slices with prefix " + prefix);
  a.precision(17);
  b.precision(17);
  a << "x,p\n";
  b << "y,p\n";
  for (int k = 0; k < M; ++k) {
    a << x(k) << "," << P(k, j0) << "\n";
    b << x(k) << "," << P(i0, k) << "\n";
  }
}

nlohmann::json HeatKernelField::ledger_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : ledger) j.push_back({{"t", r.t}, {"s", r.s}, {"method", r.method}, {"depth", r.depth}});
  return j;
}

HeatKernelField compose(const HeatKernelField& a, const HeatKernelField& b) {
  if (a.M != b.M || a.L != b.L) fail(ErrorKind::Config, "compose: grids differ");
  if (std::fabs(a.s - b.t) > 1e-12 * std::max(1.0, std::fabs(a.s))) fail(ErrorKind::Config, "compose: intervals not adjacent");
  HeatKernelField c;
  c.t = a.t;
  c.s = b.s;
  c.M = a.M;
  c.L = a.L;
  c.P = a.h() * (a.P * b.P);
  c.ledger = a.ledger;
  c.ledger.insert(c.ledger.end(), b.ledger.begin(), b.ledger.end());
  return c;
}

// ---------------------------------------------------------------- Parametrix

Parametrix::Parametrix(VariableKernelSpec spec, ParametrixConfig cfg) : spec_(std::move(spec)), cfg_(cfg) {
  if (spec_.profile.d() != 1) fail(ErrorKind::Domain, "parametrix: d = 1 only");
  if (!(spec_.x_period > 0.0)) fail(ErrorKind::Config, "parametrix: kappa must be periodic in x (x_period > 0)");
  if (cfg_.M < 16 || cfg_.M % 2) fail(ErrorKind::Config, "parametrix: M must be even and >= 16");
  if (cfg_.K < 2 || cfg_.K % 2) fail(ErrorKind::Config, "parametrix: K must be even and >= 2");
  if (cfg_.periods < 1) fail(ErrorKind::Config, "parametrix: periods must be >= 1");
  if (!(cfg_.tol > 0.0)) fail(ErrorKind::Config, "parametrix: tol must be positive");
  M_ = cfg_.M;
  H_ = M_ / 2 + 1;
  L_ = cfg_.periods * spec_.x_period;
  xi_.resize(H_);
  w_.resize(H_);
  for (int m = 0; m < H_; ++m) {
    xi_[m] = 2.0 * kPi * m / L_;
    w_[m] = (m == 0 || m == M_ / 2) ? 1.0 : 2.0;
  }
  cosT_.resize(M_, H_);
  sinT_.resize(M_, H_);
  for (int j = 0; j < M_; ++j)
    for (int m = 0; m < H_; ++m) {
      long r = (static_cast<long>(j) * m) % M_;
      double a = 2.0 * kPi * r / M_;
      cosT_(j, m) = std::cos(a);
      sinT_(j, m) = std::sin(a);
    }
  if (!spec_.separable.empty()) {
    auto sep = separable_line(spec_);
    for (const auto& zk : sep.basis) {
      std::vector<cplx> row(H_);
      for (int m = 0; m < H_; ++m) row[m] = symbol(zk, spec_.profile, xi_[m]);
      basis_symbol_.push_back(std::move(row));
    }
  }
}

const Eigen::MatrixXcd& Parametrix::table(double time) const {
  if (spec_.time_homogeneous) time = 0.0;
  auto it = tables_.find(time);
  if (it != tables_.end()) return it->second;
  Eigen::MatrixXcd T(M_, H_);
  if (!spec_.separable.empty()) {
    for (int j = 0; j < M_; ++j)
      for (int m = 0; m < H_; ++m) {
        cplx acc{0.0, 0.0};
        for (std::size_t b = 0; b < basis_symbol_.size(); ++b)
          acc += spec_.separable[b].coef(time, x(j)) * basis_symbol_[b][m];
        T(j, m) = acc;
      }
  } else {
    int rows = spec_.x_independent ? 1 : M_;
    for (int j = 0; j < rows; ++j) {
      double xj = x(j);
      ZKernel zk = kernel_of([this, time, xj](double z) { return spec_.kappa(time, xj, z); }, spec_.z_breaks,
                             spec_.profile, spec_.symmetric);
      for (int m = 0; m < H_; ++m) T(j, m) = symbol(zk, spec_.profile, xi_[m]);
    }
    for (int j = rows; j < M_; ++j) T.row(j) = T.row(0);
  }
  if (spec_.x_independent)
    for (int j = 1; j < M_; ++j) T.row(j) = T.row(0);
  return tables_.emplace(time, std::move(T)).first->second;
}

// [Re(c psi), -Im(c psi), -Re c, Im c] with c = w e^{i x xi} / L
Eigen::MatrixXd Parametrix::left_factor(const Eigen::MatrixXcd& psi) const {
  Eigen::MatrixXd A(M_, 4 * H_);
  for (int j = 0; j < M_; ++j)
    for (int m = 0; m < H_; ++m) {
      double c = w_[m] * cosT_(j, m) / L_, s = w_[m] * sinT_(j, m) / L_;
      cplx cp = cplx(c, s) * psi(j, m);
      A(j, m) = cp.real();
      A(j, H_ + m) = -cp.imag();
      A(j, 2 * H_ + m) = -c;
      A(j, 3 * H_ + m) = s;
    }
  return A;
}

std::vector<double> Parametrix::time_nodes(double t, double s) const {
  if (!(s > t)) fail(ErrorKind::Domain, "parametrix: need t < s");
  const int K = cfg_.K;
  double g = cfg_.grading > 0.0 ? cfg_.grading : std::max(2.0, 1.0 / spec_.profile.declared().beta1);
  std::vector<double> r(K + 1);
  for (int k = 0; k <= K; ++k) {
    double v = double(k) / K;
    double u = v <= 0.5 ? 0.5 * std::pow(2.0 * v, g) : 1.0 - 0.5 * std::pow(2.0 * (1.0 - v), g);
    r[k] = t + (s - t) * u;
  }
  r[0] = t;
  r[K] = s;
  return r;
}

double Parametrix::nyquist_decay(double t, double s) const {
  auto r = time_nodes(t, s);
  double worst = -HUGE_VAL;
  for (int j = 0; j < M_; ++j) {
    double acc = 0.0;
    for (int p = 0; p < cfg_.K; ++p) acc += (r[p + 1] - r[p]) * table(0.5 * (r[p] + r[p + 1]))(j, H_ - 1).real();
    worst = std::max(worst, acc);
  }
  return worst;
}

std::shared_ptr<VolterraSystem> Parametrix::system(double t, double s, bool with_gradient) const {
  auto sys = std::make_shared<VolterraSystem>();
  sys->t = t;
  sys->s = s;
  sys->r = time_nodes(t, s);
  const auto& r = sys->r;
  const int K = cfg_.K, M = M_, H = H_;
  const double h = this->h();

  double ny = nyquist_decay(t, s);
  if (ny > -cfg_.min_decay) {
    std::ostringstream os;
    os << "parametrix: Re Psi at the Nyquist frequency is " << ny << " > -" << cfg_.min_decay
       << " on [" << t << "," << s << "]; increase M";
    fail(ErrorKind::Resolution, os.str());
  }

  std::vector<const Eigen::MatrixXcd*> panel(K), inst(K + 1);
  std::vector<double> dl(K);
  for (int p = 0; p < K; ++p) {
    panel[p] = &table(0.5 * (r[p] + r[p + 1]));
    dl[p] = r[p + 1] - r[p];
  }
  for (int i = 0; i <= K; ++i) inst[i] = &table(r[i]);
  std::vector<Eigen::MatrixXcd> S(K + 1, Eigen::MatrixXcd::Zero(M, H));
  for (int p = 0; p < K; ++p) S[p + 1] = S[p] + dl[p] * (*panel[p]);

  // per-panel hat integrals, independent of the left node
  std::vector<Eigen::MatrixXcd> G0(K), G1(K);
  for (int p = 0; p < K; ++p) {
    G0[p].resize(M, H);
    G1[p].resize(M, H);
    for (int z = 0; z < M; ++z)
      for (int m = 0; m < H; ++m) {
        cplx a = dl[p] * (*panel[p])(z, m);
        G0[p](z, m) = dl[p] * g0(a);
        G1[p](z, m) = dl[p] * g1(a);
      }
  }

  // weights of the norm
  const Modulus ell2 = spec_.modulus.squared();
  sys->weight.resize(K);
  for (int i = 0; i < K; ++i) {
    std::vector<double> wd(M / 2 + 1);
    for (int d = 0; d <= M / 2; ++d) wd[d] = 1.0 / h_ell_phi(ell2, spec_.profile, s - r[i], d * h);
    Eigen::MatrixXd W(M, M);
    for (int a = 0; a < M; ++a)
      for (int b = 0; b < M; ++b) {
        int d = std::abs(a - b);
        W(a, b) = wd[std::min(d, M - d)];
      }
    sys->weight[i] = std::move(W);
  }

  Eigen::MatrixXd B(4 * H, M);
  auto fill_B = [&](const Eigen::MatrixXcd& V, const Eigen::MatrixXcd& psi) {
    for (int z = 0; z < M; ++z)
      for (int m = 0; m < H; ++m) {
        cplx v1 = cplx(cosT_(z, m), -sinT_(z, m)) * V(z, m);
        cplx v2 = v1 * psi(z, m);
        B(m, z) = v1.real();
        B(H + m, z) = v1.imag();
        B(2 * H + m, z) = v2.real();
        B(3 * H + m, z) = v2.imag();
      }
  };

  sys->q0.resize(K + 1);
  Eigen::MatrixXcd V(M, H);
  for (int i = 0; i <= K; ++i) {
    Eigen::MatrixXd A = left_factor(*inst[i]);
    if (spec_.x_independent) {
      sys->q0[i] = Eigen::MatrixXd::Zero(M, M);
    } else {
      V = (S[K] - S[i]).array().exp().matrix();
      fill_B(V, *inst[i]);
      sys->q0[i] = A * B;
    }
    if (i == K || spec_.x_independent) continue;
    for (int k = i; k <= K; ++k) {
      V.setZero();
      if (k > i) V += ((S[k - 1] - S[i]).array().exp() * G1[k - 1].array()).matrix();
      if (k < K) V += ((S[k] - S[i]).array().exp() * G0[k].array()).matrix();
      fill_B(V, *inst[i]);
      sys->QI[{i, k}] = h * (A * B);
      if (i == 0) {
        // the v1 rows with [Re c, -Im c] give the frozen kernel integrated against the hat
        Eigen::MatrixXd Apv(M, 2 * H);
        Apv.leftCols(H) = -A.middleCols(2 * H, H);   // Re c
        Apv.rightCols(H) = -A.middleCols(3 * H, H);  // -Im c
        sys->PI.push_back(h * (Apv * B.topRows(2 * H)));
        if (with_gradient) {
          Eigen::MatrixXd Ag(M, 2 * H);
          for (int j = 0; j < M; ++j)
            for (int m = 0; m < H; ++m) {
              double c = w_[m] * cosT_(j, m) / L_, sn = w_[m] * sinT_(j, m) / L_;
              Ag(j, m) = -xi_[m] * sn;
              Ag(j, H + m) = -xi_[m] * c;
            }
          sys->GI.push_back(h * (Ag * B.topRows(2 * H)));
        }
      }
    }
  }
  // frozen kernel over [t, s]
  {
    V = S[K].array().exp().matrix();
    fill_B(V, *inst[0]);
    Eigen::MatrixXd Apv(M, 2 * H);
    for (int j = 0; j < M; ++j)
      for (int m = 0; m < H; ++m) {
        Apv(j, m) = w_[m] * cosT_(j, m) / L_;
        Apv(j, H + m) = -w_[m] * sinT_(j, m) / L_;
      }
    sys->P0 = Apv * B.topRows(2 * H);
    if (with_gradient) {
      Eigen::MatrixXd Ag(M, 2 * H);
      for (int j = 0; j < M; ++j)
        for (int m = 0; m < H; ++m) {
          Ag(j, m) = -xi_[m] * w_[m] * sinT_(j, m) / L_;
          Ag(j, H + m) = -xi_[m] * w_[m] * cosT_(j, m) / L_;
        }
      sys->GI.insert(sys->GI.begin(), Ag * B.topRows(2 * H));
    }
  }
  return sys;
}

std::vector<Eigen::MatrixXd> Parametrix::picard_step(const VolterraSystem& sys,
                                                     const std::vector<Eigen::MatrixXd>& q_prev) const {
  const int K = static_cast<int>(sys.r.size()) - 1;
  if (static_cast<int>(q_prev.size()) != K + 1) fail(ErrorKind::Config, "picard_step: time grids differ");
  std::vector<Eigen::MatrixXd> out(K + 1, Eigen::MatrixXd::Zero(M_, M_));
  if (sys.QI.empty()) return out;
  for (int i = 0; i < K; ++i)
    for (int k = i; k <= K; ++k) {
      const auto& Q = sys.QI.at({i, k});
      if (Q.rows() != q_prev[k].rows()) fail(ErrorKind::Config, "picard_step: space grids differ");
      out[i].noalias() += Q * q_prev[k];
    }
  return out;
}

double Parametrix::weighted_norm(const VolterraSystem& sys, const std::vector<Eigen::MatrixXd>& q) const {
  double n = 0.0;
  for (std::size_t i = 0; i < sys.weight.size(); ++i) n = std::max(n, (q[i].cwiseAbs().cwiseProduct(sys.weight[i])).maxCoeff());
  return n;
}

double Parametrix::residual(const VolterraSystem& sys, const std::vector<Eigen::MatrixXd>& q) const {
  auto Vq = picard_step(sys, q);
  for (std::size_t i = 0; i < q.size(); ++i) Vq[i] = q[i] - sys.q0[i] - Vq[i];
  return weighted_norm(sys, Vq);
}

QSolution Parametrix::solve_q(double t, double s) const { return solve_q(*system(t, s)); }

QSolution Parametrix::solve_q(const VolterraSystem& sys) const {
  QSolution sol;
  sol.t = sys.t;
  sol.s = sys.s;
  sol.r = sys.r;
  sol.q = sys.q0;
  std::vector<Eigen::MatrixXd> qn = sys.q0;
  double prev = weighted_norm(sys, qn);
  sol.norms.push_back(prev);
  if (prev == 0.0) {
    sol.residual = residual(sys, sol.q);
    return sol;
  }
  int above = 0;
  for (int n = 1; n <= cfg_.max_iter; ++n) {
    qn = picard_step(sys, qn);
    double cur = weighted_norm(sys, qn);
    double ratio = cur / prev;
    sol.norms.push_back(cur);
    sol.ratios.push_back(ratio);
    for (std::size_t i = 0; i < qn.size(); ++i) sol.q[i] += qn[i];
    sol.iterations = n;
    if (!std::isfinite(cur)) fail(ErrorKind::Convergence, "solve_q: non-finite Picard term");
    above = ratio >= 1.0 ? above + 1 : 0;
    if (above >= 2) {
      std::ostringstream os;
      os << "solve_q: Picard ratio " << ratio << " >= 1 on [" << sys.t << "," << sys.s
         << "]; use a shorter interval";
      fail(ErrorKind::Convergence, os.str());
    }
    if (cur == 0.0 || (ratio < 1.0 && cur <= cfg_.tol * (1.0 - ratio) / ratio)) break;
    if (n == cfg_.max_iter) fail(ErrorKind::Convergence, "solve_q: iteration budget exhausted");
    prev = cur;
  }
  sol.residual = residual(sys, sol.q);
  return sol;
}

QSolution Parametrix::solve_q_direct(const VolterraSystem& sys) const {
  QSolution sol;
  sol.t = sys.t;
  sol.s = sys.s;
  sol.r = sys.r;
  const int K = static_cast<int>(sys.r.size()) - 1;
  sol.q.assign(K + 1, Eigen::MatrixXd::Zero(M_, M_));
  sol.q[K] = sys.q0[K];
  if (!sys.QI.empty()) {
    for (int i = K - 1; i >= 0; --i) {
      Eigen::MatrixXd rhs = sys.q0[i];
      for (int k = i + 1; k <= K; ++k) rhs.noalias() += sys.QI.at({i, k}) * sol.q[k];
      Eigen::MatrixXd Aii = Eigen::MatrixXd::Identity(M_, M_) - sys.QI.at({i, i});
      sol.q[i] = Aii.partialPivLu().solve(rhs);
    }
  }
  sol.residual = residual(sys, sol.q);
  return sol;
}

HeatKernelField Parametrix::frozen_field(double t, double s) const {
  auto sys = system(t, s);
  HeatKernelField f;
  f.t = t;
  f.s = s;
  f.M = M_;
  f.L = L_;
  f.scale = spec_.profile.phi_inverse(s - t);
  f.P = sys->P0;
  f.ledger.push_back({t, s, "frozen", 0});
  return f;
}

HeatKernelField Parametrix::assemble_p(const VolterraSystem& sys, const QSolution& q) const {
  if (q.r.size() != sys.r.size() || q.t != sys.t || q.s != sys.s) fail(ErrorKind::Config, "assemble_p: q does not match the system");
  HeatKernelField f;
  f.t = sys.t;
  f.s = sys.s;
  f.M = M_;
  f.L = L_;
  f.scale = spec_.profile.phi_inverse(sys.s - sys.t);
  f.P = sys.P0;
  if (!spec_.x_independent)
    for (std::size_t k = 0; k < q.q.size(); ++k) f.P.noalias() += sys.PI[k] * q.q[k];
  f.ledger.push_back({sys.t, sys.s, "direct", 0});
  return f;
}

Eigen::MatrixXd Parametrix::assemble_gradient(const VolterraSystem& sys, const QSolution& q) const {
  if (sys.GI.empty() || (!spec_.x_independent && sys.GI.size() != sys.r.size() + 1)) fail(ErrorKind::Config, "assemble_gradient: system built without gradients");
  Eigen::MatrixXd G = sys.GI[0];
  if (!spec_.x_independent)
    for (std::size_t k = 0; k < q.q.size(); ++k) G.noalias() += sys.GI[k + 1] * q.q[k];
  return G;
}

HeatKernelField Parametrix::field_rec(double t, double s, double eps0, int depth) const {
  if (s - t <= eps0 * (1 + 1e-12)) {
    auto sys = system(t, s);
    HeatKernelField f = assemble_p(*sys, solve_q_direct(*sys));
    f.ledger.back().depth = depth;
    return f;
  }
  double m = 0.5 * (t + s);
  HeatKernelField f = compose(field_rec(t, m, eps0, depth + 1), field_rec(m, s, eps0, depth + 1));
  f.scale = spec_.profile.phi_inverse(s - t);
  f.ledger.push_back({t, s, "ck", depth});
  double drift = 0.0;
  for (double v : f.row_masses()) drift = std::max(drift, std::fabs(v - 1.0));
  if (drift > cfg_.mass_budget) {
    std::ostringstream os;
    os << "extend_ck: row mass drift " << drift << " exceeds budget " << cfg_.mass_budget << " on [" << t << "," << s << "]";
    fail(ErrorKind::Accuracy, os.str());
  }
  return f;
}

HeatKernelField Parametrix::field(double t, double s, double eps0) const {
  if (!(s > t)) fail(ErrorKind::Domain, "field: need t < s");
  if (!(eps0 > 0.0)) fail(ErrorKind::Domain, "field: eps0 must be positive");
  return field_rec(t, s, eps0, 0);
}

}  // namespace hk
