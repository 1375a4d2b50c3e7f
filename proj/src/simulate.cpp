#include "hk/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hk/error.hpp"
#include "hk/quad.hpp"

namespace hk {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kCell = 1.0 / 64.0;  // log-radius spacing of the tail table

// int_a^b f over [a, b] (b may be +inf), split at interior breaks
double segment(const std::function<double(double)>& f, double a, double b, const std::vector<double>& breaks) {
  std::vector<double> bp{a};
  for (double z : breaks)
    if (z > a && z < b) bp.push_back(z);
  if (std::isfinite(b)) bp.push_back(b);
  auto g = [&](double z) { return (z > a && z < b) ? f(z) : 0.0; };
  return integrate_line(g, bp);
}

}  // namespace

void validate_sim(const SimConfig& cfg) {
  if (!(cfg.eps_j > 0.0 && cfg.eps_j <= 1.0)) fail(ErrorKind::Config, "simulate: eps_j must lie in (0, 1]");
  if (cfg.paths < 1) fail(ErrorKind::Config, "simulate: paths must be >= 1");
  if (cfg.steps < 1) fail(ErrorKind::Config, "simulate: steps must be >= 1");
}

std::mt19937_64 path_rng(std::uint64_t seed, std::uint64_t path) {
  std::seed_seq sq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                   static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32), 0x6b31u};
  return std::mt19937_64(sq);
}

// ---------------------------------------------------------------- tail sampler

TailSampler::TailSampler(const ScalingProfile& p, double lo) : p_(p), lo_(lo) {
  if (!(lo > 0.0)) fail(ErrorKind::Domain, "TailSampler: lo must be positive");
  double u0 = std::floor(std::log(lo) / kCell) * kCell;
  double lphi0 = p.log_phi(u0);
  double u = u0;
  std::vector<double> us{u};
  while (p.log_phi(u) - lphi0 < 40.0) {
    u += kCell;
    us.push_back(u);
    if (us.size() > 400000) fail(ErrorKind::Numeric, "TailSampler: phi grows too slowly");
  }
  top_ = std::exp(us.back());
  // T(top) = int_{log top}^inf du / phi(e^u)
  auto f = [&](double lu) { return lu < 1e4 ? std::exp(-p_.log_phi(lu)) : 0.0; };
  t_top_ = integrate_tail(f, us.back(), 1.0);
  const GaussRule& g = gauss_rule(6);
  std::vector<double> T(us.size());
  T.back() = t_top_;
  for (std::size_t i = us.size() - 1; i-- > 0;) {
    double a = us[i], b = us[i + 1], c = 0.5 * (a + b), h = 0.5 * (b - a), acc = 0.0;
    for (std::size_t k = 0; k < g.x.size(); ++k) acc += g.w[k] * std::exp(-p_.log_phi(c + h * g.x[k]));
    T[i] = T[i + 1] + h * acc;
  }
  std::vector<double> x(us.size()), y(us.size());
  for (std::size_t i = 0; i < us.size(); ++i) {
    x[i] = -std::log(T[i]);
    y[i] = us[i];
  }
  lr_ = y;
  lt_.resize(T.size());
  for (std::size_t i = 0; i < T.size(); ++i) lt_[i] = std::log(T[i]);
  inv_ = MonotoneSpline(x, y);
}

double TailSampler::T(double r) const {
  if (!(r > 0.0)) fail(ErrorKind::Domain, "TailSampler: r must be positive");
  auto f = [&](double lu) { return lu < 1e4 ? std::exp(-p_.log_phi(lu)) : 0.0; };
  return integrate_tail(f, std::log(r), 1.0);
}

double TailSampler::inverse(double tail) const {
  if (!(tail > 0.0)) return HUGE_VAL;
  if (tail < t_top_) return p_.phi_inverse(p_.phi(top_) * t_top_ / tail);
  return std::exp(inv_(-std::log(tail)));
}

double TailSampler::sample(double a, double b, double u) const {
  double ta = T(a), tb = std::isfinite(b) ? T(b) : 0.0;
  return inverse(tb + u * (ta - tb));
}

// ---------------------------------------------------------------- moments

StepMoments step_moments(const FrozenKernelSpec& spec, double r0, double r1, const SimConfig& cfg) {
  StepMoments m;
  const double h = r1 - r0;
  ZKernel zk = averaged_kernel(spec, r0, r1);
  const auto& p = spec.profile;
  const double eps = cfg.eps_j;
  std::vector<double> br = zk.breaks;
  if (zk.radial2) {
    m.variance = h * kPi * segment([&](double r) { return zk.even(r) * std::exp(std::log(r) - p.log_phi(std::log(r))); }, 0.0, eps, br);
    return m;
  }
  // written through log phi so that tiny radii underflow to 0 instead of 0/0
  m.variance = h * segment([&](double z) { return zk.even(z) * std::exp(std::log(z) - p.log_phi(std::log(z))); }, 0.0, eps, br);
  if (zk.odd) {
    auto odd = [&](double z) { return zk.odd(z) * std::exp(-p.log_phi(std::log(z))); };
    switch (p.case_tag()) {
      case CaseTag::Case1: m.drift = h * segment(odd, 0.0, eps, br); break;
      case CaseTag::Case2: m.drift = -h * segment(odd, eps, 1.0, br); break;
      case CaseTag::Case3: m.drift = -h * segment(odd, eps, HUGE_VAL, br); break;
    }
  }
  return m;
}

// ---------------------------------------------------------------- samples

double SampleSet::mean(int axis) const {
  double acc = 0.0;
  long n = size();
  for (long i = 0; i < n; ++i) acc += values[i * d + axis];
  return acc / n;
}

double SampleSet::stddev(int axis) const {
  double m = mean(axis), acc = 0.0;
  long n = size();
  for (long i = 0; i < n; ++i) acc += (values[i * d + axis] - m) * (values[i * d + axis] - m);
  return std::sqrt(acc / std::max(1L, n - 1));
}

void SampleSet::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) fail(ErrorKind::Config, "cannot write " + path);
  f.precision(17);
  f << (d == 1 ? "x\n" : "x1,x2\n");
  for (long i = 0; i < size(); ++i) {
    f << values[i * d];
    if (d == 2) f << "," << values[i * d + 1];
    f << "\n";
  }
}

namespace {

struct Engine {
  const TailSampler* ts = nullptr;
  double kappa0 = 1.0;
  double rate = 0.0;  // proposal rate per unit time on |z| > eps_j
  double tail_eps = 0.0;
  double eps = 0.02;
  int d = 1;
  bool gauss = true;
};

Engine make_engine(const ScalingProfile& p, double kappa0, const SimConfig& cfg, const TailSampler& ts) {
  Engine e;
  e.ts = &ts;
  e.kappa0 = kappa0;
  e.d = p.d();
  e.eps = cfg.eps_j;
  e.gauss = cfg.gaussian_correction;
  e.tail_eps = ts.T(cfg.eps_j);
  e.rate = kappa0 * (e.d == 1 ? 2.0 : 2.0 * kPi) * e.tail_eps;
  return e;
}

struct Jump {
  double u;
  double z[2];
};

// One step [r0, r1] from position x. kappa(u, z) is the kernel for this step
// (z signed in d = 1, |z| in d = 2). Calls obs(time, position) on the skeleton
// when given; stops early when obs returns true.
template <class Kappa, class Obs>
bool step(std::mt19937_64& g, const Engine& e, double r0, double r1, const StepMoments& m, Kappa&& kappa,
          double* x, Obs* obs) {
  const double h = r1 - r0;
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::poisson_distribution<long> pois(e.rate * h);
  long n = pois(g);
  std::vector<Jump> jumps;
  for (long i = 0; i < n; ++i) {
    double r = e.ts->inverse(U(g) * e.tail_eps);
    double dir = U(g);
    double u = r0 + h * U(g);
    double v = U(g);
    Jump j{u, {0.0, 0.0}};
    double k;
    if (e.d == 1) {
      double z = dir < 0.5 ? r : -r;
      k = kappa(u, z);
      j.z[0] = z;
    } else {
      double a = 2.0 * kPi * dir;
      k = kappa(u, r);
      j.z[0] = r * std::cos(a);
      j.z[1] = r * std::sin(a);
    }
    if (k > e.kappa0 * (1 + 1e-12) || k < 0.0) fail(ErrorKind::Model, "simulate: kappa outside [0, kappa0] at a jump");
    if (v * e.kappa0 < k) jumps.push_back(j);
  }
  double cont[2] = {m.drift, 0.0};
  if (e.d == 2) cont[0] = 0.0;
  if (e.gauss && m.variance > 0.0) {
    std::normal_distribution<double> N(0.0, 1.0);
    double sd = std::sqrt(m.variance);
    for (int a = 0; a < e.d; ++a) cont[a] += sd * N(g);
  }
  if (obs) {
    std::sort(jumps.begin(), jumps.end(), [](const Jump& a, const Jump& b) { return a.u < b.u; });
    double acc[2] = {0.0, 0.0};
    for (const auto& j : jumps) {
      double f = (j.u - r0) / h;
      for (int a = 0; a < e.d; ++a) acc[a] += j.z[a];
      double pos[2];
      for (int a = 0; a < e.d; ++a) pos[a] = x[a] + f * cont[a] + acc[a];
      if ((*obs)(j.u, pos)) return true;
    }
  }
  for (int a = 0; a < e.d; ++a) x[a] += cont[a];
  for (const auto& j : jumps)
    for (int a = 0; a < e.d; ++a) x[a] += j.z[a];
  if (obs && (*obs)(r1, x)) return true;
  return false;
}

using NoObs = bool (*)(double, const double*);

std::vector<double> step_grid(double t, double s, int steps) {
  // uniform, so homogeneous kernels share one set of step moments
  std::vector<double> r(steps + 1);
  for (int k = 0; k <= steps; ++k) r[k] = t + (s - t) * k / steps;
  r[steps] = s;
  return r;
}

// Euler driver for variable kappa on an x-periodic table of step moments.
class EulerDriver {
 public:
  EulerDriver(const VariableKernelSpec& spec, double t, double s, const SimConfig& cfg)
      : spec_(spec), cfg_(cfg), ts_(spec.profile, cfg.eps_j) {
    if (spec.profile.d() != 1) fail(ErrorKind::Domain, "Euler scheme: d = 1 only");
    if (!(spec.x_period > 0.0)) fail(ErrorKind::Config, "Euler scheme: kappa must be periodic in x");
    r_ = step_grid(t, s, cfg.steps);
    eng_ = make_engine(spec.profile, spec.kappa0, cfg, ts_);
    int tables = spec.time_homogeneous ? 1 : cfg.steps;
    mom_.resize(tables);
    for (int k = 0; k < tables; ++k) {
      mom_[k].resize(kTab + 1);
      for (int i = 0; i <= kTab; ++i) {
        double x = spec.x_period * i / kTab;
        mom_[k][i] = step_moments(spec.freeze(x), r_[k], r_[k + 1], cfg);
      }
    }
  }

  const std::vector<double>& grid() const { return r_; }

  StepMoments moments(int k, double x) const {
    const auto& tab = mom_[spec_.time_homogeneous ? 0 : k];
    double v = x / spec_.x_period;
    v -= std::floor(v);
    double f = v * kTab;
    int i = std::min(static_cast<int>(f), kTab - 1);
    double w = f - i;
    StepMoments m;
    m.drift = (1 - w) * tab[i].drift + w * tab[i + 1].drift;
    m.variance = (1 - w) * tab[i].variance + w * tab[i + 1].variance;
    return m;
  }

  template <class Obs>
  double run(std::mt19937_64& g, double x0, Obs* obs) const {
    double x[2] = {x0, 0.0};
    for (int k = 0; k + 1 < static_cast<int>(r_.size()); ++k) {
      double xl = x[0];
      auto kap = [&](double u, double z) { return spec_.kappa(u, xl, z); };
      if (step(g, eng_, r_[k], r_[k + 1], moments(k, xl), kap, x, obs)) break;
    }
    return x[0];
  }

 private:
  static constexpr int kTab = 512;
  const VariableKernelSpec& spec_;
  SimConfig cfg_;
  TailSampler ts_;
  Engine eng_;
  std::vector<double> r_;
  std::vector<std::vector<StepMoments>> mom_;
};

// Frozen driver: exact in law for any number of steps.
class FrozenDriver {
 public:
  FrozenDriver(const FrozenKernelSpec& spec, double t, double s, const SimConfig& cfg)
      : spec_(spec), ts_(spec.profile, cfg.eps_j) {
    if (spec.d() == 2 && !spec.symmetric) fail(ErrorKind::Domain, "simulate: d = 2 needs an isotropic kernel");
    r_ = step_grid(t, s, cfg.steps);
    eng_ = make_engine(spec.profile, spec.kappa0, cfg, ts_);
    int n = spec.time_homogeneous ? 1 : cfg.steps;
    for (int k = 0; k < n; ++k) mom_.push_back(step_moments(spec, r_[k], r_[k + 1], cfg));
  }

  template <class Obs>
  void run(std::mt19937_64& g, double* x, Obs* obs) const {
    for (int k = 0; k + 1 < static_cast<int>(r_.size()); ++k) {
      const StepMoments& m = mom_[spec_.time_homogeneous ? 0 : k];
      auto kap = [&](double u, double z) { return spec_.kappa(u, z); };
      if (step(g, eng_, r_[k], r_[k + 1], m, kap, x, obs)) break;
    }
  }

 private:
  const FrozenKernelSpec& spec_;
  TailSampler ts_;
  Engine eng_;
  std::vector<double> r_;
  std::vector<StepMoments> mom_;
};

}  // namespace

SampleSet simulate_frozen(const FrozenKernelSpec& spec, double t, double s, const SimConfig& cfg) {
  validate_sim(cfg);
  if (!(s > t)) fail(ErrorKind::Domain, "simulate: need t < s");
  FrozenDriver drv(spec, t, s, cfg);
  SampleSet out;
  out.d = spec.d();
  out.values.resize(cfg.paths * out.d);
  for (long i = 0; i < cfg.paths; ++i) {
    auto g = path_rng(cfg.seed, i);
    double x[2] = {0.0, 0.0};
    drv.run(g, x, static_cast<NoObs*>(nullptr));
    for (int a = 0; a < out.d; ++a) out.values[i * out.d + a] = x[a];
  }
  return out;
}

SampleSet simulate_variable_euler(const VariableKernelSpec& spec, double t, double s, double x0, const SimConfig& cfg) {
  validate_sim(cfg);
  if (!(s > t)) fail(ErrorKind::Domain, "simulate: need t < s");
  if (spec.x_independent) {
    // the frozen engine consumes randomness identically step for step
    FrozenKernelSpec f = spec.freeze(x0);
    SampleSet out = simulate_frozen(f, t, s, cfg);
    for (double& v : out.values) v += x0;
    return out;
  }
  if (cfg.steps < 8) fail(ErrorKind::Config, "Euler scheme: need at least 8 steps");
  EulerDriver drv(spec, t, s, cfg);
  SampleSet out;
  out.values.resize(cfg.paths);
  for (long i = 0; i < cfg.paths; ++i) {
    auto g = path_rng(cfg.seed, i);
    out.values[i] = drv.run(g, x0, static_cast<NoObs*>(nullptr));
  }
  return out;
}

// ---------------------------------------------------------------- statistics

double GridCDF::operator()(double v) const {
  if (v <= x.front()) return F.front();
  if (v >= x.back()) return F.back();
  std::size_t k = std::upper_bound(x.begin(), x.end(), v) - x.begin() - 1;
  double w = (v - x[k]) / (x[k + 1] - x[k]);
  return (1 - w) * F[k] + w * F[k + 1];
}

GridCDF frozen_cdf(const FrozenKernelSpec& spec, double t, double s, double max_outside) {
  if (spec.d() != 1) fail(ErrorKind::Domain, "frozen_cdf: d = 1 only");
  // widen the window at fixed step until the missing tail is small
  GridConfig gc;
  gc.n = 4096;
  GridDensity g = density_fft(spec, t, s, gc);
  while (g.outside_mass > max_outside && gc.n < 65536) {
    gc.n *= 2;
    gc.dx = g.dx;
    g = density_fft(spec, t, s, gc);
  }
  if (g.outside_mass > max_outside) {
    std::ostringstream os;
    os << "frozen_cdf: mass beyond the FFT window is " << g.outside_mass << " > " << max_outside;
    fail(ErrorKind::Resolution, os.str());
  }
  int i0 = g.index_of(0.0);
  GridCDF c;
  c.x.resize(g.n);
  c.F.resize(g.n);
  for (int i = 0; i < g.n; ++i) c.x[i] = g.x(i);
  c.F[i0] = cdf_direct(spec, t, s, g.x(i0));
  // cumulative Simpson-corrected trapezoid using the interpolated midpoint
  auto cell = [&](int i) {
    double a = g.values[i], b = g.values[i + 1], mid = g.at(0.5 * (g.x(i) + g.x(i + 1)));
    return g.dx * (a + 4.0 * mid + b) / 6.0;
  };
  for (int i = i0; i + 1 < g.n; ++i) c.F[i + 1] = c.F[i] + cell(i);
  for (int i = i0; i > 0; --i) c.F[i - 1] = c.F[i] - cell(i - 1);
  for (double& v : c.F) v = std::clamp(v, 0.0, 1.0);
  return c;
}

GridCDF field_cdf(const HeatKernelField& f, int i) {
  GridDensity g = f.row(i);
  const int M = f.M;
  GridCDF c;
  // offsets -L/2 .. L/2 around x_i
  c.x.resize(M + 1);
  c.F.resize(M + 1);
  c.F[0] = 0.0;
  c.x[0] = -0.5 * f.L;
  for (int k = 0; k < M; ++k) {
    double a = -0.5 * f.L + k * f.h();
    double b = a + f.h();
    double mid = g.at(f.x(i) + 0.5 * (a + b));
    c.F[k + 1] = c.F[k] + f.h() * (g.at(f.x(i) + a) + 4.0 * mid + g.at(f.x(i) + b)) / 6.0;
    c.x[k + 1] = b;
  }
  double total = c.F.back();
  for (double& v : c.F) v /= total;
  return c;
}

std::vector<double> wrap_offsets(const std::vector<double>& xs, double x0, double L) {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double v = (xs[i] - x0) / L + 0.5;
    out[i] = (v - std::floor(v) - 0.5) * L;
  }
  return out;
}

KSResult ks_test(std::vector<double> x, const GridCDF& F) {
  KSResult r;
  r.n = static_cast<long>(x.size());
  if (r.n < 1000) {
    std::ostringstream os;
    os << "KS test: " << r.n << " samples; at least 1000 are required";
    fail(ErrorKind::Statistics, os.str());
  }
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(r.n);
  for (long i = 0; i < r.n; ++i) {
    double f = F(x[i]);
    r.D = std::max({r.D, f - i / n, (i + 1) / n - f});
  }
  r.critical = 1.358 / std::sqrt(n);
  r.pass = r.D <= r.critical;
  return r;
}

ECFResult ecf_check(const SampleSet& s, const FrozenKernelSpec& spec, double t, double s_time,
                    const std::vector<double>& xi) {
  if (s.d != 1) fail(ErrorKind::Domain, "ecf_check: d = 1 only");
  ECFResult r;
  r.xi = xi;
  const long n = s.size();
  r.bound = 4.0 / std::sqrt(static_cast<double>(n));
  r.pass = true;
  for (double k : xi) {
    cplx acc{0.0, 0.0};
    for (long i = 0; i < n; ++i) acc += std::exp(cplx(0.0, k * s.values[i]));
    acc /= static_cast<double>(n);
    double e = std::abs(acc - std::exp(characteristic_exponent(spec, t, s_time, k)));
    r.error.push_back(e);
    r.pass = r.pass && e <= r.bound;
  }
  return r;
}

namespace {

void require_paths(long paths, long need, const char* what) {
  if (paths < need) {
    std::ostringstream os;
    os << what << ": " << paths << " paths; at least " << need << " are required";
    fail(ErrorKind::Statistics, os.str());
  }
}

}  // namespace

ExitReport exit_time_stats(const VariableKernelSpec& spec, double t, double x0, double eps,
                           const std::vector<double>& rs, const SimConfig& cfg) {
  validate_sim(cfg);
  require_paths(cfg.paths, 10000, "exit_time_stats");
  if (rs.empty() || !(eps > 0.0)) fail(ErrorKind::Domain, "exit_time_stats: need radii grid and eps > 0");
  const double horizon = *std::max_element(rs.begin(), rs.end());
  std::vector<double> first(cfg.paths, HUGE_VAL);
  auto watch = [&](long i) {
    return [&, i](double u, const double* pos) {
      if (std::fabs(pos[0] - x0) >= eps) {
        first[i] = u;
        return true;
      }
      return false;
    };
  };
  if (spec.x_independent) {
    FrozenKernelSpec f = spec.freeze(x0);
    FrozenDriver drv(f, t, t + horizon, cfg);
    for (long i = 0; i < cfg.paths; ++i) {
      auto g = path_rng(cfg.seed, i);
      double x[2] = {x0, 0.0};
      auto obs = watch(i);
      drv.run(g, x, &obs);
    }
  } else {
    EulerDriver drv(spec, t, t + horizon, cfg);
    for (long i = 0; i < cfg.paths; ++i) {
      auto g = path_rng(cfg.seed, i);
      auto obs = watch(i);
      drv.run(g, x0, &obs);
    }
  }
  ExitReport rep;
  rep.eps = eps;
  const double n = static_cast<double>(cfg.paths);
  const double pe = spec.profile.phi(eps);
  for (double r : rs) {
    long c = std::count_if(first.begin(), first.end(), [&](double u) { return u <= t + r; });
    ProbabilityEstimate e;
    e.r = r;
    e.p = c / n;
    e.stderr_ = std::sqrt(e.p * (1 - e.p) / n);
    rep.curve.push_back(e);
    rep.C0 = std::max(rep.C0, e.p / (r / pe));
  }
  return rep;
}

HittingReport hitting_prob_stats(const VariableKernelSpec& spec, double t, double x0, double y0, double eps,
                                 double horizon, const SimConfig& cfg) {
  validate_sim(cfg);
  require_paths(cfg.paths, 10000, "hitting_prob_stats");
  const double dist = std::fabs(x0 - y0);
  if (!(dist >= 2.0 * eps)) fail(ErrorKind::Domain, "hitting_prob_stats: need |x0 - y0| >= 2 eps");
  long hits = 0;
  bool hit = false;
  auto obs = [&](double, const double* pos) {
    if (std::fabs(pos[0] - y0) < eps) {
      hit = true;
      return true;
    }
    return false;
  };
  if (spec.x_independent) {
    FrozenKernelSpec f = spec.freeze(x0);
    FrozenDriver drv(f, t, t + horizon, cfg);
    for (long i = 0; i < cfg.paths; ++i) {
      auto g = path_rng(cfg.seed, i);
      double x[2] = {x0, 0.0};
      hit = false;
      drv.run(g, x, &obs);
      hits += hit;
    }
  } else {
    EulerDriver drv(spec, t, t + horizon, cfg);
    for (long i = 0; i < cfg.paths; ++i) {
      auto g = path_rng(cfg.seed, i);
      hit = false;
      drv.run(g, x0, &obs);
      hits += hit;
    }
  }
  HittingReport rep;
  const double n = static_cast<double>(cfg.paths);
  rep.p = hits / n;
  rep.stderr_ = std::sqrt(rep.p * (1 - rep.p) / n);
  const auto& p = spec.profile;
  rep.envelope = eps * p.phi(eps) / (dist * p.phi(dist));
  rep.ratio = rep.p / rep.envelope;
  return rep;
}

}  // namespace hk
