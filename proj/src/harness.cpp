#include "hk/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "hk/error.hpp"

namespace hk {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config:
    case ErrorKind::Domain:
    case ErrorKind::Range:
    case ErrorKind::Model: return kExitConfig;
    case ErrorKind::Gate: return kExitGate;
    case ErrorKind::Statistics: return kExitStatistics;
    case ErrorKind::Resolution:
    case ErrorKind::Convergence:
    case ErrorKind::Numeric:
    case ErrorKind::Accuracy:
    case ErrorKind::Divergence:
    case ErrorKind::Indeterminate: return kExitNonConvergence;
  }
  return kExitCheckFailed;
}

// ---------------------------------------------------------------- config

namespace {

template <class T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

void require_positive(double v, const std::string& name) {
  if (!(v > 0.0)) fail(ErrorKind::Config, name + " must be positive");
}

const std::set<std::string> kTopKeys = {"command", "fixture", "profile", "modulus", "kernel", "time",
                                        "grid", "parametrix", "simulation", "xs", "checks", "tolerances",
                                        "out", "ledger", "certify"};

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object() || j.empty()) fail(ErrorKind::Config, "empty config");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!kTopKeys.count(it.key())) fail(ErrorKind::Config, "unknown key '" + it.key() + "'");
  if (!j.contains("profile")) fail(ErrorKind::Config, "missing 'profile'");
  ExperimentConfig c;
  try {
    take(j, "command", c.command);
    take(j, "fixture", c.fixture);
    c.profile = j.at("profile");
    if (j.contains("modulus")) c.modulus = j.at("modulus");
    c.kernel = j.value("kernel", json{{"kappa", "constant"}});
    c.variable = c.kernel.contains("kind");
    if (j.contains("time")) {
      take(j["time"], "t", c.t);
      take(j["time"], "s", c.s);
    }
    if (j.contains("grid")) {
      const json& g = j["grid"];
      take(g, "n", c.grid.n);
      take(g, "dx", c.grid.dx);
      take(g, "decay", c.grid.decay);
      take(g, "M", c.parametrix.M);
      take(g, "K", c.parametrix.K);
      take(g, "periods", c.parametrix.periods);
    }
    if (j.contains("parametrix")) {
      const json& g = j["parametrix"];
      take(g, "tol", c.parametrix.tol);
      take(g, "max_iter", c.parametrix.max_iter);
      take(g, "grading", c.parametrix.grading);
      take(g, "min_decay", c.parametrix.min_decay);
      take(g, "mass_budget", c.parametrix.mass_budget);
      take(g, "eps0", c.eps0);
    }
    if (j.contains("simulation")) {
      const json& g = j["simulation"];
      take(g, "paths", c.sim.paths);
      take(g, "seed", c.sim.seed);
      take(g, "steps", c.sim.steps);
      take(g, "eps_j", c.sim.eps_j);
      take(g, "gaussian_correction", c.sim.gaussian_correction);
      take(g, "exit_eps", c.exit_eps);
      take(g, "hit_distance", c.hit_distance);
      take(g, "hit_eps", c.hit_eps);
      take(g, "horizon", c.horizon);
    }
    take(j, "xs", c.xs);
    if (j.contains("checks"))
      for (auto it = j["checks"].begin(); it != j["checks"].end(); ++it) c.checks[it.key()] = it.value().get<bool>();
    if (j.contains("tolerances")) {
      const json& g = j["tolerances"];
      take(g, "mass", c.tol.mass);
      take(g, "ck", c.tol.ck);
      take(g, "scaling_power", c.tol.scaling_power);
      take(g, "scaling_piecewise", c.tol.scaling_piecewise);
      take(g, "drift", c.tol.drift);
      take(g, "grid_stability", c.tol.grid_stability);
      take(g, "fd_order", c.tol.fd_order);
      take(g, "picard_residual", c.tol.picard_residual);
      take(g, "linearity_lo", c.tol.linearity_lo);
      take(g, "linearity_hi", c.tol.linearity_hi);
    }
    take(j, "out", c.out);
    take(j, "ledger", c.ledger);
    take(j, "certify", c.certify);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string() + e.what());
  }
  if (!(c.s > c.t) || c.t < 0.0) fail(ErrorKind::Config, "need 0 <= t < s");
  for (double v : {c.tol.mass, c.tol.ck, c.tol.scaling_power, c.tol.scaling_piecewise, c.tol.drift,
                   c.tol.grid_stability, c.tol.fd_order, c.tol.picard_residual, c.parametrix.tol})
    require_positive(v, "tolerance");
  if (c.sim.paths < 1) fail(ErrorKind::Config, "simulation.paths must be >= 1");
  if (c.parametrix.M < 16 || (c.parametrix.M & (c.parametrix.M - 1)))
    fail(ErrorKind::Config, "grid.M must be a power of two >= 16");
  if (c.grid.n != 0 && (c.grid.n < 64 || (c.grid.n & (c.grid.n - 1))))
    fail(ErrorKind::Config, "grid.n must be a power of two >= 64");
  // parse the referenced fixtures now so that errors surface as config errors
  try {
    ScalingProfile p = c.make_profile();
    if (c.variable)
      c.make_variable();
    else
      c.make_frozen();
    if (!c.modulus.is_null()) Modulus::from_json(c.modulus);
    (void)p;
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string() + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string() + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  json j;
  j["command"] = command;
  j["fixture"] = fixture;
  j["profile"] = profile;
  if (!modulus.is_null()) j["modulus"] = modulus;
  j["kernel"] = kernel;
  j["time"] = {{"t", t}, {"s", s}};
  j["grid"] = {{"n", grid.n}, {"dx", grid.dx}, {"decay", grid.decay}, {"M", parametrix.M},
               {"K", parametrix.K}, {"periods", parametrix.periods}};
  j["parametrix"] = {{"tol", parametrix.tol}, {"max_iter", parametrix.max_iter}, {"grading", parametrix.grading},
                     {"min_decay", parametrix.min_decay}, {"mass_budget", parametrix.mass_budget}, {"eps0", eps0}};
  j["simulation"] = {{"paths", sim.paths},         {"seed", sim.seed},
                     {"steps", sim.steps},         {"eps_j", sim.eps_j},
                     {"gaussian_correction", sim.gaussian_correction},
                     {"exit_eps", exit_eps},       {"hit_distance", hit_distance},
                     {"hit_eps", hit_eps},         {"horizon", horizon}};
  j["xs"] = xs;
  j["checks"] = checks;
  j["tolerances"] = {{"mass", tol.mass},
                     {"ck", tol.ck},
                     {"scaling_power", tol.scaling_power},
                     {"scaling_piecewise", tol.scaling_piecewise},
                     {"drift", tol.drift},
                     {"grid_stability", tol.grid_stability},
                     {"fd_order", tol.fd_order},
                     {"picard_residual", tol.picard_residual},
                     {"linearity_lo", tol.linearity_lo},
                     {"linearity_hi", tol.linearity_hi}};
  j["out"] = out;
  j["ledger"] = ledger;
  j["certify"] = certify;
  return j;
}

ScalingProfile ExperimentConfig::make_profile() const { return ScalingProfile::from_json(profile); }

FrozenKernelSpec ExperimentConfig::make_frozen() const {
  if (variable) fail(ErrorKind::Config, "kernel is variable");
  return FrozenKernelSpec::from_json(kernel, make_profile());
}

VariableKernelSpec ExperimentConfig::make_variable() const {
  if (!variable) fail(ErrorKind::Config, "kernel is not variable");
  VariableKernelSpec v = VariableKernelSpec::from_json(kernel, make_profile());
  if (!modulus.is_null()) v.modulus = Modulus::from_json(modulus);
  return v;
}

bool ExperimentConfig::enabled(const std::string& check) const {
  auto it = checks.find(check);
  return it == checks.end() || it->second;
}

std::string ExperimentConfig::fixture_key() const {
  if (!fixture.empty()) return fixture;
  return json{{"profile", profile}, {"kernel", kernel}}.dump();
}

// ---------------------------------------------------------------- report

bool ValidationReport::pass() const {
  if (exit_code != kExitPass) return false;
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

void ValidationReport::add(CheckResult c) {
  for (auto& x : checks)
    if (x.name == c.name) {
      x = std::move(c);
      return;
    }
  checks.push_back(std::move(c));
}

namespace {

json number(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

}  // namespace

json ValidationReport::to_json() const {
  json j;
  j["command"] = command;
  j["pass"] = pass();
  j["exit_code"] = exit_code;
  if (!error.empty()) j["error"] = error;
  json cs = json::array();
  for (const auto& c : checks)
    cs.push_back({{"name", c.name},
                  {"value", number(c.value)},
                  {"bound", number(c.bound)},
                  {"relation", c.relation},
                  {"pass", c.pass},
                  {"detail", c.detail}});
  j["checks"] = cs;
  j["data"] = data;
  return j;
}

json ValidationReport::timing_json() const {
  json j = json::object();
  for (const auto& c : checks) j[c.name] = c.runtime;
  return j;
}

void ValidationReport::write(const std::string& dir) const {
  fs::create_directories(dir);
  std::ofstream(fs::path(dir) / "report.json") << to_json().dump(2) << "\n";
  std::ofstream(fs::path(dir) / "timing.json") << timing_json().dump(2) << "\n";
  json m;
  m["report.json"] = {{"description", "checks: name, value, bound, relation, pass, detail"}};
  m["timing.json"] = {{"description", "seconds per check"}};
  for (const auto& o : outputs) m[o.file] = {{"columns", o.columns}, {"description", o.description}};
  std::ofstream(fs::path(dir) / "manifest.json") << m.dump(2) << "\n";
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  os.precision(6);
  for (const auto& c : checks) {
    os << (c.pass ? "PASS " : "FAIL ") << c.name << "  value=" << c.value;
    if (c.relation != "info") os << " " << c.relation << " " << c.bound;
    if (!c.detail.empty()) os << "  (" << c.detail << ")";
    os << "  [" << c.runtime << " s]\n";
  }
  if (!error.empty()) os << "ERROR " << error << "\n";
  os << "exit " << exit_code << "\n";
  return os.str();
}

// ---------------------------------------------------------------- ledger

std::string default_ledger_path() { return std::string(HK_SOURCE_DIR) + "/data/ledger.json"; }

Ledger Ledger::load(const std::string& path) {
  Ledger l;
  l.path_ = path;
  std::ifstream in(path);
  if (in) {
    try {
      in >> l.j_;
    } catch (const json::exception& e) {
      fail(ErrorKind::Config, "ledger: " + std::string(e.what()));
    }
  } else {
    l.j_ = {{"version", 1}};
  }
  return l;
}

bool Ledger::has(const std::string& section, const std::string& key) const {
  return j_.contains(section) && j_[section].contains(key);
}

json Ledger::get(const std::string& section, const std::string& key) const {
  if (!has(section, key)) fail(ErrorKind::Config, "ledger: no entry " + section + "/" + key);
  return j_[section][key];
}

void Ledger::certify(const std::string& section, const std::string& key, const json& value) {
  if (has(section, key)) fail(ErrorKind::Config, "ledger: entry " + section + "/" + key + " already certified");
  j_[section][key] = value;
}

void Ledger::save() const {
  fs::path p(path_);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream(p) << j_.dump(2) << "\n";
}

// ---------------------------------------------------------------- measurements

Bracket frozen_ratio_bracket(const FrozenKernelSpec& spec, double t, double s, const GridConfig& g) {
  GridDensity d = density_fft(spec, t, s, g);
  auto r = two_sided_ratio(d, spec.profile, 20.0);
  return {r.first, r.second};
}

namespace {

double torus_distance(double a, double L) {
  double d = std::fmod(std::fabs(a), L);
  return std::min(d, L - d);
}

// periodized rho at the distances k h, k = 0..M/2
std::vector<double> rho_table(const ScalingProfile& p, double tau, int M, double L) {
  std::vector<double> r(M / 2 + 1);
  for (int k = 0; k <= M / 2; ++k) r[k] = periodized_rho(p, tau, k * L / M, L);
  return r;
}

int wrap_index(int k, int M) { return ((k % M) + M) % M; }

}  // namespace

Bracket field_ratio_bracket(const HeatKernelField& f, const ScalingProfile& p, double reach) {
  const double tau = f.s - f.t, sigma = p.phi_inverse(tau);
  const auto rt = rho_table(p, tau, f.M, f.L);
  Bracket b{HUGE_VAL, 0.0};
  for (int i = 0; i < f.M; ++i)
    for (int j = 0; j < f.M; ++j) {
      int k = std::abs(i - j);
      k = std::min(k, f.M - k);
      if (k * f.h() > reach * sigma) continue;
      double q = f.P(i, j) / (tau * rt[k]);
      b.lo = std::min(b.lo, q);
      b.hi = std::max(b.hi, q);
    }
  return b;
}

double bracket_change(const Bracket& a, const Bracket& b) {
  return std::max(std::fabs(b.lo / a.lo - 1.0), std::fabs(b.hi / a.hi - 1.0));
}

bool bracket_inside(const Bracket& inner, const Bracket& outer) {
  return inner.lo >= outer.lo && inner.hi <= outer.hi;
}

Bracket widen(const Bracket& b, double margin) { return {b.lo / (1.0 + margin), b.hi * (1.0 + margin)}; }

FDOrder gradient_fd_order(const FrozenKernelSpec& spec, double t, double s, const GridConfig& g) {
  if (spec.d() != 1) fail(ErrorKind::Domain, "gradient_fd_order: d = 1 only");
  const double sigma = spec.profile.phi_inverse(s - t);
  // fine enough that the steps sit in the asymptotic regime
  GridConfig fine = g;
  if (fine.dx == 0.0 || fine.dx > sigma / 32.0) fine.dx = sigma / 32.0;
  if (fine.n == 0) fine.n = 4096;
  GridDensity d = density_fft(spec, t, s, fine);
  GridDensity gr = gradient(spec, t, s, fine)[0];
  FDOrder out;
  for (int k : {4, 2, 1}) {
    double e = 0.0;
    for (int i = k; i + k < d.n; ++i) {
      if (std::fabs(d.x(i)) > 10.0 * sigma) continue;
      double fd = (d.values[i + k] - d.values[i - k]) / (2.0 * k * d.dx);
      e = std::max(e, std::fabs(fd - gr.values[i]));
    }
    out.steps.push_back(k * d.dx);
    out.errors.push_back(e);
  }
  out.order = HUGE_VAL;
  for (std::size_t i = 1; i < out.errors.size(); ++i)
    out.order = std::min(out.order, std::log2(out.errors[i - 1] / out.errors[i]));
  return out;
}

ShapeLadder shape_ladder(const Parametrix& P, double t, double eps0, int levels, std::vector<HeatKernelField>* fields) {
  const VariableKernelSpec& spec = P.spec();
  const ScalingProfile& p = spec.profile;
  if (p.d() != 1) fail(ErrorKind::Domain, "shape_ladder: d = 1 only");
  ShapeLadder out;
  for (int k = 0; k < levels; ++k) {
    const double tau = std::ldexp(eps0, -k), sigma = p.phi_inverse(tau);
    auto sys = P.system(t, t + tau, true);
    QSolution q = P.solve_q_direct(*sys);
    HeatKernelField F = P.assemble_p(*sys, q);
    Eigen::MatrixXd G = P.assemble_gradient(*sys, q);
    const auto rt = rho_table(p, tau, F.M, F.L);

    MResult m = M_phi_ell(spec.modulus, p, sigma);
    if (m.divergent) fail(ErrorKind::Divergence, "shape_ladder: M^phi_ell diverges, gradient shape undefined");
    const double pref = tau / sigma + m.value;
    double cg = 0.0;
    const int stride = std::max(1, F.M / 32);
    for (int j = 0; j < F.M; j += stride)
      for (int i = 0; i < F.M; ++i) {
        int d = std::abs(i - j);
        d = std::min(d, F.M - d);
        if (d * F.h() > 20.0 * sigma) continue;
        cg = std::max(cg, std::fabs(G(i, j)) / (pref * rt[d]));
      }

    // x -> p(x; y_0) refined so that the grid step is below sigma / 16
    int factor = 1;
    while (F.h() / factor > sigma / 16.0) factor *= 2;
    GridDensity col = upsample(F.column(0), factor);
    col.scale = sigma;
    const double gam = gamma_ell_phi(spec.modulus, p, tau) / ell_phi(spec.modulus, p, tau);
    std::vector<int> idx;
    std::vector<double> dist;
    for (int a = -40; a <= 40; a += 4) {
      int i = static_cast<int>(std::lround(a * 0.5 * sigma / col.dx));
      idx.push_back(wrap_index(i, col.n));
      dist.push_back(torus_distance(i * col.dx, F.L));
    }
    const Branch br = spec.symmetric ? Branch::SecondDifference : Branch::FirstOrder;
    auto D = delta_apply_many(col, p, [](double) { return 1.0; }, idx, br);
    double cf = 0.0;
    for (std::size_t a = 0; a < idx.size(); ++a)
      cf = std::max(cf, D[a].abs_integral / (gam * periodized_rho(p, tau, dist[a], F.L)));

    out.taus.push_back(tau);
    out.grad_C.push_back(cg);
    out.frac_C.push_back(cf);
    if (fields) fields->push_back(std::move(F));
  }
  auto drift = [](const std::vector<double>& v) {
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return (*hi - *lo) / *lo;
  };
  out.grad_drift = drift(out.grad_C);
  out.frac_drift = drift(out.frac_C);
  return out;
}

namespace {

FrozenKernelSpec shifted(const FrozenKernelSpec& spec, double e) {
  FrozenKernelSpec o = spec;
  auto k = spec.kappa;
  o.kappa = [k, e](double t, double z) { return k(t, z) + e; };
  o.kappa0 = spec.kappa0 + e;
  o.id = spec.id + "+" + std::to_string(e);
  return o;
}

double sup_rel_diff(const GridDensity& a, const GridDensity& b, const ScalingProfile& p) {
  const double tau = a.s - a.t, sigma = p.phi_inverse(tau);
  double m = 0.0;
  for (int i = 0; i < a.n; ++i) {
    double x = a.x(i);
    if (std::fabs(x) > 20.0 * sigma) continue;
    m = std::max(m, std::fabs(a.values[i] - b.at(x)) / rho(p, tau, std::fabs(x)));
  }
  return m;
}

}  // namespace

Linearity continuous_dependence(const FrozenKernelSpec& spec, double t, double s, double eps, const GridConfig& g) {
  if (spec.d() != 1) fail(ErrorKind::Domain, "continuous_dependence: d = 1 only");
  GridDensity base = density_fft(spec, t, s, g);
  GridConfig same = g;
  same.n = base.n;
  same.dx = base.dx;
  Linearity out;
  out.eps = eps;
  out.sup_eps = sup_rel_diff(base, density_fft(shifted(spec, eps), t, s, same), spec.profile);
  out.sup_half = sup_rel_diff(base, density_fft(shifted(spec, eps / 2), t, s, same), spec.profile);
  out.ratio = out.sup_half / out.sup_eps;
  return out;
}

double ck_residual(const Parametrix& P, const HeatKernelField& full, double r, double eps0) {
  if (!(r > full.t && r < full.s)) fail(ErrorKind::Domain, "ck_residual: need t < r < s");
  HeatKernelField a = P.field(full.t, r, eps0), b = P.field(r, full.s, eps0);
  HeatKernelField c = compose(a, b);
  return (c.P - full.P).cwiseAbs().maxCoeff() / full.max_value();
}

ScalingAgreement scaling_agreement(const FrozenKernelSpec& spec, double t, double s, const GridConfig& g) {
  GridDensity a = density_fft(spec, t, s, g);
  GridConfig same = g;
  same.n = a.n;
  same.dx = a.dx;
  GridDensity b = density_scaled_grid(spec, t, s, same);
  const double cut = 1e-6 * a.max_value();
  ScalingAgreement out;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    if (a.values[i] >= cut) out.max_rel = std::max(out.max_rel, std::fabs(b.values[i] / a.values[i] - 1.0));
  return out;
}

// ---------------------------------------------------------------- commands

namespace {

using Clock = std::chrono::steady_clock;

template <class F>
CheckResult timed(const std::string& name, F&& body) {
  auto t0 = Clock::now();
  CheckResult c = body();
  c.name = name;
  c.runtime = std::chrono::duration<double>(Clock::now() - t0).count();
  return c;
}

CheckResult upper(double value, double bound, std::string detail = {}) {
  return {"", value, bound, "<=", value <= bound, 0.0, std::move(detail)};
}

CheckResult lower(double value, double bound, std::string detail = {}) {
  return {"", value, bound, ">=", value >= bound, 0.0, std::move(detail)};
}

CheckResult info(double value, std::string detail = {}) {
  return {"", value, 0.0, "info", true, 0.0, std::move(detail)};
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

std::string bracket_str(const Bracket& b) { return "[" + fmt(b.lo) + ", " + fmt(b.hi) + "]"; }

std::string path_in(const ExperimentConfig& cfg, const std::string& file) {
  fs::create_directories(cfg.out);
  return (fs::path(cfg.out) / file).string();
}

bool is_power_law(const ExperimentConfig& cfg) { return cfg.profile.value("family", "") == "power"; }

// two-sided bracket against the ledger; certification only when requested
CheckResult ledger_bracket(const ExperimentConfig& cfg, const std::string& section, const Bracket& measured,
                           ValidationReport& rep) {
  Ledger L = Ledger::load(cfg.ledger.empty() ? default_ledger_path() : cfg.ledger);
  const std::string key = cfg.fixture_key();
  rep.data[section] = {{"measured", {measured.lo, measured.hi}}, {"ledger", L.path()}, {"key", key}};
  if (!L.has(section, key)) {
    if (!cfg.certify) {
      CheckResult c{"", measured.hi, 0.0, "in", false, 0.0, "no ledger entry; rerun with --certify"};
      return c;
    }
    Bracket w = widen(measured, cfg.tol.grid_stability);
    L.certify(section, key, {{"lo", w.lo}, {"hi", w.hi}, {"measured", {measured.lo, measured.hi}}});
    L.save();
    return {"", measured.hi, w.hi, "in", true, 0.0, "certified " + bracket_str(w)};
  }
  json e = L.get(section, key);
  Bracket w{e.at("lo").get<double>(), e.at("hi").get<double>()};
  bool ok = bracket_inside(measured, w);
  return {"", measured.hi, w.hi, "in", ok, 0.0, bracket_str(measured) + " in " + bracket_str(w)};
}

void profile_csv(const ExperimentConfig& cfg, const ScalingProfile& p, ValidationReport& rep) {
  std::ofstream f(path_in(cfg, "profile.csv"));
  f.precision(17);
  f << "r,phi,elasticity,rho_t1\n";
  for (double r : log_lattice(1e-4, 1e4, 8)) f << r << "," << p.phi(r) << "," << p.elasticity(r) << "," << rho(p, 1.0, r) << "\n";
  rep.outputs.push_back({"profile.csv", {"r", "phi", "elasticity", "rho_t1"}, "scaling profile on a log lattice"});
}

}  // namespace

void run_profile(const ExperimentConfig& cfg, ValidationReport& rep) {
  rep.command = "profile";
  const ScalingProfile p = cfg.make_profile();
  rep.add(timed("case", [&] {
    CaseTag c = classify_case(p);
    return info(static_cast<double>(c) + 1, case_name(c));
  }));
  rep.add(timed("scaling_bounds", [&] {
    BoundReport b = verify_scaling_bounds(p, log_lattice(1e-6, 1e6, 8), 1e-9);
    CheckResult c = upper(std::max(b.worst_lower, b.worst_upper), 1e-9, b.summary());
    c.pass = b.pass;
    return c;
  }));
  APhi a[2];
  for (int i = 0; i < 2; ++i) {
    rep.add(timed("A" + std::to_string(i), [&] {
      a[i] = compute_A_phi(p, i);
      return a[i].divergent ? info(HUGE_VAL, "divergent") : info(a[i].value, "finite");
    }));
  }
  rep.add(timed("gate_H1", [&] { return info(a[0].divergent ? 0 : 1, a[0].divergent ? "closed" : "open"); }));
  rep.add(timed("gate_H2", [&] { return info(a[1].divergent ? 0 : 1, a[1].divergent ? "closed" : "open"); }));
  {
    std::ofstream f(path_in(cfg, "a_phi.csv"));
    f.precision(17);
    f << "i,lambda,value\n";
    for (int i = 0; i < 2; ++i)
      for (std::size_t k = 0; k < a[i].lambdas.size() && k < a[i].values.size(); ++k)
        f << i << "," << a[i].lambdas[k] << "," << a[i].values[k] << "\n";
    rep.outputs.push_back({"a_phi.csv", {"i", "lambda", "value"}, "integrand sup of A^(i) per lambda"});
  }
  if (!cfg.modulus.is_null()) {
    const Modulus m = Modulus::from_json(cfg.modulus);
    rep.add(timed("dini", [&] {
      bool ok = check_dini(m);
      CheckResult c = info(ok ? 1 : 0, ok ? "Dini" : "not Dini");
      c.pass = ok;
      return c;
    }));
    std::vector<std::pair<double, MResult>> sweep;
    rep.add(timed("M_phi_ell", [&] {
      double worst = 0.0;
      bool div = false;
      for (int k = 0; k <= 10; ++k) {
        double t = std::ldexp(1.0, -k);
        MResult r = M_phi_ell(m, p, t);
        sweep.push_back({t, r});
        div = div || r.divergent;
        if (!r.divergent) worst = std::max(worst, r.value);
      }
      return div ? info(HUGE_VAL, "divergent") : info(worst, "max over t = 2^-k, k = 0..10");
    }));
    {
      std::ofstream f(path_in(cfg, "m_phi_ell.csv"));
      f.precision(17);
      f << "t,M,divergent\n";
      for (auto& [t, r] : sweep) f << t << "," << (r.divergent ? 0.0 : r.value) << "," << r.divergent << "\n";
      rep.outputs.push_back({"m_phi_ell.csv", {"t", "M", "divergent"}, "M^phi_ell on a dyadic sweep"});
    }
    if (m.tags().R && m.tags().alpha < 1.0 && p.d() == 1) {
      rep.add(timed("convolution", [&] {
        std::vector<double> xs;
        for (int k = -8; k <= 8; ++k) xs.push_back(std::ldexp(k >= 0 ? 1.0 : -1.0, std::abs(k) - 4));
        ConvolutionReport r = verify_convolution(m, m, p, 0.5, 0.25, xs);
        CheckResult c = info(r.dk1_ratio, "max lhs/rhs of the space-time convolution bound");
        c.pass = std::isfinite(r.dk1_ratio);
        return c;
      }));
    }
  }
  profile_csv(cfg, p, rep);
  return;
}

namespace {

double resolved_eps0(const ExperimentConfig& cfg, const VariableKernelSpec& v, ValidationReport& rep,
                     Epsilon0Report* full = nullptr) {
  Epsilon0Report r;
  if (cfg.eps0 > 0.0) {
    r.eps0 = cfg.eps0;
  } else {
    r = epsilon0(v);
    rep.data["eps0"] = {{"C0", r.C0}, {"C1", r.C1}, {"C2", r.C2}, {"eps0", r.eps0},
                        {"gamma", r.gamma_at_eps0}, {"contraction", r.contraction}};
  }
  if (full) *full = r;
  return r.eps0;
}

void require_gate(const VariableKernelSpec& v, ValidationReport& rep) {
  GateReport g = assumption_gate(v);
  rep.data["gate"] = {{"open", g.open}, {"hypothesis", g.hypothesis}, {"A", g.A}, {"failure", g.failure}};
  if (!g.open) fail(ErrorKind::Gate, "assumption gate closed: " + g.hypothesis + ": " + g.failure);
}

int nearest_index(double x, double h, int M) { return wrap_index(static_cast<int>(std::lround(x / h)), M); }

void write_field(const ExperimentConfig& cfg, const HeatKernelField& F, int i0, ValidationReport& rep) {
  F.write_slices(path_in(cfg, "field"), i0, i0);
  rep.outputs.push_back({"field_x.csv", {"x", "p"}, "x -> p(x; y_j0)"});
  rep.outputs.push_back({"field_y.csv", {"y", "p"}, "y -> p(x_i0; y)"});
  std::ofstream f(path_in(cfg, "field_matrix.csv"));
  f.precision(12);
  for (int i = 0; i < F.M; ++i) {
    for (int j = 0; j < F.M; ++j) f << (j ? "," : "") << F.P(i, j);
    f << "\n";
  }
  rep.outputs.push_back({"field_matrix.csv", {"p(x_i, y_0)", "...", "p(x_i, y_{M-1})"},
                         "row i holds y -> p(x_i; y); x_i = i L / M; gnuplot 'matrix' layout"});
}

double max_mass_error(const std::vector<double>& m) {
  double e = 0.0;
  for (double v : m) e = std::max(e, std::fabs(v - 1.0));
  return e;
}

}  // namespace

void run_density(const ExperimentConfig& cfg, ValidationReport& rep) {
  rep.command = "density";
  if (!cfg.variable) {
    FrozenKernelSpec spec = cfg.make_frozen();
    validate_frozen(spec, cfg.t, cfg.s);
    GridDensity g;
    rep.add(timed("mass", [&] {
      g = density_fft(spec, cfg.t, cfg.s, cfg.grid);
      return upper(std::fabs(g.mass() + g.outside_mass - 1.0), cfg.tol.mass, "grid mass plus tail estimate beyond the window");
    }));
    rep.add(timed("nonnegative", [&] { return lower(g.min_value() / g.max_value(), -1e-6); }));
    if (spec.d() == 1) {
      g.write_csv(path_in(cfg, "density.csv"));
      rep.outputs.push_back({"density.csv", {"x", "p"}, "frozen density on the FFT grid"});
      json pts = json::array();
      for (double x : cfg.xs) pts.push_back({{"x", x}, {"p", g.at(x)}});
      rep.data["points"] = pts;
    } else {
      g.write_csv(path_in(cfg, "density2d.csv"));
      rep.outputs.push_back({"density2d.csv", {"x1", "x2", "p"}, "frozen density on the FFT grid"});
    }
    rep.data["grid"] = {{"n", g.n}, {"dx", g.dx}, {"x0", g.x0}, {"outside_mass", g.outside_mass}};
    return;
  }
  VariableKernelSpec v = cfg.make_variable();
  validate_variable(v);
  require_gate(v, rep);
  const double eps0 = resolved_eps0(cfg, v, rep);
  Parametrix P(v, cfg.parametrix);
  HeatKernelField F;
  rep.add(timed("mass", [&] {
    F = P.field(cfg.t, cfg.s, eps0);
    return upper(max_mass_error(F.row_masses()), cfg.tol.mass);
  }));
  rep.add(timed("nonnegative", [&] { return lower(F.min_value() / F.max_value(), -1e-6); }));
  int i0 = nearest_index(cfg.xs.empty() ? 0.0 : cfg.xs[0], F.h(), F.M);
  write_field(cfg, F, i0, rep);
  rep.data["intervals"] = F.ledger_json();
  json pts = json::array();
  for (double x : cfg.xs) {
    int i = nearest_index(x, F.h(), F.M);
    pts.push_back({{"x", F.x(i)}, {"p", F.P(i, i0)}});
  }
  rep.data["points"] = pts;
  return;
}

namespace {

void validate_frozen_cmd(const ExperimentConfig& cfg, ValidationReport& rep) {
  FrozenKernelSpec spec = cfg.make_frozen();
  validate_frozen(spec, cfg.t, cfg.s);
  const ScalingProfile& p = spec.profile;
  GridDensity g;
  rep.add(timed("mass", [&] {
    g = density_fft(spec, cfg.t, cfg.s, cfg.grid);
    return upper(std::fabs(g.mass() + g.outside_mass - 1.0), cfg.tol.mass, "grid mass plus tail estimate beyond the window");
  }));
  if (cfg.enabled("two_sided")) {
    Bracket b, b2;
    rep.add(timed("two_sided_grid_doubling", [&] {
      b = frozen_ratio_bracket(spec, cfg.t, cfg.s, cfg.grid);
      GridConfig fine = cfg.grid;
      fine.n = 2 * g.n;
      fine.dx = g.dx / 2;
      b2 = frozen_ratio_bracket(spec, cfg.t, cfg.s, fine);
      return upper(bracket_change(b, b2), cfg.tol.grid_stability, bracket_str(b) + " -> " + bracket_str(b2));
    }));
    rep.add(timed("two_sided_ledger", [&] { return ledger_bracket(cfg, "two_sided", b, rep); }));
  }
  if (cfg.enabled("scaling") && p.d() == 1) {
    rep.add(timed("scaling", [&] {
      // a duration away from 1 so that the reduction is not the identity
      const double s2 = cfg.t + 0.3 * (cfg.s - cfg.t);
      double bound = is_power_law(cfg) ? cfg.tol.scaling_power : cfg.tol.scaling_piecewise;
      return upper(scaling_agreement(spec, cfg.t, s2, cfg.grid).max_rel, bound, "on [t, t + 0.3 (s - t)]");
    }));
  }
  if (cfg.enabled("gradient_fd") && p.d() == 1) {
    rep.add(timed("gradient_fd", [&] {
      FDOrder o = gradient_fd_order(spec, cfg.t, cfg.s, cfg.grid);
      return lower(o.order, cfg.tol.fd_order, "errors " + fmt(o.errors[0]) + ", " + fmt(o.errors[1]) + ", " +
                                                  fmt(o.errors[2]));
    }));
  }
  if (cfg.enabled("continuous_dependence") && p.d() == 1) {
    rep.add(timed("continuous_dependence", [&] {
      Linearity l = continuous_dependence(spec, cfg.t, cfg.s, 0.1, cfg.grid);
      CheckResult c{"", l.ratio, cfg.tol.linearity_hi, "in", l.ratio >= cfg.tol.linearity_lo && l.ratio <= cfg.tol.linearity_hi,
                    0.0, "sup ratio for eps 0.1 -> 0.05, target [" + fmt(cfg.tol.linearity_lo) + ", " +
                             fmt(cfg.tol.linearity_hi) + "]"};
      return c;
    }));
  }
}

void validate_variable_cmd(const ExperimentConfig& cfg, ValidationReport& rep) {
  VariableKernelSpec v = cfg.make_variable();
  validate_variable(v);
  require_gate(v, rep);
  Epsilon0Report er;
  const double eps0 = resolved_eps0(cfg, v, rep, &er);
  double contraction = er.contraction;
  if (cfg.eps0 > 0.0) contraction = 0.0;  // constants not estimated
  Parametrix P(v, cfg.parametrix);
  const double t = cfg.t;

  if (cfg.enabled("picard")) {
    QSolution q;
    rep.add(timed("picard_contraction", [&] {
      q = P.solve_q(t, t + eps0);
      double worst = 0.0;
      for (double r : q.ratios) worst = std::max(worst, r);
      if (contraction > 0.0) return upper(worst, contraction, std::to_string(q.iterations) + " iterations");
      return upper(worst, 1.0, "constants not estimated; bound 1");
    }));
    rep.add(timed("picard_residual", [&] { return upper(q.residual, cfg.tol.picard_residual); }));
  }
  HeatKernelField F1, F2;
  rep.add(timed("mass", [&] {
    F1 = P.field(t, t + eps0, eps0);
    F2 = P.field(t, t + 2 * eps0, eps0);
    return upper(std::max(max_mass_error(F1.row_masses()), max_mass_error(F2.row_masses())), cfg.tol.mass,
                 "fields at s - t = eps0 and 2 eps0");
  }));
  rep.add(timed("nonnegative", [&] { return lower(F2.min_value() / F2.max_value(), -1e-6); }));
  rep.data["intervals"] = F2.ledger_json();
  if (cfg.enabled("ck")) {
    rep.add(timed("ck", [&] {
      const double r = t + 2.0 * eps0 / 3.0;
      return upper(ck_residual(P, F2, r, eps0), cfg.tol.ck, "interior time t + 2 eps0 / 3");
    }));
  }
  std::vector<HeatKernelField> rungs;
  ShapeLadder lad;
  const bool shapes = cfg.enabled("gradient_shape") || cfg.enabled("fractional_shape");
  if (shapes || cfg.enabled("two_sided")) {
    ParametrixConfig fine = cfg.parametrix;
    fine.M *= 2;
    Parametrix P2(v, fine);
    auto t0 = Clock::now();
    lad = shape_ladder(P2, t, eps0, shapes ? 3 : 1, &rungs);
    double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    rep.data["ladder"] = {{"taus", lad.taus}, {"grad_C", lad.grad_C}, {"frac_C", lad.frac_C}};
    if (shapes) {
      CheckResult g = upper(lad.grad_drift, cfg.tol.drift, "relative spread of the gradient shape constant");
      g.name = "gradient_shape";
      g.runtime = dt / 2;
      CheckResult f = upper(lad.frac_drift, cfg.tol.drift, "relative spread of the fractional shape constant");
      f.name = "fractional_shape";
      f.runtime = dt / 2;
      if (cfg.enabled("gradient_shape")) rep.add(g);
      if (cfg.enabled("fractional_shape")) rep.add(f);
    }
  }
  if (cfg.enabled("two_sided")) {
    Bracket b, b2;
    rep.add(timed("two_sided_grid_doubling", [&] {
      b = field_ratio_bracket(F1, v.profile);
      b2 = field_ratio_bracket(rungs.at(0), v.profile);
      return upper(bracket_change(b, b2), cfg.tol.grid_stability, bracket_str(b) + " -> " + bracket_str(b2));
    }));
    rep.add(timed("two_sided_ledger", [&] { return ledger_bracket(cfg, "two_sided", b, rep); }));
  }
}

}  // namespace

void run_validate(const ExperimentConfig& cfg, ValidationReport& rep) {
  rep.command = "validate";
  if (cfg.variable)
    validate_variable_cmd(cfg, rep);
  else
    validate_frozen_cmd(cfg, rep);
  return;
}

namespace {

std::vector<double> ecf_points(double sigma) {
  std::vector<double> xi;
  for (int k = 1; k <= 8; ++k) xi.push_back(0.25 * k / sigma);
  return xi;
}

}  // namespace

void run_simulate(const ExperimentConfig& cfg, ValidationReport& rep) {
  rep.command = "simulate";
  validate_sim(cfg.sim);
  if (!cfg.variable) {
    FrozenKernelSpec spec = cfg.make_frozen();
    validate_frozen(spec, cfg.t, cfg.s);
    SampleSet S;
    rep.add(timed("sample", [&] {
      S = simulate_frozen(spec, cfg.t, cfg.s, cfg.sim);
      return info(static_cast<double>(S.size()), "paths");
    }));
    S.write_csv(path_in(cfg, "samples.csv"));
    rep.outputs.push_back({"samples.csv", spec.d() == 1 ? std::vector<std::string>{"x"}
                                                        : std::vector<std::string>{"x1", "x2"},
                           "one sample of X_{t,s} per line"});
    if (spec.d() == 1 && cfg.enabled("ks")) {
      rep.add(timed("ks", [&] {
        KSResult k = ks_test(S.values, frozen_cdf(spec, cfg.t, cfg.s));
        return upper(k.D, k.critical, "5% asymptotic critical value");
      }));
    }
    if (spec.d() == 1 && cfg.enabled("ecf")) {
      rep.add(timed("ecf", [&] {
        auto xi = ecf_points(spec.profile.phi_inverse(cfg.s - cfg.t));
        ECFResult e = ecf_check(S, spec, cfg.t, cfg.s, xi);
        return upper(*std::max_element(e.error.begin(), e.error.end()), e.bound, "8 frequencies, 4/sqrt(n)");
      }));
    }
    rep.data["moments"] = {{"mean", S.mean()}, {"stddev", S.stddev()}};
    return;
  }

  VariableKernelSpec v = cfg.make_variable();
  validate_variable(v);
  const double x0req = cfg.xs.empty() ? 0.0 : cfg.xs[0];
  if (cfg.enabled("ks")) {
    require_gate(v, rep);
    const double eps0 = resolved_eps0(cfg, v, rep);
    Parametrix P(v, cfg.parametrix);
    HeatKernelField F = P.field(cfg.t, cfg.s, eps0);
    const int i0 = nearest_index(x0req, F.h(), F.M);
    const double x0 = F.x(i0);
    SampleSet S;
    rep.add(timed("sample", [&] {
      S = simulate_variable_euler(v, cfg.t, cfg.s, x0, cfg.sim);
      return info(static_cast<double>(S.size()), "Euler paths");
    }));
    S.write_csv(path_in(cfg, "samples.csv"));
    rep.outputs.push_back({"samples.csv", {"x"}, "Euler endpoint per line, started at x0"});
    rep.add(timed("ks", [&] {
      KSResult k = ks_test(wrap_offsets(S.values, x0, F.L), field_cdf(F, i0));
      return upper(k.D, k.critical, "Euler vs parametrix row, offsets wrapped to the torus");
    }));
  }
  const double x0 = x0req;
  if (cfg.enabled("exit")) {
    ExitReport fit;
    rep.add(timed("exit_fit", [&] {
      std::vector<double> rs;
      for (int k = 1; k <= 8; ++k) rs.push_back(k * cfg.horizon / 8.0);
      fit = exit_time_stats(v, cfg.t, x0, cfg.exit_eps, rs, cfg.sim);
      return info(fit.C0, "fitted C0 = max P(tau <= t + r) phi(eps) / r");
    }));
    json curve = json::array();
    for (auto& e : fit.curve) curve.push_back({{"r", e.r}, {"p", e.p}, {"stderr", e.stderr_}});
    rep.data["exit_curve"] = curve;
    rep.add(timed("exit_bound", [&] {
      const double g0 = 1.0 / (2.0 * fit.C0);
      SimConfig c2 = cfg.sim;
      c2.seed = cfg.sim.seed + 1;
      ExitReport e = exit_time_stats(v, cfg.t, x0, cfg.exit_eps, {g0 * v.profile.phi(cfg.exit_eps)}, c2);
      const auto& pe = e.curve.at(0);
      return upper(pe.p, 0.5 + 2.0 * pe.stderr_, "P(tau <= t + gamma0 phi(eps)), gamma0 = " + fmt(g0));
    }));
  }
  if (cfg.enabled("hitting")) {
    HittingReport h1, h2;
    rep.add(timed("hitting", [&] {
      h1 = hitting_prob_stats(v, cfg.t, x0, x0 + cfg.hit_distance, cfg.hit_eps, cfg.horizon, cfg.sim);
      h2 = hitting_prob_stats(v, cfg.t, x0, x0 + 2 * cfg.hit_distance, cfg.hit_eps, cfg.horizon, cfg.sim);
      return info(h1.ratio, "p / envelope at distance " + fmt(cfg.hit_distance));
    }));
    rep.data["hitting"] = {{"p", h1.p},       {"stderr", h1.stderr_}, {"envelope", h1.envelope},
                           {"ratio", h1.ratio}, {"p_doubled", h2.p},   {"ratio_doubled", h2.ratio}};
  }
  return;
}

ValidationReport cmd_profile(const ExperimentConfig& cfg) {
  ValidationReport rep;
  run_profile(cfg, rep);
  return rep;
}

ValidationReport cmd_density(const ExperimentConfig& cfg) {
  ValidationReport rep;
  run_density(cfg, rep);
  return rep;
}

ValidationReport cmd_validate(const ExperimentConfig& cfg) {
  ValidationReport rep;
  run_validate(cfg, rep);
  return rep;
}

ValidationReport cmd_simulate(const ExperimentConfig& cfg) {
  ValidationReport rep;
  run_simulate(cfg, rep);
  return rep;
}

ValidationReport run_command(const ExperimentConfig& cfg) {
  // partial results survive an error
  ValidationReport rep;
  try {
    if (cfg.command == "profile")
      run_profile(cfg, rep);
    else if (cfg.command == "density")
      run_density(cfg, rep);
    else if (cfg.command == "validate")
      run_validate(cfg, rep);
    else if (cfg.command == "simulate")
      run_simulate(cfg, rep);
    else
      fail(ErrorKind::Config, "unknown command '" + cfg.command + "'");
  } catch (const Error& e) {
    rep.command = cfg.command;
    rep.exit_code = exit_code_for(e.kind());
    rep.error = std::string(kind_name(e.kind())) + ": " + e.what();
    return rep;
  }
  if (!rep.pass()) rep.exit_code = kExitCheckFailed;
  return rep;
}

}  // namespace hk
