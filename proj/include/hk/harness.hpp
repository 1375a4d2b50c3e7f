#pragma once

// Experiment configuration, regression ledger, measurement helpers shared by
// the CLI and the acceptance binary, and the four CLI commands.

#include <map>
#include <string>
#include <vector>

#include "hk/error.hpp"
#include "hk/frozen.hpp"
#include "hk/moduli.hpp"
#include "hk/parametrix.hpp"
#include "hk/profiles.hpp"
#include "hk/simulate.hpp"
#include "json.hpp"

namespace hk {

enum ExitCode : int {
  kExitPass = 0,
  kExitCheckFailed = 1,
  kExitConfig = 2,
  kExitGate = 3,
  kExitStatistics = 4,
  kExitNonConvergence = 5
};

int exit_code_for(ErrorKind k);

struct Tolerances {
  double mass = 1e-3;
  double ck = 1e-3;
  double scaling_power = 1e-8;
  double scaling_piecewise = 1e-5;
  double drift = 0.10;          // shape-constant drift along the time ladder
  double grid_stability = 0.05;  // bracket change under grid doubling
  double fd_order = 1.9;
  double picard_residual = 3e-8;
  double linearity_lo = 0.45, linearity_hi = 0.55;
};

struct ExperimentConfig {
  std::string command;
  std::string fixture;  // ledger key; empty -> derived from the kernel JSON
  nlohmann::json profile, modulus, kernel;
  bool variable = false;  // kernel.kind present -> variable kappa
  double t = 0.0, s = 1.0;
  GridConfig grid;
  ParametrixConfig parametrix;
  double eps0 = 0.0;  // 0 -> estimated
  SimConfig sim;
  std::vector<double> xs;  // density evaluation points
  std::map<std::string, bool> checks;
  Tolerances tol;
  std::string out = "out";
  std::string ledger;  // path of the ledger file
  bool certify = false;
  // simulate extras
  double exit_eps = 0.25, hit_distance = 4.0, hit_eps = 0.5, horizon = 0.5;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::string& path);
  nlohmann::json to_json() const;

  ScalingProfile make_profile() const;
  FrozenKernelSpec make_frozen() const;
  VariableKernelSpec make_variable() const;
  bool enabled(const std::string& check) const;
  std::string fixture_key() const;
};

struct CheckResult {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  std::string relation;  // "<=", ">=", "in", "info"
  bool pass = false;
  double runtime = 0.0;
  std::string detail;
};

struct OutputFile {
  std::string file;
  std::vector<std::string> columns;
  std::string description;
};

struct ValidationReport {
  std::string command;
  std::vector<CheckResult> checks;
  std::vector<OutputFile> outputs;  // listed in manifest.json
  nlohmann::json data = nlohmann::json::object();
  int exit_code = kExitPass;
  std::string error;

  bool pass() const;
  // replaces an existing check of the same name
  void add(CheckResult c);
  // deterministic content only; runtimes go to timing_json
  nlohmann::json to_json() const;
  nlohmann::json timing_json() const;
  // report.json, timing.json and manifest.json
  void write(const std::string& dir) const;
  std::string summary() const;
};

// Versioned regression constants. Entries are only ever added.
class Ledger {
 public:
  static Ledger load(const std::string& path);
  bool has(const std::string& section, const std::string& key) const;
  nlohmann::json get(const std::string& section, const std::string& key) const;
  // Config error when the entry already exists
  void certify(const std::string& section, const std::string& key, const nlohmann::json& value);
  void save() const;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  nlohmann::json j_;
};

std::string default_ledger_path();

// ------------------------------------------------------------ measurements

struct Bracket {
  double lo = 0.0, hi = 0.0;
};

// min/max of p/((s-t) rho) over |x| <= 20 phi^{-1}(s-t)
Bracket frozen_ratio_bracket(const FrozenKernelSpec& spec, double t, double s, const GridConfig& g = {});
// same for a field, against rho summed over the periods of the torus
Bracket field_ratio_bracket(const HeatKernelField& f, const ScalingProfile& p, double reach = 20.0);
// relative change of a bracket: max of |lo'/lo - 1| and |hi'/hi - 1|
double bracket_change(const Bracket& a, const Bracket& b);
bool bracket_inside(const Bracket& inner, const Bracket& outer);
// ledger bracket from a measured one: lo / (1 + margin), hi * (1 + margin)
Bracket widen(const Bracket& b, double margin);

struct FDOrder {
  std::vector<double> steps, errors;
  double order = 0.0;  // min over successive halvings
};

// spectral gradient vs centered differences with steps 4, 2, 1 cells of a grid
// no coarser than phi^{-1}(s-t) / 32
FDOrder gradient_fd_order(const FrozenKernelSpec& spec, double t, double s, const GridConfig& g = {});

struct ShapeLadder {
  std::vector<double> taus;
  std::vector<double> grad_C, frac_C;
  double grad_drift = 0.0, frac_drift = 0.0;  // (max - min) / min
};

// |grad p| / ((tau/phi^{-1}(tau) + M(phi^{-1}(tau))) rho) and
// int |Delta p| dz / ((Gamma/ell)(tau) rho) on the field for tau = eps0 2^-k.
// The fields of the rungs are returned through `fields` when given.
ShapeLadder shape_ladder(const Parametrix& P, double t, double eps0, int levels = 3,
                         std::vector<HeatKernelField>* fields = nullptr);

struct Linearity {
  double eps = 0.0;
  double sup_eps = 0.0, sup_half = 0.0;
  double ratio = 0.0;  // sup_half / sup_eps
};

// sup_x |p(kappa) - p(kappa + e)| / rho for e = eps and eps/2
Linearity continuous_dependence(const FrozenKernelSpec& spec, double t, double s, double eps,
                                const GridConfig& g = {});

// max |compose(p_{t,r}, p_{r,s}) - p_{t,s}| / max p_{t,s}
double ck_residual(const Parametrix& P, const HeatKernelField& full, double r, double eps0);

struct ScalingAgreement {
  double max_rel = 0.0;  // over grid points with p >= 1e-6 max p
};

ScalingAgreement scaling_agreement(const FrozenKernelSpec& spec, double t, double s, const GridConfig& g = {});

// ------------------------------------------------------------ commands

ValidationReport cmd_profile(const ExperimentConfig& cfg);
ValidationReport cmd_density(const ExperimentConfig& cfg);
ValidationReport cmd_validate(const ExperimentConfig& cfg);
ValidationReport cmd_simulate(const ExperimentConfig& cfg);

// Dispatch on cfg.command; hk::Error is mapped to an exit code and recorded.
ValidationReport run_command(const ExperimentConfig& cfg);

}  // namespace hk
