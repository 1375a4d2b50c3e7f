#pragma once

// Levi construction for kappa(t,x,z) on a periodic grid: defect kernel q0,
// Picard series for the Volterra equation, assembly and Chapman-Kolmogorov
// extension.

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hk/frozen.hpp"
#include "hk/moduli.hpp"
#include "hk/profiles.hpp"
#include "json.hpp"

namespace hk {

struct VariableKernelSpec {
  ScalingProfile profile;
  std::function<double(double, double, double)> kappa;  // (t, x, z)
  double kappa0 = 1.0;
  Modulus modulus = Modulus::constant();  // |kappa(t,x,z) - kappa(t,y,z)| <= ell^2(|x-y|)
  bool symmetric = true;                  // declared; checked on a lattice
  bool time_homogeneous = true;
  bool x_independent = false;
  double x_period = 0.0;  // > 0 when kappa is periodic in x
  std::vector<double> z_breaks;

  // optional kappa = sum_j coef_j(t, x) basis_j(z)
  struct Term {
    std::function<double(double, double)> coef;
    std::function<double(double)> basis;
  };
  std::vector<Term> separable;

  std::string id;
  nlohmann::json params;

  FrozenKernelSpec freeze(double y) const;

  // 1 + A (1 + sin(2 pi x / P)) / 2 on |z| <= 1, 1 beyond; ell = c r^eta fitted
  static VariableKernelSpec periodic_bump(const ScalingProfile& p, double A, double P, double eta = 0.4);
  // 1 + A (1 + sin(2 pi x / P)) / 2 for every z
  static VariableKernelSpec periodic_level(const ScalingProfile& p, double A, double P, double eta = 0.4);
  // x-independent kernel; period P is only the grid period
  static VariableKernelSpec from_frozen(const FrozenKernelSpec& f, double P = 1.0);
  static VariableKernelSpec from_json(const nlohmann::json& j, const ScalingProfile& p);
  nlohmann::json to_json() const;
};

// Bounds, ell^2 oscillation, declared symmetry and Case2 cancellation on a lattice.
void validate_variable(const VariableKernelSpec& spec);

struct GateReport {
  bool open = false;
  std::string hypothesis;  // "H1" or "H2"
  std::string failure;     // empty when open
  double A = 0.0;          // A^(0) or A^(1)
  bool needs_M = false;
  double M_at_one = 0.0;
};

// symmetric -> A^(0) finite; otherwise A^(1) finite, odd cancellation in Case2
// and M^phi_ell finite in Case2/Case3. ell must be Dini.
GateReport assumption_gate(const VariableKernelSpec& spec);

// Pointwise defect kernel on the line by frequency quadrature.
double q0(const VariableKernelSpec& spec, double t, double s, double x, double y);
std::vector<double> q0_many(const VariableKernelSpec& spec, double t, double s, const std::vector<double>& xs, double y);

struct ParametrixConfig {
  int M = 256;          // grid points on [0, L)
  int periods = 1;      // L = periods * x_period
  int K = 16;           // time panels
  double grading = 0.0; // 0 -> max(2, 1/beta1)
  double tol = 1e-8;
  int max_iter = 80;
  double min_decay = 10.0;  // required -Re Psi at the Nyquist frequency
  double mass_budget = 1e-3;  // allowed row-mass drift of extended fields
};

// Discrete Volterra system on [t,s]: nodes r_0 = t < ... < r_K = s, product
// integration with hat functions in r and exact time integrals of the frozen
// semigroup.
struct VolterraSystem {
  double t = 0.0, s = 0.0;
  std::vector<double> r;
  std::vector<Eigen::MatrixXd> q0;               // q0(r_i, s; x, y)
  std::map<std::pair<int, int>, Eigen::MatrixXd> QI;  // (i,k) -> h * kernel acting on q_k
  std::vector<Eigen::MatrixXd> weight;           // 1 / h^{ell^2}(s - r_i, |x-y|), i < K
  Eigen::MatrixXd P0;                            // frozen kernel p^(y)_{t,s}
  std::vector<Eigen::MatrixXd> PI;               // h * int hat_k(r) p^(z)_{t,r}(x - z) dr
  std::vector<Eigen::MatrixXd> GI;               // x-gradients of P0 (index 0) and PI (1..K+1)
};

struct QSolution {
  double t = 0.0, s = 0.0;
  std::vector<double> r;
  std::vector<Eigen::MatrixXd> q;
  std::vector<double> norms;   // weighted norms of q^(n)
  std::vector<double> ratios;  // norms[n]/norms[n-1]
  int iterations = 0;
  double residual = 0.0;  // weighted norm of q - q0 - V q, recomputed
};

struct IntervalRecord {
  double t = 0.0, s = 0.0;
  std::string method;  // "direct" or "ck"
  int depth = 0;
};

struct HeatKernelField {
  double t = 0.0, s = 0.0;
  int M = 0;
  double L = 0.0;
  double scale = 0.0;     // phi^{-1}(s-t)
  Eigen::MatrixXd P;      // P(i, j) = p(x_i ; y_j)
  std::vector<IntervalRecord> ledger;

  double h() const { return L / M; }
  double x(int i) const { return i * h(); }
  std::vector<double> row_masses() const;
  double min_value() const { return P.minCoeff(); }
  double max_value() const { return P.maxCoeff(); }
  // x -> p(x; y_j) and y -> p(x_i; y)
  GridDensity column(int j) const;
  GridDensity row(int i) const;
  void write_slices(const std::string& prefix, int i0, int j0) const;
  nlohmann::json ledger_json() const;
};

class Parametrix {
 public:
  Parametrix(VariableKernelSpec spec, ParametrixConfig cfg);

  const VariableKernelSpec& spec() const { return spec_; }
  const ParametrixConfig& config() const { return cfg_; }
  int M() const { return M_; }
  double L() const { return L_; }
  double h() const { return L_ / M_; }
  double x(int i) const { return i * h(); }

  std::vector<double> time_nodes(double t, double s) const;
  std::shared_ptr<VolterraSystem> system(double t, double s, bool with_gradient = false) const;

  // (V q)_i = sum_{k >= i} QI_{ik} q_k
  std::vector<Eigen::MatrixXd> picard_step(const VolterraSystem& sys, const std::vector<Eigen::MatrixXd>& q_prev) const;
  double weighted_norm(const VolterraSystem& sys, const std::vector<Eigen::MatrixXd>& q) const;
  double residual(const VolterraSystem& sys, const std::vector<Eigen::MatrixXd>& q) const;

  // Picard series; Convergence error when the observed ratio stays >= 1.
  QSolution solve_q(double t, double s) const;
  QSolution solve_q(const VolterraSystem& sys) const;
  // block back-substitution, used as an oracle
  QSolution solve_q_direct(const VolterraSystem& sys) const;

  HeatKernelField frozen_field(double t, double s) const;
  HeatKernelField assemble_p(const VolterraSystem& sys, const QSolution& q) const;
  // d/dx of the assembled kernel, exact for the trigonometric representation in x
  Eigen::MatrixXd assemble_gradient(const VolterraSystem& sys, const QSolution& q) const;
  // direct when s - t <= eps0, otherwise dyadic Chapman-Kolmogorov extension
  HeatKernelField field(double t, double s, double eps0) const;

  // max over y of Re Psi_y(t,s) at the Nyquist frequency
  double nyquist_decay(double t, double s) const;

 private:
  const Eigen::MatrixXcd& table(double time) const;
  Eigen::MatrixXd left_factor(const Eigen::MatrixXcd& psi) const;

  HeatKernelField field_rec(double t, double s, double eps0, int depth) const;

  VariableKernelSpec spec_;
  ParametrixConfig cfg_;
  int M_ = 0, H_ = 0;
  double L_ = 0.0;
  std::vector<double> xi_, w_;
  Eigen::MatrixXd cosT_, sinT_;  // cos/sin(2 pi j m / M), M x H
  std::vector<std::vector<cplx>> basis_symbol_;  // separable terms at xi_m
  mutable std::map<double, Eigen::MatrixXcd> tables_;
};

// Compose two fields on adjacent intervals: p_{t,s} = h sum_z p_{t,m}(x,z) p_{m,s}(z,y).
HeatKernelField compose(const HeatKernelField& a, const HeatKernelField& b);

// rho summed over periodic images of period L
double periodized_rho(const ScalingProfile& p, double tau, double x, double L);

struct Epsilon0Report {
  double C0 = 0.0, C1 = 0.0, C2 = 0.0;
  double eps0 = 0.0;
  double gamma_at_eps0 = 0.0;  // Gamma_{ell^2_phi}(eps0)
  double contraction = 0.0;    // C2 Gamma_{ell^2_phi}(eps0)
};

// Empirical C0 from a q0 sweep on the line and C1 from a convolution sweep;
// eps0 is the largest dyadic eps with Gamma(eps) <= 1/(2 C2), halved.
double estimate_C0(const VariableKernelSpec& spec);
double estimate_C1(const Modulus& ell2, const ScalingProfile& p);
Epsilon0Report epsilon0(const VariableKernelSpec& spec);
Epsilon0Report epsilon0_from(const Modulus& ell, const ScalingProfile& p, double C0, double C1);

}  // namespace hk
