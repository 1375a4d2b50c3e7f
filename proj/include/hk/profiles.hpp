#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hk/quad.hpp"
#include "json.hpp"

namespace hk {

enum class CaseTag { Case1, Case2, Case3 };
enum class CompensatorMode { None, Truncated, Full };

const char* case_name(CaseTag c);
CompensatorMode compensator_for(CaseTag c);

// Declared scaling constants: c1 (R/r)^beta1 <= phi(R)/phi(r) for 0<r<R<=1 and
// phi(R)/phi(r) <= c2 (R/r)^beta2 for all 0<r<R.
struct Declared {
  double beta1 = 1.0, beta2 = 1.0, c1 = 1.0, c2 = 1.0;
};

class ScalingProfile {
 public:
  static ScalingProfile power(double alpha, int d = 1);
  static ScalingProfile piecewise(double alpha, double beta, int d = 1);
  static ScalingProfile mixture(std::vector<double> alphas, std::vector<double> weights, int d = 1);
  static ScalingProfile harmonic(std::vector<double> alphas, std::vector<double> weights, int d = 1);
  // r log(e/r) on (0,1], r^beta beyond.
  static ScalingProfile xlog(double beta, int d = 1);
  // log-log linear interpolation through the knots; normalized so phi(1)=1.
  static ScalingProfile table(std::vector<double> r, std::vector<double> phi, Declared dec, int d = 1);
  static ScalingProfile callable(std::function<double(double)> phi, Declared dec, std::string id, int d = 1);

  static ScalingProfile from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  // phi_s(u) = phi(sigma u) / phi(sigma)
  ScalingProfile rescaled(double sigma) const;

  double phi(double r) const;
  double log_phi(double lr) const;
  double elasticity(double r) const;  // r phi'(r) / phi(r)
  double elasticity_log(double lr) const;
  double dphi(double r) const;
  double phi_inverse(double t) const;
  double log_phi_inverse(double lt) const;

  // coefficient c(|z|) with z^(phi) = c(|z|) z
  double compensator(double zabs) const;
  double gamma_weight(int i, double r) const;
  double log_gamma_weight(int i, double lr) const;

  int d() const { return d_; }
  CaseTag case_tag() const { return case_; }
  CompensatorMode compensator_mode() const { return compensator_for(case_); }
  const Declared& declared() const { return dec_; }
  const std::string& id() const { return id_; }
  // kinks of phi that quadratures should respect
  const std::vector<double>& kinks() const { return kinks_; }

  void set_declared(const Declared& d) { dec_ = d; }
  void set_case(CaseTag c) { case_ = c; }

 private:
  std::function<double(double)> logphi_;
  std::function<double(double)> elast_;  // of log r
  std::function<double(double)> loginv_;  // optional closed form
  Declared dec_;
  CaseTag case_ = CaseTag::Case2;
  int d_ = 1;
  std::string id_;
  nlohmann::json params_;
  std::vector<double> kinks_;
};

CaseTag classify_case(const ScalingProfile& p);
// c0 = int (r^2 ^ 1)/(r phi(r)) dr; +inf when divergent.
double c0_integral(const ScalingProfile& p);

struct BoundReport {
  bool pass = true;
  double worst_lower = 0.0;  // max over lattice of c1 (R/r)^b1 / (phi(R)/phi(r)) - 1
  double worst_upper = 0.0;  // max of (phi(R)/phi(r)) / (c2 (R/r)^b2) - 1
  double lower_r = 0, lower_R = 0, upper_r = 0, upper_R = 0;
  std::string summary() const;
};

// Lattice of radii: n points per decade over [lo, hi].
std::vector<double> log_lattice(double lo, double hi, int per_decade);
BoundReport verify_scaling_bounds(const ScalingProfile& p, const std::vector<double>& radii,
                                  double slack = 1e-9);

struct APhi {
  bool divergent = false;
  double value = 0.0;
  double argmax_lambda = 1.0;
  std::vector<double> lambdas, values;
};

std::vector<double> default_lambda_grid();
APhi compute_A_phi(const ScalingProfile& p, int i, const std::vector<double>& lambdas = default_lambda_grid(),
                   double ceiling = 1e8);

double rho(const ScalingProfile& p, double t, double r);

// min and max over the lattice of rho(t,r) (phi^-1(t)+r)^d phi(phi^-1(t)+r)
std::pair<double, double> rho_comparability(const ScalingProfile& p, const std::vector<double>& ts,
                                            const std::vector<double>& rs);

}  // namespace hk
