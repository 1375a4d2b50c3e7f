#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hk/profiles.hpp"
#include "json.hpp"

namespace hk {

struct ModulusClass {
  bool S0 = false;
  bool D0 = false;
  bool R = false;
  double alpha = 0.0;  // index when R
};

// Continuity modulus on (0,1], extended by ell(t) = ell(1) for t >= 1.
class Modulus {
 public:
  // c t^eta (log(1 + 1/t))^a
  static Modulus family(double c, double eta, double a);
  static Modulus power(double eta, double c = 1.0) { return family(c, eta, 0.0); }
  static Modulus log_power(double a, double c = 1.0) { return family(c, 0.0, a); }
  static Modulus constant(double c = 1.0) { return family(c, 0.0, 0.0); }
  static Modulus callable(std::function<double(double)> ell, ModulusClass tags, std::string id);
  // pointwise maximum of two moduli
  static Modulus max_of(const Modulus& a, const Modulus& b);

  static Modulus from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  double operator()(double t) const;
  double log_ell(double lt) const;
  Modulus squared() const;
  Modulus scaled(double k) const;

  const ModulusClass& tags() const { return tags_; }
  const std::string& id() const { return id_; }

 private:
  std::function<double(double)> logell_;  // of log t, valid for t <= 1
  ModulusClass tags_;
  std::string id_;
  nlohmann::json params_;
};

bool check_dini(const Modulus& m);

// Richardson-extrapolated limit of ell(lambda t)/ell(t) as t -> 0.
double s0_limit(const Modulus& m, double lambda);
bool check_slowly_varying(const Modulus& m, double tol = 1e-3);

// int_0^t ell(s)/s ds; throws Divergence when the Dini integral diverges.
double gamma_ell(const Modulus& m, double t);

double ell_phi(const Modulus& m, const ScalingProfile& p, double t);
// int_0^t ell_phi(s)/s ds
double gamma_ell_phi(const Modulus& m, const ScalingProfile& p, double t);

struct MResult {
  bool divergent = false;
  double value = 0.0;
  std::string diagnostics;
};

// int_0^t (1/r)(ell(r)/ell(t) + phi(r)/phi(t)) dphi(r)
MResult M_phi_ell(const Modulus& m, const ScalingProfile& p, double t);

double potter_bound(const Modulus& m, double delta, const std::vector<double>& lattice);

double h_ell_phi(const Modulus& m, const ScalingProfile& p, double t, double r);

struct ConvolutionReport {
  double dk2_ratio = 0.0;  // int h^ell1(t,x) dx / (ell1_phi(t)/t)
  double dk1_ratio = 0.0;  // max over x of lhs / rhs
  double dk1_worst_x = 0.0;
  double rhs_first = 0.0, rhs_second = 0.0;  // the two time factors on the right
  std::vector<double> xs, lhs, rhs;
};

// Space-time convolution checks for h^ell_phi in d = 1, times 0 < s < t.
ConvolutionReport verify_convolution(const Modulus& m1, const Modulus& m2, const ScalingProfile& p, double t,
                                     double s, const std::vector<double>& xs);

// int h^ell_phi(t,x) dx in d = 1
double integral_h(const Modulus& m, const ScalingProfile& p, double t);
// space convolution int h^l1(t-s, x-y) h^l2(s,y) dy in d = 1
double convolve_h(const Modulus& m1, const Modulus& m2, const ScalingProfile& p, double t, double s, double x);

}  // namespace hk
