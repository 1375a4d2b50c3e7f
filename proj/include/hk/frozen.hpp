#pragma once

// Densities of the x-independent, time-inhomogeneous Levy process with jump
// kernel kappa(t,z)/(|z|^d phi(|z|)).

#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "hk/profiles.hpp"
#include "json.hpp"

namespace hk {

using cplx = std::complex<double>;

struct FrozenKernelSpec {
  ScalingProfile profile;
  // kappa(t, z); in d = 2 the second argument is |z| (isotropic kernels only)
  std::function<double(double, double)> kappa;
  double kappa0 = 1.0;
  bool symmetric = true;
  bool time_homogeneous = true;
  std::vector<double> z_breaks;  // radii where kappa may be non-smooth
  std::string id;
  nlohmann::json params;

  int d() const { return profile.d(); }

  static FrozenKernelSpec constant(const ScalingProfile& p, double c = 1.0);
  // a + b sign(z)
  static FrozenKernelSpec asymmetric(const ScalingProfile& p, double a, double b);
  // base + bump 1{|z| <= radius}
  static FrozenKernelSpec bump(const ScalingProfile& p, double base, double bump, double radius = 1.0);
  // c (1 + amp sin(2 pi t / period))
  static FrozenKernelSpec time_sine(const ScalingProfile& p, double c, double amp, double period);
  static FrozenKernelSpec from_json(const nlohmann::json& j, const ScalingProfile& p);
  nlohmann::json to_json() const;
};

// Bounds on a (t,z) lattice and, in Case2 without symmetry, the odd-part
// cancellation. Throws Model on violation.
void validate_frozen(const FrozenKernelSpec& spec, double t0 = 0.0, double t1 = 1.0);

// Unit-time reduction on [t,s]: kappa~(r,z) = kappa(t+(s-t)r, sigma z),
// phi~(u) = phi(sigma u)/(s-t), sigma = phi^{-1}(s-t).
FrozenKernelSpec rescale_frozen(const FrozenKernelSpec& spec, double t, double s);

struct SymbolQuad {
  double U = 2.0 * 3.14159265358979323846 * 32.0;  // oscillatory cut in u = xi z
  int order = 10;
};

// Radial z-kernel on z > 0 for d = 1: even = k(z)+k(-z), odd = k(z)-k(-z).
struct ZKernel {
  std::function<double(double)> even;
  std::function<double(double)> odd;  // empty when symmetric
  std::vector<double> breaks;
  bool radial2 = false;  // d = 2 isotropic: even = k(|z|)
};

// Exponent per unit time of the kernel k/(|z|^d phi), restricted to zlo < |z| <= zhi.
cplx symbol(const ZKernel& k, const ScalingProfile& p, double xi, double zlo = 0.0, double zhi = HUGE_VAL,
            const SymbolQuad& q = {});

// Time average of kappa over [t,s] (16-point Gauss, doubled until stable).
ZKernel averaged_kernel(const FrozenKernelSpec& spec, double t, double s);

// xi -> Psi_{t,s}(xi) with the time-averaged kernel built once
std::function<cplx(double)> exponent_function(const FrozenKernelSpec& spec, double t, double s);
// smallest xi (to bisection accuracy) with Re psi(xi) <= -decay, searched from start
double frequency_cutoff(const std::function<cplx(double)>& psi, double start, double decay);
// Gauss nodes on [0, Xi], geometric toward 0, panels resolving e^{i xmax xi}
void frequency_nodes(double Xi, double xmax, std::vector<double>& nodes, std::vector<double>& weights);

cplx characteristic_exponent(const FrozenKernelSpec& spec, double t, double s, double xi);
cplx characteristic_exponent(const FrozenKernelSpec& spec, double t, double s, std::array<double, 2> xi);

struct GridConfig {
  int n = 0;          // points per axis; 0 -> 4096 in d=1, 512 in d=2
  double dx = 0.0;    // 0 -> chosen from the decay of Re Psi
  double decay = 36.8;  // |exp Psi| <= e^-decay at the frequency boundary
};

struct GridDensity {
  int d = 1;
  int n = 0;
  double dx = 0.0;
  double x0 = 0.0;  // first coordinate on each axis
  bool periodic = false;
  double scale = 0.0;  // phi^{-1}(s-t) when known
  double t = 0.0, s = 1.0;
  std::string profile_id;
  double outside_mass = 0.0;  // first-order estimate of the mass beyond the window
  std::vector<double> values;  // row-major in d = 2 (index i*n + j, x1 = i)

  double x(int i) const { return x0 + i * dx; }
  int index_of(double x) const;
  double mass() const;
  double min_value() const;
  double max_value() const;
  bool ringing_ok(double tol = 1e-8) const { return min_value() >= -tol * max_value(); }
  // 6-point Lagrange interpolation (d = 1); zero outside unless periodic
  double at(double x) const;
  void write_csv(const std::string& path) const;
};

GridDensity density_fft(const FrozenKernelSpec& spec, double t, double s, const GridConfig& cfg = {});
// Same grid as density_fft, computed through the unit-time reduction.
GridDensity density_scaled_grid(const FrozenKernelSpec& spec, double t, double s, const GridConfig& cfg = {});
// Pointwise inverse transform by quadrature (d = 1).
double density_direct(const FrozenKernelSpec& spec, double t, double s, double x);
std::vector<double> density_direct_many(const FrozenKernelSpec& spec, double t, double s, const std::vector<double>& xs);
double density_scaled(const FrozenKernelSpec& spec, double t, double s, double x);
// P(X <= x) by the Gil-Pelaez formula (d = 1).
double cdf_direct(const FrozenKernelSpec& spec, double t, double s, double x);
std::vector<double> cdf_direct_many(const FrozenKernelSpec& spec, double t, double s, const std::vector<double>& xs);

// Spectral gradient, one GridDensity per component.
std::vector<GridDensity> gradient(const FrozenKernelSpec& spec, double t, double s, const GridConfig& cfg = {});

// Derivatives of a sampled density by FFT (d = 1); the grid is treated as periodic.
std::vector<double> spectral_derivative(const GridDensity& g, int order);
// Trigonometric interpolation of a periodic d = 1 density onto factor-times finer grid.
GridDensity upsample(const GridDensity& g, int factor);

enum class Branch { FirstOrder, SecondDifference };

struct DeltaResult {
  double value = 0.0;         // int Delta_p(x,z) kappa(z) dz
  double abs_integral = 0.0;  // int |Delta_p(x,z)| dz
};

// Nonlocal difference operator at grid point `index` of a d = 1 density.
DeltaResult delta_apply(const GridDensity& g, const ScalingProfile& p, const std::function<double(double)>& kz,
                        int index, Branch branch);
std::vector<DeltaResult> delta_apply_many(const GridDensity& g, const ScalingProfile& p,
                                          const std::function<double(double)>& kz, const std::vector<int>& idx,
                                          Branch branch);
DeltaResult delta_phi_apply(const GridDensity& g, const FrozenKernelSpec& spec, double t, int index,
                            Branch branch);

// int_t^s b(r) dr with the compensator drift b of the truncation change.
double drift_vector(const FrozenKernelSpec& spec, double t, double s);

struct SmallLarge {
  double lambda = 0.0;       // time-averaged mass of the |z| > 1 part
  double large_drift = 0.0;  // -(s-t) int_{|z|>1} z^(phi) kappa nu, Case3 only
  double duration = 1.0;
  std::function<cplx(double)> small;  // exponent of the |z| <= 1 part
  std::function<cplx(double)> large;  // exponent of the |z| > 1 part
};

SmallLarge decompose_small_large(const FrozenKernelSpec& spec, double t, double s);

// min and max of p(x) / ((s-t) rho(s-t,x)) over grid points with |x| <= reach phi^{-1}(s-t)
std::pair<double, double> two_sided_ratio(const GridDensity& g, const ScalingProfile& p, double reach = 20.0);

}  // namespace hk
