#pragma once

// Monte Carlo sampling of the frozen process and an Euler scheme for
// variable kappa, plus exit/hitting statistics.

#include <cstdint>
#include <random>
#include <vector>

#include "hk/frozen.hpp"
#include "hk/parametrix.hpp"

namespace hk {

struct SimConfig {
  double eps_j = 0.02;  // small-jump cutoff
  bool gaussian_correction = true;
  long paths = 100000;
  std::uint64_t seed = 20240601;
  int steps = 1;  // time steps per interval; Euler needs >= 8
};

void validate_sim(const SimConfig& cfg);

// per-path stream, independent of how paths are scheduled
std::mt19937_64 path_rng(std::uint64_t seed, std::uint64_t path);

// Inverse of the radial tail T(r) = int_r^inf du / (u phi(u)) on [lo, inf).
class TailSampler {
 public:
  TailSampler(const ScalingProfile& p, double lo);
  double T(double r) const;
  double inverse(double tail) const;
  // radius with law proportional to dr / (r phi(r)) on (a, b]
  double sample(double a, double b, double u) const;
  double lo() const { return lo_; }

 private:
  ScalingProfile p_;
  double lo_, top_, t_top_;
  std::vector<double> lr_, lt_;  // log r and log T on a grid
  MonotoneSpline inv_;           // -log T -> log r
};

// Drift, variance and jump rates of one step [r0, r1] for a fixed kernel.
struct StepMoments {
  double drift = 0.0;     // deterministic shift over the step
  double variance = 0.0;  // Gaussian replacement of jumps below eps_j
};

StepMoments step_moments(const FrozenKernelSpec& spec, double r0, double r1, const SimConfig& cfg);

struct SampleSet {
  int d = 1;
  std::vector<double> values;  // row-major, n * d
  long size() const { return d ? static_cast<long>(values.size()) / d : 0; }
  double mean(int axis = 0) const;
  double stddev(int axis = 0) const;
  void write_csv(const std::string& path) const;
};

// X_{t,s} started at 0.
SampleSet simulate_frozen(const FrozenKernelSpec& spec, double t, double s, const SimConfig& cfg);
// Euler scheme started at x0: kappa frozen at the left point of each step in x,
// exact in time through thinning and time-averaged step moments.
SampleSet simulate_variable_euler(const VariableKernelSpec& spec, double t, double s, double x0, const SimConfig& cfg);

struct KSResult {
  double D = 0.0;
  double critical = 0.0;  // 5% asymptotic value 1.358 / sqrt(n)
  long n = 0;
  bool pass = false;
};

// CDF of the frozen law from the FFT grid, anchored at 0 by the Gil-Pelaez value.
struct GridCDF {
  std::vector<double> x, F;
  double operator()(double v) const;
};
// The grid is doubled at fixed step (up to 65536 points) until the window
// misses at most max_outside of the mass; Resolution error otherwise.
GridCDF frozen_cdf(const FrozenKernelSpec& spec, double t, double s, double max_outside = 2.5e-4);
// periodic CDF of y -> p(x_i; y) on [x_i - L/2, x_i + L/2)
GridCDF field_cdf(const HeatKernelField& f, int i);
// samples mapped to offsets from x0 in [-L/2, L/2)
std::vector<double> wrap_offsets(const std::vector<double>& xs, double x0, double L);

KSResult ks_test(std::vector<double> samples, const GridCDF& F);

struct ECFResult {
  std::vector<double> xi;
  std::vector<double> error;  // |empirical - exp Psi|
  double bound = 0.0;         // 4 / sqrt(n)
  bool pass = false;
};

ECFResult ecf_check(const SampleSet& s, const FrozenKernelSpec& spec, double t, double s_time,
                    const std::vector<double>& xi);

struct ProbabilityEstimate {
  double r = 0.0;
  double p = 0.0;
  double stderr_ = 0.0;
};

struct ExitReport {
  double eps = 0.0;
  std::vector<ProbabilityEstimate> curve;  // P(tau <= t + r)
  double C0 = 0.0;                          // max p / (r / phi(eps))
};

// Exit from B(x0, eps) before t + r, for r on the grid; horizon = max r.
ExitReport exit_time_stats(const VariableKernelSpec& spec, double t, double x0, double eps,
                           const std::vector<double>& rs, const SimConfig& cfg);

struct HittingReport {
  double p = 0.0, stderr_ = 0.0;
  double envelope = 0.0;  // eps^d phi(eps) / (|x0-y0|^d phi(|x0-y0|))
  double ratio = 0.0;     // p / envelope
};

HittingReport hitting_prob_stats(const VariableKernelSpec& spec, double t, double x0, double y0, double eps,
                                 double horizon, const SimConfig& cfg);

}  // namespace hk
