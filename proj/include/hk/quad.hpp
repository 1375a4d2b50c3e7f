#pragma once

// Composite Gauss rules on graded panels and tail/divergence tools for
// integrands of power-times-slowly-varying type.

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace hk {

struct GaussRule {
  std::vector<double> x;  // nodes on [-1,1]
  std::vector<double> w;
};

// Gauss-Legendre rule with n nodes, cached.
const GaussRule& gauss_rule(int n);

template <class F>
double gauss_panel(F&& f, double a, double b, const GaussRule& g) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double s = 0.0;
  for (std::size_t i = 0; i < g.x.size(); ++i) s += g.w[i] * f(c + h * g.x[i]);
  return s * h;
}

// Uniform panels of width at most `width` on [a,b].
template <class F>
double integrate_uniform(F&& f, double a, double b, double width, const GaussRule& g) {
  if (b <= a) return 0.0;
  int n = std::max(1, static_cast<int>(std::ceil((b - a) / width)));
  double h = (b - a) / n, s = 0.0;
  for (int k = 0; k < n; ++k) s += gauss_panel(f, a + k * h, a + (k + 1) * h, g);
  return s;
}

enum class Verdict { Convergent, Divergent, Indeterminate };

const char* verdict_name(Verdict v);

// Partial integrals of exp(logf(v)) over v in [0, k ln 2] for k = 10^0..10^5.
// Divergent when the last three decade ratios are all >= growth; convergent
// when the last ratio is within settle of one.
struct DepthScan {
  std::array<double, 6> partial{};
  Verdict verdict = Verdict::Indeterminate;
  std::string diagnostics;
};

struct ScanConfig {
  double growth = 1.05;
  double settle = 1e-3;
};

DepthScan scan_depth(const std::function<double(double)>& logf, const ScanConfig& cfg = {});

// Integral of f over v in [0, inf): fine panels of width `fine_width` on
// [0, fine_extent], then geometrically widening panels up to vmax, then the
// map v = vmax / w on (0,1].
struct DepthGrid {
  double fine_width = std::log(2.0) / 8.0;
  double fine_extent = 40.0 * std::log(2.0);
  double growth = 1.15;
  double vmax = 2000.0;
  int order = 10;
};

double integrate_depth(const std::function<double(double)>& f, const DepthGrid& g = {});

// Radial integral of g over (0, inf) split at increasing breakpoints b_0 < ... ;
// 0-end and inf-end handled through integrate_depth in log radius.
struct RadialResult {
  double value = 0.0;
  Verdict zero_end = Verdict::Convergent;
  Verdict inf_end = Verdict::Convergent;
};

// logg(log r) returns log of the positive integrand g(r); g(r) dr = g r dlog r.
RadialResult integrate_radial_log(const std::function<double(double)>& logg, std::vector<double> breakpoints,
                                  const DepthGrid& grid = {}, bool scan = true);

// Integral of f over the real line, split at the sorted breakpoints; panels
// are geometric toward every breakpoint and tails are mapped to depth.
double integrate_line(const std::function<double(double)>& f, std::vector<double> breakpoints,
                      const DepthGrid& grid = {});
// Integral of f over [b, inf).
double integrate_tail(const std::function<double(double)>& f, double b, double scale = 1.0,
                      const DepthGrid& grid = {});

// Monotone piecewise-cubic (Fritsch-Carlson) interpolant.
class MonotoneSpline {
 public:
  MonotoneSpline() = default;
  MonotoneSpline(std::vector<double> x, std::vector<double> y);
  double operator()(double t) const;
  const std::vector<double>& x() const { return x_; }
  const std::vector<double>& y() const { return y_; }

 private:
  std::vector<double> x_, y_, m_;
};

}  // namespace hk
