#include "hk/quad.hpp"

#include <algorithm>
#include <boost/math/special_functions/legendre.hpp>
#include <map>
#include <mutex>
#include <sstream>

#include "hk/error.hpp"

namespace hk {

const GaussRule& gauss_rule(int n) {
  static std::mutex mu;
  static std::map<int, GaussRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  if (n < 1) fail(ErrorKind::Domain, "gauss_rule: n must be positive");
  GaussRule g;
  auto zeros = boost::math::legendre_p_zeros<double>(n);
  for (double z : zeros) {
    double dp = boost::math::legendre_p_prime(n, z);
    double w = 2.0 / ((1.0 - z * z) * dp * dp);
    if (z == 0.0) {
      g.x.push_back(0.0);
      g.w.push_back(w);
    } else {
      g.x.push_back(-z);
      g.w.push_back(w);
      g.x.push_back(z);
      g.w.push_back(w);
    }
  }
  std::vector<std::size_t> idx(g.x.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return g.x[a] < g.x[b]; });
  GaussRule s;
  for (auto i : idx) {
    s.x.push_back(g.x[i]);
    s.w.push_back(g.w[i]);
  }
  return cache.emplace(n, std::move(s)).first->second;
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Convergent: return "convergent";
    case Verdict::Divergent: return "divergent";
    case Verdict::Indeterminate: return "indeterminate";
  }
  return "?";
}

DepthScan scan_depth(const std::function<double(double)>& logf, const ScanConfig& cfg) {
  DepthScan out;
  const double ln2 = std::log(2.0);
  const GaussRule& g = gauss_rule(10);
  std::array<double, 6> cut;
  for (int j = 0; j < 6; ++j) cut[j] = std::pow(10.0, j) * ln2;

  double v = 0.0, w = ln2 / 8.0, sum = 0.0;
  int next = 0;
  bool overflow = false;
  while (next < 6) {
    double b = std::min(v + w, cut[next]);
    double s = 0.0;
    for (std::size_t i = 0; i < g.x.size(); ++i) {
      double u = 0.5 * (v + b) + 0.5 * (b - v) * g.x[i];
      double lf = logf(u);
      if (std::isnan(lf)) fail(ErrorKind::Numeric, "scan_depth: NaN integrand");
      if (lf > 700.0) overflow = true;
      s += g.w[i] * std::exp(std::min(lf, 700.0));
    }
    sum += 0.5 * (b - v) * s;
    if (overflow) break;
    v = b;
    if (v >= cut[next]) {
      out.partial[next] = sum;
      ++next;
    }
    w *= 1.1;
  }
  std::ostringstream d;
  if (overflow) {
    out.verdict = Verdict::Divergent;
    d << "integrand overflow before depth 2^-" << std::pow(10.0, next);
    out.diagnostics = d.str();
    return out;
  }
  auto ratio = [&](int j) {
    double a = out.partial[j], b = out.partial[j + 1];
    if (b == 0.0) return 1.0;
    if (a == 0.0) return HUGE_VAL;
    return b / a;
  };
  std::array<double, 5> r;
  for (int j = 0; j < 5; ++j) r[j] = ratio(j);
  d << "decade ratios:";
  for (double x : r) d << ' ' << x;
  out.diagnostics = d.str();
  if (r[2] >= cfg.growth && r[3] >= cfg.growth && r[4] >= cfg.growth)
    out.verdict = Verdict::Divergent;
  else if (r[4] <= 1.0 + cfg.settle)
    out.verdict = Verdict::Convergent;
  else
    out.verdict = Verdict::Indeterminate;
  return out;
}

double integrate_depth(const std::function<double(double)>& f, const DepthGrid& grid) {
  const GaussRule& g = gauss_rule(grid.order);
  double sum = 0.0;
  double v = 0.0;
  if (grid.fine_extent > 0.0) {
    sum += integrate_uniform(f, 0.0, grid.fine_extent, grid.fine_width, g);
    v = grid.fine_extent;
  }
  double w = grid.fine_width;
  while (v < grid.vmax) {
    double b = std::min(v + w, grid.vmax);
    sum += gauss_panel(f, v, b, g);
    v = b;
    w *= grid.growth;
  }
  const GaussRule& gt = gauss_rule(30);
  auto tail = [&](double s) { return s <= 0.0 ? 0.0 : f(grid.vmax / s) * grid.vmax / (s * s); };
  sum += gauss_panel(tail, 0.0, 0.05, gt) + gauss_panel(tail, 0.05, 0.3, gt) + gauss_panel(tail, 0.3, 1.0, gt);
  if (!std::isfinite(sum)) fail(ErrorKind::Numeric, "integrate_depth: non-finite result");
  return sum;
}

RadialResult integrate_radial_log(const std::function<double(double)>& logg, std::vector<double> bp,
                                  const DepthGrid& grid, bool scan) {
  RadialResult out;
  if (bp.empty()) bp.push_back(1.0);
  std::sort(bp.begin(), bp.end());
  bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
  const double lb0 = std::log(bp.front()), lbn = std::log(bp.back());
  auto lzero = [&](double v) { return logg(lb0 - v) + lb0 - v; };
  auto linf = [&](double v) { return logg(lbn + v) + lbn + v; };
  if (scan) {
    out.zero_end = scan_depth(lzero).verdict;
    out.inf_end = scan_depth(linf).verdict;
    if (out.zero_end == Verdict::Divergent || out.inf_end == Verdict::Divergent) {
      out.value = HUGE_VAL;
      return out;
    }
  }
  double s = integrate_depth([&](double v) { return std::exp(lzero(v)); }, grid);
  const GaussRule& g = gauss_rule(grid.order);
  for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
    s += integrate_uniform([&](double lr) { return std::exp(logg(lr) + lr); }, std::log(bp[i]),
                           std::log(bp[i + 1]), grid.fine_width, g);
  }
  DepthGrid gi = grid;
  gi.fine_extent = grid.fine_extent;
  s += integrate_depth([&](double v) { return std::exp(linf(v)); }, gi);
  out.value = s;
  return out;
}

double integrate_tail(const std::function<double(double)>& f, double b, double scale, const DepthGrid& grid) {
  // w = scale e^x, split at x = 0
  auto lo = [&](double v) {
    double w = scale * std::exp(-v);
    return f(b + w) * w;
  };
  auto hi = [&](double v) {
    if (v > 700.0) return 0.0;
    double w = scale * std::exp(v);
    return f(b + w) * w;
  };
  return integrate_depth(lo, grid) + integrate_depth(hi, grid);
}

double integrate_line(const std::function<double(double)>& f, std::vector<double> bp, const DepthGrid& grid) {
  if (bp.empty()) bp.push_back(0.0);
  std::sort(bp.begin(), bp.end());
  bp.erase(std::unique(bp.begin(), bp.end()), bp.end());
  double span = bp.back() - bp.front();
  double scale = span > 0.0 ? span : 1.0;
  double s = integrate_tail(f, bp.back(), scale, grid);
  s += integrate_tail([&](double y) { return f(-y); }, -bp.front(), scale, grid);
  for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
    const double a = bp[i], b = bp[i + 1], H = 0.5 * (b - a);
    s += integrate_depth(
        [&](double v) {
          double w = H * std::exp(-v);
          return f(a + w) * w;
        },
        grid);
    s += integrate_depth(
        [&](double v) {
          double w = H * std::exp(-v);
          return f(b - w) * w;
        },
        grid);
  }
  return s;
}

MonotoneSpline::MonotoneSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
  const std::size_t n = x_.size();
  if (n < 2 || y_.size() != n) fail(ErrorKind::Domain, "MonotoneSpline: need at least two knots");
  for (std::size_t i = 1; i < n; ++i)
    if (!(x_[i] > x_[i - 1])) fail(ErrorKind::Domain, "MonotoneSpline: abscissae must increase");
  std::vector<double> d(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) d[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
  m_.assign(n, 0.0);
  m_[0] = d[0];
  m_[n - 1] = d[n - 2];
  for (std::size_t i = 1; i + 1 < n; ++i) m_[i] = (d[i - 1] * d[i] <= 0.0) ? 0.0 : 0.5 * (d[i - 1] + d[i]);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (d[i] == 0.0) {
      m_[i] = m_[i + 1] = 0.0;
      continue;
    }
    double a = m_[i] / d[i], b = m_[i + 1] / d[i];
    double s = a * a + b * b;
    if (s > 9.0) {
      double tau = 3.0 / std::sqrt(s);
      m_[i] = tau * a * d[i];
      m_[i + 1] = tau * b * d[i];
    }
  }
}

double MonotoneSpline::operator()(double t) const {
  const std::size_t n = x_.size();
  if (t <= x_.front()) return y_.front() + m_.front() * (t - x_.front());
  if (t >= x_.back()) return y_.back() + m_.back() * (t - x_.back());
  std::size_t k = std::upper_bound(x_.begin(), x_.end(), t) - x_.begin() - 1;
  if (k >= n - 1) k = n - 2;
  double h = x_[k + 1] - x_[k], s = (t - x_[k]) / h;
  double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
  double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
  return h00 * y_[k] + h10 * h * m_[k] + h01 * y_[k + 1] + h11 * h * m_[k + 1];
}

}  // namespace hk
