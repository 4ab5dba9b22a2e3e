#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

namespace elgof {

/// Sorted, deduplicated breakpoints clipped to [lo, hi], endpoints included.
inline std::vector<double> clip_breakpoints(std::vector<double> points, double lo, double hi) {
  points.push_back(lo);
  points.push_back(hi);
  std::vector<double> out;
  out.reserve(points.size());
  for (double p : points) {
    if (p >= lo && p <= hi) out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  const double tol = 1e-14 * std::max(1.0, hi - lo);
  out.erase(std::unique(out.begin(), out.end(),
                        [tol](double a, double b) { return std::abs(a - b) <= tol; }),
            out.end());
  return out;
}

/// Composite Simpson rule with about `panels` panels spread over the pieces
/// delimited by `breaks` (sorted). Every piece gets an even panel count of at
/// least two, so integrands that are polynomial of degree <= 3 on each piece
/// are integrated exactly.
template <class F>
double simpson_piecewise(F&& f, const std::vector<double>& breaks, std::size_t panels = 4096) {
  if (breaks.size() < 2) return 0.0;
  const double span = breaks.back() - breaks.front();
  if (!(span > 0.0)) return 0.0;
  double total = 0.0;
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    const double a = breaks[p];
    const double b = breaks[p + 1];
    if (!(b > a)) continue;
    auto m = static_cast<std::size_t>(std::ceil(static_cast<double>(panels) * (b - a) / span));
    m = std::max<std::size_t>(2, m + (m % 2));
    const double step = (b - a) / static_cast<double>(m);
    double acc = f(a) + f(b);
    for (std::size_t i = 1; i < m; ++i) {
      acc += (i % 2 ? 4.0 : 2.0) * f(a + static_cast<double>(i) * step);
    }
    total += acc * step / 3.0;
  }
  return total;
}

/// Gauss-Legendre rule applied on each piece delimited by `breaks`.
/// Exact for piecewise polynomials of degree <= 2*Points-1.
template <std::size_t Points = 10, class F>
double gauss_piecewise(F&& f, const std::vector<double>& breaks) {
  double total = 0.0;
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p) {
    const double a = breaks[p];
    const double b = breaks[p + 1];
    if (!(b > a)) continue;
    total += boost::math::quadrature::gauss<double, Points>::integrate(f, a, b);
  }
  return total;
}

/// Nodes and weights of an n-point Gauss-Legendre rule on [a, b].
/// Nodes come from Newton iteration on the Legendre polynomial P_n.
inline void gauss_legendre_rule(int order, double a, double b, std::vector<double>& nodes,
                                std::vector<double>& weights) {
  nodes.resize(static_cast<std::size_t>(order));
  weights.resize(static_cast<std::size_t>(order));
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  for (int i = 0; i < order; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (order + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= order; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = order * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute derivative at the converged root
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= order; ++k) {
      const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = order * (x * p1 - p0) / (x * x - 1.0);
    const auto idx = static_cast<std::size_t>(order - 1 - i);
    nodes[idx] = mid + half * x;
    weights[idx] = half * 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

}  // namespace elgof
