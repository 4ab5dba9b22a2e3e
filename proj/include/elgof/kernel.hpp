#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "elgof/integrate.hpp"

namespace elgof {

/// Univariate base kernels, all supported on [-1, 1].
enum class KernelShape {
  triangular,     ///< (1-|u|), order 2
  epanechnikov,   ///< 3/4 (1-u^2), order 2
  biweight,       ///< 15/16 (1-u^2)^2, order 2
  epanechnikov4,  ///< 15/32 (3 - 10u^2 + 7u^4), order 4, takes negative values
};

/// Product kernel K(t) = prod_j k(t_j) built on a univariate base shape.
struct KernelSpec {
  KernelShape base = KernelShape::triangular;

  /// Univariate kernel k(u).
  double operator()(double u) const noexcept {
    const double a = std::abs(u);
    if (a > 1.0) return 0.0;
    switch (base) {
      case KernelShape::triangular: return 1.0 - a;
      case KernelShape::epanechnikov: return 0.75 * (1.0 - u * u);
      case KernelShape::biweight: {
        const double s = 1.0 - u * u;
        return 0.9375 * s * s;
      }
      case KernelShape::epanechnikov4: {
        const double u2 = u * u;
        return 0.46875 * (3.0 - 10.0 * u2 + 7.0 * u2 * u2);
      }
    }
    return 0.0;
  }

  /// Order r: first nonvanishing moment.
  int order() const noexcept { return base == KernelShape::epanechnikov4 ? 4 : 2; }

  /// Points in [-1, 1] where k or one of its derivatives jumps.
  std::vector<double> breakpoints() const {
    if (base == KernelShape::triangular) return {-1.0, 0.0, 1.0};
    return {-1.0, 1.0};
  }

  std::string_view name() const noexcept {
    switch (base) {
      case KernelShape::triangular: return "triangular";
      case KernelShape::epanechnikov: return "epanechnikov";
      case KernelShape::biweight: return "biweight";
      case KernelShape::epanechnikov4: return "epanechnikov4";
    }
    return "?";
  }

  static KernelSpec from_name(std::string_view name) {
    for (auto shape : {KernelShape::triangular, KernelShape::epanechnikov, KernelShape::biweight,
                       KernelShape::epanechnikov4}) {
      KernelSpec s{shape};
      if (s.name() == name) return s;
    }
    throw std::invalid_argument("unknown kernel '" + std::string(name) + "'");
  }
};

/// K_h(u) = h^{-d} prod_j k(u_j / h).
inline double kernel_eval(const KernelSpec& spec, std::span<const double> u, double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw std::invalid_argument("kernel bandwidth must be positive and finite");
  }
  if (u.empty()) throw std::invalid_argument("kernel argument must have dimension >= 1");
  double value = 1.0;
  for (double uj : u) {
    if (std::abs(uj) > h) return 0.0;
    value *= spec(uj / h) / h;
  }
  return value;
}

namespace detail {

inline std::size_t constant_panels() { return std::size_t{1} << 12; }

/// R(t) = int k(u) k(t u) du for the univariate kernel.
inline double univariate_R(const KernelSpec& spec, double t) {
  std::vector<double> br = spec.breakpoints();
  if (t != 0.0) {
    for (double c : spec.breakpoints()) br.push_back(c / t);
  }
  return simpson_piecewise([&](double u) { return spec(u) * spec(t * u); },
                           clip_breakpoints(br, -1.0, 1.0), constant_panels());
}

/// K^(2)(u) = int k(v) k(u + v) dv for the univariate kernel.
inline double univariate_K2(const KernelSpec& spec, double u) {
  if (std::abs(u) >= 2.0) return 0.0;
  std::vector<double> br = spec.breakpoints();
  for (double c : spec.breakpoints()) br.push_back(c - u);
  return simpson_piecewise([&](double v) { return spec(v) * spec(u + v); },
                           clip_breakpoints(br, -1.0, 1.0), constant_panels());
}

/// K^(4)(0) = int (K^(2)(u))^2 du, K^(2) being symmetric.
inline double univariate_K4_0(const KernelSpec& spec) {
  std::vector<double> br;
  for (double c : spec.breakpoints()) {
    for (double c2 : spec.breakpoints()) br.push_back(c - c2);
  }
  return simpson_piecewise(
      [&](double u) {
        const double k2 = univariate_K2(spec, u);
        return k2 * k2;
      },
      clip_breakpoints(br, -2.0, 2.0), constant_panels());
}

inline double univariate_moment(const KernelSpec& spec, int power) {
  return simpson_piecewise([&](double u) { return std::pow(u, power) * spec(u); },
                           clip_breakpoints(spec.breakpoints(), -1.0, 1.0), constant_panels());
}

}  // namespace detail

/// Constants of the d-dimensional product kernel. Scalars are precomputed;
/// R(t) and K^(2)(u) are evaluated on demand.
struct KernelConstants {
  KernelSpec spec;
  int d = 1;
  double R_K = 0.0;   ///< int K^2
  double K4_0 = 0.0;  ///< K^(4)(0)
  double k_r = 0.0;   ///< int u^r k(u) du of the univariate kernel

  /// R(t) = int K(u) K(t u) du.
  double R_of_t(double t) const { return std::pow(detail::univariate_R(spec, t), d); }

  /// K^(2)(u) = int K(v) K(u + v) dv.
  double K2(std::span<const double> u) const {
    double value = 1.0;
    for (double uj : u) value *= detail::univariate_K2(spec, uj);
    return value;
  }
};

inline KernelConstants kernel_constants(const KernelSpec& spec, int d) {
  if (d < 1) throw std::invalid_argument("kernel dimension must be >= 1");
  KernelConstants c;
  c.spec = spec;
  c.d = d;
  c.R_K = std::pow(detail::univariate_R(spec, 1.0), d);
  c.K4_0 = std::pow(detail::univariate_K4_0(spec), d);
  c.k_r = detail::univariate_moment(spec, spec.order());
  return c;
}

}  // namespace elgof
