#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "elgof/errors.hpp"
#include "elgof/integrate.hpp"
#include "elgof/kernel.hpp"
#include "elgof/smoothing.hpp"

namespace elgof {

/// Indicator of an axis-aligned box S, optionally divided by its volume so
/// that it integrates to one.
struct WeightFunction {
  std::vector<double> lo;
  std::vector<double> hi;
  bool normalize = true;

  static WeightFunction box(std::size_t d, double a, double b, bool normalize = true) {
    return WeightFunction{std::vector<double>(d, a), std::vector<double>(d, b), normalize};
  }

  std::size_t dim() const noexcept { return lo.size(); }

  void validate() const {
    if (lo.empty() || lo.size() != hi.size()) throw InvalidWeight("weight support box is malformed");
    for (std::size_t j = 0; j < lo.size(); ++j) {
      if (!std::isfinite(lo[j]) || !std::isfinite(hi[j]) || !(hi[j] > lo[j])) {
        throw InvalidWeight("weight support has zero measure on axis " + std::to_string(j));
      }
    }
  }

  double volume() const {
    double v = 1.0;
    for (std::size_t j = 0; j < lo.size(); ++j) v *= hi[j] - lo[j];
    return v;
  }

  bool contains(std::span<const double> x) const {
    for (std::size_t j = 0; j < lo.size(); ++j) {
      if (x[j] < lo[j] || x[j] > hi[j]) return false;
    }
    return true;
  }

  /// Value on the support.
  double height() const { return normalize ? 1.0 / volume() : 1.0; }

  double operator()(std::span<const double> x) const { return contains(x) ? height() : 0.0; }

  /// int pi^2 dx
  double integral_of_square() const { return height() * height() * volume(); }
};

/// Tensor-product quadrature rule: one 1-D rule per axis.
struct QuadratureGrid {
  struct Axis {
    std::vector<double> nodes;
    std::vector<double> weights;
  };
  std::vector<Axis> axes;

  std::size_t dim() const noexcept { return axes.size(); }

  std::size_t size() const noexcept {
    std::size_t s = axes.empty() ? 0 : 1;
    for (const auto& a : axes) s *= a.nodes.size();
    return s;
  }

  /// Expands flat node index into per-axis indices (axis 0 varies slowest).
  void unflatten(std::size_t flat, std::span<std::size_t> out) const {
    for (std::size_t j = axes.size(); j-- > 0;) {
      const std::size_t len = axes[j].nodes.size();
      out[j] = flat % len;
      flat /= len;
    }
  }
};

/// Midpoint rule with `per_axis` cells on each side of the support box.
inline QuadratureGrid midpoint_grid(const WeightFunction& pi, std::size_t per_axis) {
  pi.validate();
  if (per_axis == 0) throw std::invalid_argument("quadrature needs at least one node per axis");
  QuadratureGrid g;
  for (std::size_t j = 0; j < pi.dim(); ++j) {
    QuadratureGrid::Axis a;
    const double w = (pi.hi[j] - pi.lo[j]) / static_cast<double>(per_axis);
    for (std::size_t i = 0; i < per_axis; ++i) {
      a.nodes.push_back(pi.lo[j] + (static_cast<double>(i) + 0.5) * w);
      a.weights.push_back(w);
    }
    g.axes.push_back(std::move(a));
  }
  return g;
}

/// Node count per axis keeping the spacing at most h/4, never below 64.
inline std::size_t midpoint_nodes_for(const WeightFunction& pi, double h_min) {
  double range = 0.0;
  for (std::size_t j = 0; j < pi.dim(); ++j) range = std::max(range, pi.hi[j] - pi.lo[j]);
  return std::max<std::size_t>(64, static_cast<std::size_t>(std::ceil(4.0 * range / h_min)));
}

/// Composite Gauss-Legendre rule whose pieces break wherever a kernel
/// window edge or kink crosses the axis (X_ij + c h_l for kernel
/// breakpoints c). The integrand is smooth on every piece, so the rule
/// converges geometrically in `order`.
inline QuadratureGrid kink_aligned_grid(const WeightFunction& pi, const Eigen::MatrixXd& X,
                                        const BandwidthVector& h, const KernelSpec& spec, int order) {
  pi.validate();
  if (static_cast<Eigen::Index>(pi.dim()) != X.cols()) {
    throw std::invalid_argument("weight function dimension does not match covariates");
  }
  if (order < 1) throw std::invalid_argument("Gauss-Legendre order must be >= 1");
  QuadratureGrid g;
  std::vector<double> nodes, weights;
  for (std::size_t j = 0; j < pi.dim(); ++j) {
    std::vector<double> br;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      for (double hl : h.h_l) {
        for (double c : spec.breakpoints()) br.push_back(X(i, static_cast<Eigen::Index>(j)) + c * hl);
      }
    }
    br = clip_breakpoints(std::move(br), pi.lo[j], pi.hi[j]);
    QuadratureGrid::Axis a;
    for (std::size_t p = 0; p + 1 < br.size(); ++p) {
      gauss_legendre_rule(order, br[p], br[p + 1], nodes, weights);
      a.nodes.insert(a.nodes.end(), nodes.begin(), nodes.end());
      a.weights.insert(a.weights.end(), weights.begin(), weights.end());
    }
    g.axes.push_back(std::move(a));
  }
  return g;
}

/// How the integral over the weight support is discretised.
struct QuadraturePolicy {
  enum class Rule {
    midpoint_auto,   ///< midpoint, max(64, ceil(4 range / h_min)) cells per axis
    midpoint_fixed,  ///< midpoint, `nodes_per_axis` cells per axis
    kink_aligned,    ///< Gauss-Legendre of `gauss_order` on kink-free pieces
  };
  Rule rule = Rule::midpoint_auto;
  std::size_t nodes_per_axis = 64;
  int gauss_order = 4;

  QuadratureGrid build(const WeightFunction& pi, const Eigen::MatrixXd& X, const BandwidthVector& h,
                       const KernelSpec& spec) const {
    switch (rule) {
      case Rule::midpoint_auto: return midpoint_grid(pi, midpoint_nodes_for(pi, h.min()));
      case Rule::midpoint_fixed: return midpoint_grid(pi, nodes_per_axis);
      case Rule::kink_aligned: return kink_aligned_grid(pi, X, h, spec, gauss_order);
    }
    return {};
  }
};

}  // namespace elgof
