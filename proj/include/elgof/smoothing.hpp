#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "elgof/errors.hpp"
#include "elgof/kernel.hpp"

namespace elgof {

/// Per-curve bandwidths h_l = beta_l * h around a baseline h.
struct BandwidthVector {
  double h = 0.0;
  std::vector<double> h_l;

  static BandwidthVector equal(double h, Eigen::Index k) {
    return BandwidthVector{h, std::vector<double>(static_cast<std::size_t>(k), h)};
  }

  static BandwidthVector from_ratios(double h, const std::vector<double>& beta) {
    BandwidthVector b{h, {}};
    for (double r : beta) b.h_l.push_back(r * h);
    return b;
  }

  std::size_t k() const noexcept { return h_l.size(); }

  std::vector<double> beta() const {
    std::vector<double> r;
    for (double v : h_l) r.push_back(v / h);
    return r;
  }

  double min() const { return *std::min_element(h_l.begin(), h_l.end()); }
  double max() const { return *std::max_element(h_l.begin(), h_l.end()); }

  /// Requires c0 <= beta_l <= c1 for every curve.
  void validate(double c0 = 1e-3, double c1 = 1e3) const {
    if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("baseline bandwidth must be positive");
    if (h_l.empty()) throw std::invalid_argument("bandwidth vector is empty");
    for (double v : h_l) {
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("curve bandwidths must be positive");
      const double r = v / h;
      if (r < c0 || r > c1) throw std::invalid_argument("bandwidth ratio outside [c0, c1]");
    }
  }

  friend bool operator==(const BandwidthVector&, const BandwidthVector&) = default;
};

namespace detail {

/// Unnormalised product weight prod_j k((x_j - X_ij) / h). The h^{-d}
/// factor cancels in every ratio estimator.
inline double product_weight(const KernelSpec& spec, const Eigen::MatrixXd& X, Eigen::Index i,
                             std::span<const double> x, double h) {
  double w = 1.0;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double u = x[static_cast<std::size_t>(j)] - X(i, j);
    if (std::abs(u) > h) return 0.0;
    w *= spec(u / h);
    if (w == 0.0) return 0.0;
  }
  return w;
}

inline void check_point(const Eigen::MatrixXd& X, std::span<const double> x, double h) {
  if (static_cast<Eigen::Index>(x.size()) != X.cols()) {
    throw std::invalid_argument("evaluation point dimension does not match covariates");
  }
  if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("bandwidth must be positive");
}

}  // namespace detail

/// Nadaraya-Watson estimate of E(y | X = x).
inline double nw_estimate(const Eigen::MatrixXd& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                          std::span<const double> x, double h, const KernelSpec& spec = {}) {
  detail::check_point(X, x, h);
  if (y.size() != X.rows()) throw std::invalid_argument("response length does not match covariates");
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double w = detail::product_weight(spec, X, i, x, h);
    if (w == 0.0) continue;
    num += w * y(i);
    den += w;
  }
  if (den == 0.0) throw DegenerateWindow(std::vector<double>(x.begin(), x.end()));
  return num / den;
}

/// Smooth of the fitted null values with the same kernel and bandwidth as
/// the nonparametric estimate, so that smoothing bias cancels.
inline double smooth_null_curve(const Eigen::Ref<const Eigen::VectorXd>& model_values,
                                const Eigen::MatrixXd& X, std::span<const double> x, double h_l,
                                const KernelSpec& spec = {}) {
  return nw_estimate(X, model_values, x, h_l, spec);
}

/// `count` log-spaced bandwidths spanning [lo, hi] times the widest
/// covariate range.
inline std::vector<double> default_bandwidth_grid(const Eigen::MatrixXd& X, int count = 20,
                                                  double lo = 0.05, double hi = 0.5) {
  double range = 0.0;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    range = std::max(range, X.col(j).maxCoeff() - X.col(j).minCoeff());
  }
  if (!(range > 0.0)) range = 1.0;
  std::vector<double> grid;
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    grid.push_back(range * lo * std::pow(hi / lo, t));
  }
  return grid;
}

/// Mean leave-one-out squared prediction error at bandwidth h, skipping
/// observations whose leave-one-out window is empty. NaN when every
/// observation is skipped.
inline double loo_cv_score(const Eigen::MatrixXd& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                           const KernelSpec& spec, double h) {
  const Eigen::Index n = X.rows();
  std::vector<double> xi(static_cast<std::size_t>(X.cols()));
  double sse = 0.0;
  Eigen::Index used = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) xi[static_cast<std::size_t>(j)] = X(i, j);
    double num = 0.0;
    double den = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (t == i) continue;
      const double w = detail::product_weight(spec, X, t, xi, h);
      num += w * y(t);
      den += w;
    }
    if (den == 0.0) continue;
    const double e = y(i) - num / den;
    sse += e * e;
    ++used;
  }
  return used == 0 ? std::numeric_limits<double>::quiet_NaN() : sse / static_cast<double>(used);
}

/// Grid bandwidth minimising the leave-one-out prediction error; ties go to
/// the smaller bandwidth.
inline double loo_cv_bandwidth(const Eigen::MatrixXd& X, const Eigen::Ref<const Eigen::VectorXd>& y,
                               const KernelSpec& spec, std::vector<double> grid) {
  if (grid.empty()) throw std::invalid_argument("bandwidth grid is empty");
  if (X.rows() < 3) throw std::invalid_argument("cross-validation needs at least 3 observations");
  if (y.size() != X.rows()) throw std::invalid_argument("response length does not match covariates");
  for (double h : grid) {
    if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("grid bandwidths must be positive");
  }
  std::sort(grid.begin(), grid.end());
  const double tie_tol = 1e-12 * (y.squaredNorm() / static_cast<double>(y.size()));
  double best_h = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (double h : grid) {
    const double score = loo_cv_score(X, y, spec, h);
    if (std::isnan(score)) continue;
    if (score < best - tie_tol) {
      best = score;
      best_h = h;
    }
  }
  if (!(best_h > 0.0)) throw NoFeasibleBandwidth("every grid bandwidth leaves all points windowless");
  return best_h;
}

}  // namespace elgof
