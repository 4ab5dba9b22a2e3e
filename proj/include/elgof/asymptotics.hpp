#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>

#include "elgof/errors.hpp"
#include "elgof/integrate.hpp"
#include "elgof/kernel.hpp"
#include "elgof/quadrature.hpp"

namespace elgof {

/// Conditional covariance Sigma(x) and design density f(x) on the support.
struct CovarianceField {
  std::function<Eigen::MatrixXd(std::span<const double>)> sigma;
  std::function<double(std::span<const double>)> f = [](std::span<const double>) { return 1.0; };

  /// Constant Sigma with uniform design density.
  static CovarianceField constant(const Eigen::MatrixXd& s) {
    CovarianceField c;
    c.sigma = [s](std::span<const double>) { return s; };
    return c;
  }

  /// (beta_j^{-d} R(beta_l / beta_j) sigma_lj(x))
  Eigen::MatrixXd scaled_covariance(std::span<const double> x, const std::vector<double>& beta,
                                    const KernelConstants& kc) const {
    const Eigen::MatrixXd s = sigma(x);
    const auto k = static_cast<Eigen::Index>(beta.size());
    if (s.rows() != k || s.cols() != k) throw std::invalid_argument("covariance size does not match beta");
    Eigen::MatrixXd m(k, k);
    for (Eigen::Index l = 0; l < k; ++l) {
      for (Eigen::Index j = 0; j < k; ++j) {
        const double bl = beta[static_cast<std::size_t>(l)], bj = beta[static_cast<std::size_t>(j)];
        m(l, j) = std::pow(bj, -kc.d) * kc.R_of_t(bl / bj) * s(l, j);
      }
    }
    return m;
  }

  /// (gamma_lj(x)), the inverse of the scaled covariance.
  Eigen::MatrixXd gamma(std::span<const double> x, const std::vector<double>& beta, const KernelConstants& kc,
                        double max_condition = 1e12) const {
    Eigen::MatrixXd m = scaled_covariance(x, beta, kc);
    m = 0.5 * (m + m.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > max_condition || !std::isfinite(hi)) {
      throw IllConditionedField("covariance field is singular or ill-conditioned on the weight support");
    }
    return es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  }
};

namespace detail {

/// Univariate factor of omega_{l1,l2,j1,j2}(beta, K) including beta_{l2}^{-1}.
/// Inner integrals are split where either kernel factor kinks; the outer
/// integral where the inner ones do, so every piece is a polynomial.
inline double univariate_omega(const KernelSpec& spec, double b_l1, double b_l2, double b_j1, double b_j2) {
  const auto br = spec.breakpoints();
  auto inner_a = [&](double z) {
    std::vector<double> pts = br;
    for (double c : br) pts.push_back((c * b_l2 - b_j2 * z) / b_l1);
    return gauss_piecewise([&](double u) { return spec(u) * spec((b_j2 * z + b_l1 * u) / b_l2); },
                           clip_breakpoints(std::move(pts), -1.0, 1.0));
  };
  auto inner_b = [&](double z) {
    std::vector<double> pts = br;
    for (double c : br) pts.push_back((c - z) * b_j2 / b_j1);
    return gauss_piecewise([&](double v) { return spec(v) * spec(z + b_j1 * v / b_j2); },
                           clip_breakpoints(std::move(pts), -1.0, 1.0));
  };
  const double za = (b_l1 + b_l2) / b_j2;
  const double zb = 1.0 + b_j1 / b_j2;
  const double zmax = std::min(za, zb);
  std::vector<double> zs{-zmax, zmax};
  for (double c : br) {
    for (double c2 : br) {
      zs.push_back((c * b_l2 - c2 * b_l1) / b_j2);
      zs.push_back(c - c2 * b_j1 / b_j2);
    }
  }
  const double v = gauss_piecewise([&](double z) { return inner_a(z) * inner_b(z); },
                                   clip_breakpoints(std::move(zs), -zmax, zmax));
  return v / b_l2;
}

}  // namespace detail

/// omega_{l1,l2,j1,j2}(beta, K) for the d-dimensional product kernel.
inline double omega(const KernelSpec& spec, int d, const std::vector<double>& beta, std::size_t l1, std::size_t l2,
                    std::size_t j1, std::size_t j2) {
  return std::pow(detail::univariate_omega(spec, beta.at(l1), beta.at(l2), beta.at(j1), beta.at(j2)), d);
}

/// Asymptotic variance with equal bandwidths: 2 k K4(0) R(K)^{-2} int pi^2.
inline double pivotal_sigma2(const KernelSpec& spec, int d, int k, const WeightFunction& pi) {
  if (k < 1) throw std::invalid_argument("response dimension must be >= 1");
  pi.validate();
  const auto kc = kernel_constants(spec, d);
  return 2.0 * k * kc.K4_0 / (kc.R_K * kc.R_K) * pi.integral_of_square();
}

/// Tensor Gauss-Legendre rule over the weight support: `panels` pieces of
/// order `order` per axis.
inline QuadratureGrid support_rule(const WeightFunction& pi, int panels = 4, int order = 8) {
  QuadratureGrid g;
  std::vector<double> nodes, weights;
  for (std::size_t j = 0; j < pi.dim(); ++j) {
    QuadratureGrid::Axis a;
    const double w = (pi.hi[j] - pi.lo[j]) / panels;
    for (int p = 0; p < panels; ++p) {
      gauss_legendre_rule(order, pi.lo[j] + p * w, pi.lo[j] + (p + 1) * w, nodes, weights);
      a.nodes.insert(a.nodes.end(), nodes.begin(), nodes.end());
      a.weights.insert(a.weights.end(), weights.begin(), weights.end());
    }
    g.axes.push_back(std::move(a));
  }
  return g;
}

namespace detail {

template <class F>
double integrate_over(const QuadratureGrid& g, F&& fn) {
  std::vector<std::size_t> idx(g.dim());
  std::vector<double> x(g.dim());
  double acc = 0.0;
  for (std::size_t flat = 0; flat < g.size(); ++flat) {
    g.unflatten(flat, idx);
    double w = 1.0;
    for (std::size_t j = 0; j < g.dim(); ++j) {
      x[j] = g.axes[j].nodes[idx[j]];
      w *= g.axes[j].weights[idx[j]];
    }
    acc += w * fn(std::span<const double>(x));
  }
  return acc;
}

}  // namespace detail

/// Asymptotic variance sigma^2(K, Sigma) for bandwidth ratios beta.
inline double general_sigma2(const KernelSpec& spec, int d, const std::vector<double>& beta,
                             const CovarianceField& field, const WeightFunction& pi) {
  pi.validate();
  if (static_cast<int>(pi.dim()) != d) throw std::invalid_argument("weight function dimension must equal d");
  const std::size_t k = beta.size();
  if (k == 0) throw std::invalid_argument("beta is empty");
  const auto kc = kernel_constants(spec, d);
  std::vector<double> om(k * k * k * k);
  auto at = [k](std::size_t a, std::size_t b, std::size_t c, std::size_t e) { return ((a * k + b) * k + c) * k + e; };
  for (std::size_t l1 = 0; l1 < k; ++l1)
    for (std::size_t l2 = 0; l2 < k; ++l2)
      for (std::size_t j1 = 0; j1 < k; ++j1)
        for (std::size_t j2 = 0; j2 < k; ++j2) {
          om[at(l1, l2, j1, j2)] = std::pow(beta[l2], -d) * omega(spec, d, beta, l1, l2, j1, j2);
        }
  const double pi2 = pi.height() * pi.height();
  const auto grid = support_rule(pi);
  const double integral = detail::integrate_over(grid, [&](std::span<const double> x) {
    const Eigen::MatrixXd g = field.gamma(x, beta, kc);
    const Eigen::MatrixXd s = field.sigma(x);
    double sum = 0.0;
    for (std::size_t l1 = 0; l1 < k; ++l1)
      for (std::size_t l2 = 0; l2 < k; ++l2)
        for (std::size_t j1 = 0; j1 < k; ++j1)
          for (std::size_t j2 = 0; j2 < k; ++j2) {
            const auto L1 = static_cast<Eigen::Index>(l1), L2 = static_cast<Eigen::Index>(l2);
            const auto J1 = static_cast<Eigen::Index>(j1), J2 = static_cast<Eigen::Index>(j2);
            sum += om[at(l1, l2, j1, j2)] * g(L1, J1) * g(L2, J2) * s(L1, L2) * s(J1, J2);
          }
    return sum * pi2;
  });
  return 2.0 * integral;
}

/// Mean shift of the standardized statistic under the local alternative Gamma:
/// int Gamma' V^{-1} Gamma f^2 pi dx with V = f (gamma)^{-1}.
inline double shift_beta(const CovarianceField& field,
                         const std::function<Eigen::VectorXd(std::span<const double>)>& Gamma,
                         const WeightFunction& pi, const KernelSpec& spec = {}, std::vector<double> beta = {}) {
  pi.validate();
  const int d = static_cast<int>(pi.dim());
  const auto kc = kernel_constants(spec, d);
  const auto grid = support_rule(pi);
  const double height = pi.height();
  return detail::integrate_over(grid, [&](std::span<const double> x) {
    const Eigen::VectorXd G = Gamma(x);
    if (beta.empty()) beta.assign(static_cast<std::size_t>(G.size()), 1.0);
    const Eigen::MatrixXd g = field.gamma(x, beta, kc);
    return G.dot(g * G) * field.f(x) * height;
  });
}

/// Phi((beta - sigma z_alpha) / sigma), z_alpha the upper-alpha normal quantile.
inline double asymptotic_power(double beta, double sigma2, double alpha) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma^2 must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const boost::math::normal_distribution<double> normal;
  const double sigma = std::sqrt(sigma2);
  const double z = boost::math::quantile(boost::math::complement(normal, alpha));
  return boost::math::cdf(normal, (beta - sigma * z) / sigma);
}

}  // namespace elgof
