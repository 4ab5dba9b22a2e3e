#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace elgof {

enum class ELStatus {
  converged,
  capped_infeasible,  ///< zero outside the hull of the nonzero rows; log ratio capped
  degenerate,         ///< every row is zero; log ratio is 0
};

inline const char* to_string(ELStatus s) {
  switch (s) {
    case ELStatus::converged: return "converged";
    case ELStatus::capped_infeasible: return "capped_infeasible";
    case ELStatus::degenerate: return "degenerate";
  }
  return "?";
}

/// Local empirical likelihood optimum at one evaluation point.
struct ELSolution {
  Eigen::VectorXd lambda;   ///< Lagrange multiplier, k entries
  Eigen::VectorXd weights;  ///< p_i, n entries
  double log_ratio = 0.0;   ///< -2 sum log(n p_i)
  ELStatus status = ELStatus::degenerate;
  int iterations = 0;
};

/// Value substituted for the log ratio when the problem is infeasible.
inline double infeasibility_cap(Eigen::Index n) {
  return 2.0 * static_cast<double>(n) * std::log(static_cast<double>(n));
}

struct DualSolverOptions {
  int max_iterations = 50;
  double gradient_tolerance = 1e-9;
};

namespace detail {

struct DualResult {
  double log_ratio = 0.0;
  ELStatus status = ELStatus::degenerate;
  int iterations = 0;
};

/// 1-D case: maximise sum log(1 + lambda q_i) by safeguarded Newton inside
/// the bracket where every 1 + lambda q_i > 1/n.
inline DualResult solve_dual_scalar(const double* q, std::size_t m, double n_total, double& lambda,
                                    const DualSolverOptions& opt) {
  DualResult r;
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < m; ++i) {
    pos |= q[i] > 0.0;
    neg |= q[i] < 0.0;
  }
  lambda = 0.0;
  if (!(pos && neg)) {
    r.status = ELStatus::capped_infeasible;
    r.log_ratio = infeasibility_cap(static_cast<Eigen::Index>(n_total));
    return r;
  }
  const double floor = 1.0 / n_total - 1.0;  // bound on lambda q_i
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    if (q[i] > 0.0) lo = std::max(lo, floor / q[i]);
    if (q[i] < 0.0) hi = std::min(hi, floor / q[i]);
  }
  auto eval = [&](double lam, double& g, double& h) {
    g = 0.0;
    h = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double t = q[i] / (1.0 + lam * q[i]);
      g += t;
      h += t * t;
    }
  };
  double g = 0.0, h = 0.0;
  bool converged = false;
  int polish = 0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    eval(lambda, g, h);
    r.iterations = it + 1;
    if (std::abs(g) <= opt.gradient_tolerance) {
      converged = true;
      // one extra Newton step tightens the weight constraints
      if (polish++ > 0 || g == 0.0) break;
    }
    if (g > 0.0) lo = lambda; else hi = lambda;
    double next = lambda + g / h;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (next == lambda) break;
    lambda = next;
  }
  if (!converged) {
    eval(lambda, g, h);
    converged = std::abs(g) <= opt.gradient_tolerance;
  }
  double ell = 0.0;
  for (std::size_t i = 0; i < m; ++i) ell += std::log1p(lambda * q[i]);
  r.log_ratio = std::max(0.0, 2.0 * ell);
  r.status = converged ? ELStatus::converged : ELStatus::capped_infeasible;
  if (!converged) r.log_ratio = infeasibility_cap(static_cast<Eigen::Index>(n_total));
  return r;
}

/// Largest angular gap between the rows (2-D). Zero lies strictly inside the
/// hull exactly when the gap is below pi.
inline double max_angular_gap(const double* rows, std::size_t m, std::vector<double>& angles) {
  angles.clear();
  for (std::size_t i = 0; i < m; ++i) angles.push_back(std::atan2(rows[2 * i + 1], rows[2 * i]));
  std::sort(angles.begin(), angles.end());
  double gap = angles.front() + 2.0 * std::numbers::pi - angles.back();
  for (std::size_t i = 1; i < angles.size(); ++i) gap = std::max(gap, angles[i] - angles[i - 1]);
  return gap;
}

/// k >= 2: damped Newton with backtracking on the concave dual
/// sum log(1 + lambda' q_i), restricted to 1 + lambda' q_i > 1/n.
template <int K>
DualResult solve_dual_newton(const double* rows, std::size_t m, int k, double n_total,
                             Eigen::Matrix<double, K, 1>& lambda, const DualSolverOptions& opt) {
  using Vec = Eigen::Matrix<double, K, 1>;
  using Mat = Eigen::Matrix<double, K, K>;
  using RowMap = Eigen::Map<const Vec>;
  DualResult r;
  const double cap = infeasibility_cap(static_cast<Eigen::Index>(n_total));
  const double floor = 1.0 / n_total;
  lambda = Vec::Zero(k);
  auto objective = [&](const Vec& lam, bool& feasible) {
    double acc = 0.0;
    feasible = true;
    for (std::size_t i = 0; i < m; ++i) {
      const double z = 1.0 + lam.dot(RowMap(rows + i * static_cast<std::size_t>(k), k));
      if (!(z > floor)) {
        feasible = false;
        return 0.0;
      }
      acc += std::log(z);
    }
    return acc;
  };
  double value = 0.0;
  bool converged = false;
  int polish = 0;
  Vec grad(k);
  Mat hess(k, k);
  for (int it = 0; it < opt.max_iterations; ++it) {
    r.iterations = it + 1;
    grad.setZero();
    hess.setZero();
    for (std::size_t i = 0; i < m; ++i) {
      RowMap q(rows + i * static_cast<std::size_t>(k), k);
      const double z = 1.0 + lambda.dot(q);
      grad += q / z;
      hess.noalias() += (q / z) * (q / z).transpose();
    }
    if (grad.norm() <= opt.gradient_tolerance) {
      converged = true;
      if (polish++ > 0 || grad.norm() == 0.0) break;
    }
    Vec step(k);
    Eigen::LLT<Mat> llt(hess);
    bool ok = llt.info() == Eigen::Success;
    if (ok) {
      step = llt.solve(grad);
      ok = step.allFinite();
    }
    if (!ok) {
      // rank-deficient rows: minimum-norm Newton step within their span
      Eigen::SelfAdjointEigenSolver<Mat> es(hess);
      const auto& ev = es.eigenvalues();
      const double top = ev.cwiseAbs().maxCoeff();
      step.setZero();
      for (int j = 0; j < k; ++j) {
        if (ev(j) > 1e-12 * top) {
          const auto v = es.eigenvectors().col(j);
          step += v * (v.dot(grad) / ev(j));
        }
      }
      if (!step.allFinite() || step.norm() == 0.0) step = grad;
    }
    const double slope = grad.dot(step);
    // inside the quadratic region the objective gain is below rounding noise
    const bool local = slope < 1e-14;
    double t = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 80; ++bt, t *= 0.5) {
      bool feasible = false;
      const Vec trial = lambda + t * step;
      const double v = objective(trial, feasible);
      if (feasible && (local || v >= value + 1e-4 * t * slope)) {
        moved = trial != lambda;
        lambda = trial;
        value = v;
        break;
      }
    }
    if (!moved) {
      // stalled at rounding level: accept when the Newton decrement bounds
      // the remaining gain to a negligible fraction of the value
      converged |= slope <= 1e-12 * (1.0 + std::abs(value));
      break;
    }
    if (2.0 * value > cap) break;
  }
  if (!converged || 2.0 * value > cap) {
    r.status = ELStatus::capped_infeasible;
    r.log_ratio = cap;
    return r;
  }
  r.status = ELStatus::converged;
  r.log_ratio = std::max(0.0, 2.0 * value);
  return r;
}

/// Workspace for the hot path: rows of nonzero local residuals, column scaled.
struct DualWorkspace {
  std::vector<double> rows;
  std::vector<double> angles;
  std::vector<int> columns;
  std::vector<double> scale;
};

/// Solves the dual for `m` nonzero rows (row-major, k columns) among n_total
/// observations. `rows` is rescaled in place; the multiplier for the original
/// scale is written to lambda_out (k entries).
inline DualResult solve_dual(DualWorkspace& ws, std::size_t m, int k, Eigen::Index n_total,
                             double* lambda_out, const DualSolverOptions& opt = {}) {
  DualResult r;
  std::fill(lambda_out, lambda_out + k, 0.0);
  if (m == 0) return r;
  ws.columns.clear();
  ws.scale.assign(static_cast<std::size_t>(k), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (int l = 0; l < k; ++l) {
      ws.scale[static_cast<std::size_t>(l)] =
          std::max(ws.scale[static_cast<std::size_t>(l)], std::abs(ws.rows[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(l)]));
    }
  }
  for (int l = 0; l < k; ++l) {
    if (ws.scale[static_cast<std::size_t>(l)] > 0.0) ws.columns.push_back(l);
  }
  const int ke = static_cast<int>(ws.columns.size());
  if (ke == 0) return r;
  // compact to the nonzero columns, scaled to unit max-abs
  std::size_t out = 0;
  for (std::size_t i = 0; i < m; ++i) {
    bool any = false;
    for (int c = 0; c < ke; ++c) {
      const auto l = static_cast<std::size_t>(ws.columns[static_cast<std::size_t>(c)]);
      any |= ws.rows[i * static_cast<std::size_t>(k) + l] != 0.0;
    }
    if (!any) continue;
    for (int c = 0; c < ke; ++c) {
      const auto l = static_cast<std::size_t>(ws.columns[static_cast<std::size_t>(c)]);
      ws.rows[out * static_cast<std::size_t>(ke) + static_cast<std::size_t>(c)] =
          ws.rows[i * static_cast<std::size_t>(k) + l] / ws.scale[l];
    }
    ++out;
  }
  m = out;
  const double n = static_cast<double>(n_total);
  auto unscale = [&](const double* lam) {
    for (int c = 0; c < ke; ++c) {
      const auto l = static_cast<std::size_t>(ws.columns[static_cast<std::size_t>(c)]);
      lambda_out[l] = lam[c] / ws.scale[l];
    }
  };
  if (ke == 1) {
    double lam = 0.0;
    r = solve_dual_scalar(ws.rows.data(), m, n, lam, opt);
    unscale(&lam);
    return r;
  }
  if (ke == 2 && max_angular_gap(ws.rows.data(), m, ws.angles) > std::numbers::pi * (1.0 + 1e-12)) {
    r.status = ELStatus::capped_infeasible;
    r.log_ratio = infeasibility_cap(n_total);
    return r;
  }
  if (ke == 2) {
    Eigen::Vector2d lam;
    r = solve_dual_newton<2>(ws.rows.data(), m, 2, n, lam, opt);
    unscale(lam.data());
  } else if (ke == 3) {
    Eigen::Vector3d lam;
    r = solve_dual_newton<3>(ws.rows.data(), m, 3, n, lam, opt);
    unscale(lam.data());
  } else {
    Eigen::VectorXd lam;
    r = solve_dual_newton<Eigen::Dynamic>(ws.rows.data(), m, ke, n, lam, opt);
    unscale(lam.data());
  }
  return r;
}

}  // namespace detail

/// Solves the local EL problem for the rows of Q (n x k): maximises
/// sum log(n p_i) subject to sum p_i = 1 and sum p_i Q_i = 0.
inline ELSolution solve_lambda(const Eigen::MatrixXd& Q, const DualSolverOptions& opt = {}) {
  if (Q.rows() < 1 || Q.cols() < 1) throw std::invalid_argument("residual matrix is empty");
  if (!Q.allFinite()) throw std::invalid_argument("residual matrix has non-finite entries");
  const Eigen::Index n = Q.rows();
  const auto k = static_cast<int>(Q.cols());
  detail::DualWorkspace ws;
  std::size_t m = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (Q.row(i).isZero(0.0)) continue;
    for (int l = 0; l < k; ++l) ws.rows.push_back(Q(i, l));
    ++m;
  }
  ELSolution sol;
  sol.lambda = Eigen::VectorXd::Zero(k);
  const auto r = detail::solve_dual(ws, m, k, n, sol.lambda.data(), opt);
  sol.log_ratio = r.log_ratio;
  sol.status = m == 0 ? ELStatus::degenerate : r.status;
  sol.iterations = r.iterations;
  sol.weights = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  if (sol.status == ELStatus::converged) {
    for (Eigen::Index i = 0; i < n; ++i) {
      sol.weights(i) = 1.0 / (static_cast<double>(n) * (1.0 + sol.lambda.dot(Q.row(i).transpose())));
    }
  }
  return sol;
}

}  // namespace elgof
