#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "elgof/el_solver.hpp"
#include "elgof/errors.hpp"
#include "elgof/kernel.hpp"
#include "elgof/log.hpp"
#include "elgof/null_model.hpp"
#include "elgof/quadrature.hpp"
#include "elgof/sample.hpp"
#include "elgof/smoothing.hpp"

namespace elgof {

/// Kernel-weighted residuals Q_i(x) of every observation at one point.
struct LocalResidualSet {
  Eigen::MatrixXd Q;  ///< n x k
  std::vector<double> x;
  BandwidthVector h_vec;
};

inline LocalResidualSet local_residuals(const Sample& sample, const NullModelFit& fit,
                                        std::span<const double> x, const BandwidthVector& h_vec,
                                        const KernelSpec& spec = {}) {
  const Eigen::Index n = sample.n();
  const Eigen::Index k = sample.k();
  if (fit.fitted.rows() != n || fit.fitted.cols() != k) {
    throw std::invalid_argument("fitted values do not match the sample shape");
  }
  if (static_cast<Eigen::Index>(h_vec.k()) != k) {
    throw std::invalid_argument("bandwidth vector length does not match the response dimension");
  }
  LocalResidualSet out{Eigen::MatrixXd::Zero(n, k), std::vector<double>(x.begin(), x.end()), h_vec};
  std::vector<double> u(static_cast<std::size_t>(sample.d()));
  for (Eigen::Index l = 0; l < k; ++l) {
    const double hl = h_vec.h_l[static_cast<std::size_t>(l)];
    double m_tilde = 0.0;
    try {
      m_tilde = smooth_null_curve(fit.fitted.col(l), sample.X, x, hl, spec);
    } catch (const DegenerateWindow& e) {
      throw DegenerateWindow(e.point(), static_cast<int>(l));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < sample.d(); ++j) {
        u[static_cast<std::size_t>(j)] = x[static_cast<std::size_t>(j)] - sample.X(i, j);
      }
      const double w = kernel_eval(spec, u, hl);
      if (w != 0.0) out.Q(i, l) = w * (sample.Y(i, l) - m_tilde);
    }
  }
  return out;
}

inline ELSolution solve_lambda(const LocalResidualSet& set, const DualSolverOptions& opt = {}) {
  return solve_lambda(set.Q, opt);
}

/// Integrated EL statistic for one bandwidth vector.
struct GlobalStatistic {
  double lambda_n = 0.0;      ///< Lambda_n(h)
  double standardized = 0.0;  ///< h^{-d/2} (Lambda_n - k)
  double h = 0.0;
  QuadratureGrid grid;
  /// Log ratio at each node (flat order); NaN where the window was empty.
  std::vector<double> per_node_logratio;
  /// Quadrature weight times pi, renormalised over retained nodes.
  std::vector<double> node_weight;
  std::size_t dropped_nodes = 0;
  std::size_t capped_nodes = 0;
};

/// Evaluates Lambda_n for fixed covariates, bandwidths and quadrature. Kernel
/// weights at every node are tabulated once, so repeated evaluation with
/// new responses (bootstrap replicates) only redoes the local EL solves.
/// `evaluate` is const and safe to call concurrently.
class StatisticEvaluator {
 public:
  StatisticEvaluator(Eigen::MatrixXd X, BandwidthVector h_vec, KernelSpec spec, WeightFunction pi,
                     QuadratureGrid grid)
      : X_(std::move(X)), h_(std::move(h_vec)), spec_(spec), pi_(std::move(pi)), grid_(std::move(grid)) {
    pi_.validate();
    h_.validate();
    const Eigen::Index d = X_.cols();
    if (static_cast<Eigen::Index>(pi_.dim()) != d || static_cast<Eigen::Index>(grid_.dim()) != d) {
      throw std::invalid_argument("weight function and quadrature must match the covariate dimension");
    }
    for (std::size_t j = 0; j < grid_.dim(); ++j) {
      for (double v : grid_.axes[j].nodes) {
        if (v < pi_.lo[j] || v > pi_.hi[j]) throw InvalidWeight("quadrature node outside the weight support");
      }
    }
    const auto n = static_cast<std::size_t>(X_.rows());
    tables_.resize(h_.k());
    for (std::size_t l = 0; l < h_.k(); ++l) {
      const double hl = h_.h_l[l];
      tables_[l].resize(grid_.dim());
      for (std::size_t j = 0; j < grid_.dim(); ++j) {
        const auto& nodes = grid_.axes[j].nodes;
        auto& t = tables_[l][j];
        t.assign(nodes.size() * n, 0.0);
        for (std::size_t g = 0; g < nodes.size(); ++g) {
          for (std::size_t i = 0; i < n; ++i) {
            const double u = nodes[g] - X_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (std::abs(u) <= hl) t[g * n + i] = spec_(u / hl) / hl;
          }
        }
      }
    }
    candidates_.resize(grid_.axes[0].nodes.size());
    for (std::size_t g = 0; g < candidates_.size(); ++g) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t l = 0; l < h_.k(); ++l) {
          if (tables_[l][0][g * n + i] != 0.0) {
            candidates_[g].push_back(static_cast<int>(i));
            break;
          }
        }
      }
    }
  }

  const BandwidthVector& bandwidths() const noexcept { return h_; }
  const QuadratureGrid& grid() const noexcept { return grid_; }

  GlobalStatistic evaluate(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& fitted,
                           bool keep_nodes = true) const {
    const Eigen::Index n = X_.rows();
    const auto k = static_cast<int>(h_.k());
    if (Y.rows() != n || fitted.rows() != n || Y.cols() != k || fitted.cols() != k) {
      throw std::invalid_argument("responses and fitted values must be n x k");
    }
    const std::size_t d = grid_.dim();
    const std::size_t total = grid_.size();
    const auto nn = static_cast<std::size_t>(n);

    GlobalStatistic out;
    out.h = h_.h;
    if (keep_nodes) {
      out.grid = grid_;
      out.per_node_logratio.assign(total, std::numeric_limits<double>::quiet_NaN());
      out.node_weight.assign(total, 0.0);
    }

    detail::DualWorkspace ws;
    std::vector<double> w(static_cast<std::size_t>(k));
    std::vector<double> sw(static_cast<std::size_t>(k)), swf(static_cast<std::size_t>(k));
    std::vector<double> m_tilde(static_cast<std::size_t>(k));
    std::vector<double> lambda(static_cast<std::size_t>(k));
    std::vector<int> active;
    std::vector<double> active_w;
    std::vector<std::size_t> idx(d, 0);

    const double height = pi_.height();
    double sum_all = 0.0;
    double sum_valid = 0.0;
    double acc = 0.0;
    for (std::size_t flat = 0; flat < total; ++flat) {
      grid_.unflatten(flat, idx);
      double qw = height;
      for (std::size_t j = 0; j < d; ++j) qw *= grid_.axes[j].weights[idx[j]];
      sum_all += qw;

      std::fill(sw.begin(), sw.end(), 0.0);
      std::fill(swf.begin(), swf.end(), 0.0);
      active.clear();
      active_w.clear();
      for (int i : candidates_[idx[0]]) {
        const auto ii = static_cast<std::size_t>(i);
        bool any = false;
        for (int l = 0; l < k; ++l) {
          const auto& tl = tables_[static_cast<std::size_t>(l)];
          double v = tl[0][idx[0] * nn + ii];
          for (std::size_t j = 1; j < d && v != 0.0; ++j) v *= tl[j][idx[j] * nn + ii];
          w[static_cast<std::size_t>(l)] = v;
          any |= v != 0.0;
        }
        if (!any) continue;
        active.push_back(i);
        for (int l = 0; l < k; ++l) {
          const double v = w[static_cast<std::size_t>(l)];
          active_w.push_back(v);
          sw[static_cast<std::size_t>(l)] += v;
          swf[static_cast<std::size_t>(l)] += v * fitted(i, l);
        }
      }
      bool degenerate = false;
      for (int l = 0; l < k; ++l) {
        if (sw[static_cast<std::size_t>(l)] == 0.0) {
          degenerate = true;
          break;
        }
        m_tilde[static_cast<std::size_t>(l)] = swf[static_cast<std::size_t>(l)] / sw[static_cast<std::size_t>(l)];
      }
      if (degenerate) {
        ++out.dropped_nodes;
        continue;
      }
      ws.rows.resize(active.size() * static_cast<std::size_t>(k));
      std::size_t m = 0;
      for (std::size_t a = 0; a < active.size(); ++a) {
        const int i = active[a];
        bool nonzero = false;
        for (int l = 0; l < k; ++l) {
          const double q = active_w[a * static_cast<std::size_t>(k) + static_cast<std::size_t>(l)] *
                           (Y(i, l) - m_tilde[static_cast<std::size_t>(l)]);
          ws.rows[m * static_cast<std::size_t>(k) + static_cast<std::size_t>(l)] = q;
          nonzero |= q != 0.0;
        }
        if (nonzero) ++m;
      }
      const auto r = detail::solve_dual(ws, m, k, n, lambda.data());
      if (r.status == ELStatus::capped_infeasible) ++out.capped_nodes;
      sum_valid += qw;
      acc += qw * r.log_ratio;
      if (keep_nodes) {
        out.per_node_logratio[flat] = r.log_ratio;
        out.node_weight[flat] = qw;
      }
    }
    if (out.dropped_nodes * 10 > total) {
      std::ostringstream os;
      os << out.dropped_nodes << " of " << total << " quadrature nodes have empty kernel windows";
      throw UnreliableIntegration(os.str());
    }
    const double renorm = out.dropped_nodes ? sum_all / sum_valid : 1.0;
    if (out.dropped_nodes) {
      std::ostringstream os;
      os << "dropped " << out.dropped_nodes << " of " << total
         << " quadrature nodes with empty kernel windows (h=" << h_.h << ")";
      log_warning(os.str());
      if (keep_nodes) {
        for (double& v : out.node_weight) v *= renorm;
      }
    }
    out.lambda_n = acc * renorm;
    out.standardized = std::pow(h_.h, -0.5 * static_cast<double>(d)) * (out.lambda_n - static_cast<double>(k));
    return out;
  }

 private:
  Eigen::MatrixXd X_;
  BandwidthVector h_;
  KernelSpec spec_;
  WeightFunction pi_;
  QuadratureGrid grid_;
  /// tables_[l][j][g * n + i] = k((node_g - X_ij) / h_l) / h_l
  std::vector<std::vector<std::vector<double>>> tables_;
  /// observations inside some window along axis 0, per axis-0 node
  std::vector<std::vector<int>> candidates_;
};

/// Lambda_n(h) for a fitted null model. Rows are put in canonical order
/// first so the value depends only on the multiset of observations.
inline GlobalStatistic global_statistic(const Sample& sample, const NullModelFit& fit,
                                        const BandwidthVector& h_vec, const KernelSpec& spec,
                                        const WeightFunction& pi, const QuadratureGrid& grid) {
  sample.validate();
  if (fit.fitted.rows() != sample.n() || fit.fitted.cols() != sample.k()) {
    throw std::invalid_argument("fitted values do not match the sample shape");
  }
  const auto order = canonical_order(sample, &fit.fitted);
  const Sample s = permute_rows(sample, order);
  const Eigen::MatrixXd f = permute_rows(fit.fitted, order);
  StatisticEvaluator ev(s.X, h_vec, spec, pi, grid);
  return ev.evaluate(s.Y, f);
}

inline GlobalStatistic global_statistic(const Sample& sample, const NullModelFit& fit,
                                        const BandwidthVector& h_vec, const KernelSpec& spec,
                                        const WeightFunction& pi, const QuadraturePolicy& policy = {}) {
  return global_statistic(sample, fit, h_vec, spec, pi, policy.build(pi, sample.X, h_vec, spec));
}

/// Maximum of the standardized statistic over a bandwidth grid.
struct SupStatistic {
  double value = -std::numeric_limits<double>::infinity();
  std::size_t argmax = 0;
  BandwidthVector argmax_h;
  std::vector<GlobalStatistic> per_h;
};

/// Evaluators for each grid bandwidth, sharing the covariates.
inline std::vector<StatisticEvaluator> make_evaluators(const Eigen::MatrixXd& X,
                                                       const std::vector<BandwidthVector>& h_grid,
                                                       const KernelSpec& spec, const WeightFunction& pi,
                                                       const QuadraturePolicy& policy) {
  if (h_grid.empty()) throw std::invalid_argument("bandwidth grid is empty");
  std::vector<StatisticEvaluator> out;
  out.reserve(h_grid.size());
  for (const auto& h : h_grid) out.emplace_back(X, h, spec, pi, policy.build(pi, X, h, spec));
  return out;
}

inline SupStatistic sup_over(const std::vector<StatisticEvaluator>& evaluators, const Eigen::MatrixXd& Y,
                             const Eigen::MatrixXd& fitted, bool keep_nodes = false) {
  SupStatistic out;
  for (std::size_t i = 0; i < evaluators.size(); ++i) {
    auto g = evaluators[i].evaluate(Y, fitted, keep_nodes);
    if (g.standardized > out.value) {
      out.value = g.standardized;
      out.argmax = i;
      out.argmax_h = evaluators[i].bandwidths();
    }
    out.per_h.push_back(std::move(g));
  }
  return out;
}

inline SupStatistic sup_statistic(const Sample& sample, const NullModelFit& fit,
                                  const std::vector<BandwidthVector>& h_grid, const KernelSpec& spec,
                                  const WeightFunction& pi, const QuadraturePolicy& policy = {}) {
  sample.validate();
  if (fit.fitted.rows() != sample.n() || fit.fitted.cols() != sample.k()) {
    throw std::invalid_argument("fitted values do not match the sample shape");
  }
  const auto order = canonical_order(sample, &fit.fitted);
  const Sample s = permute_rows(sample, order);
  const Eigen::MatrixXd f = permute_rows(fit.fitted, order);
  return sup_over(make_evaluators(s.X, h_grid, spec, pi, policy), s.Y, f, true);
}

}  // namespace elgof
