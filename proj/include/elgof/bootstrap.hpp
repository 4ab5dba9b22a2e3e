#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "elgof/errors.hpp"
#include "elgof/kernel.hpp"
#include "elgof/log.hpp"
#include "elgof/models.hpp"
#include "elgof/null_model.hpp"
#include "elgof/parallel.hpp"
#include "elgof/quadrature.hpp"
#include "elgof/rng.hpp"
#include "elgof/sample.hpp"
#include "elgof/smoothing.hpp"
#include "elgof/statistic.hpp"

namespace elgof {

enum class Multiplier { rademacher, mammen };

inline const char* to_string(Multiplier m) { return m == Multiplier::rademacher ? "rademacher" : "mammen"; }

inline Multiplier multiplier_from_string(const std::string& s) {
  if (s == "rademacher") return Multiplier::rademacher;
  if (s == "mammen") return Multiplier::mammen;
  throw std::invalid_argument("unknown multiplier '" + s + "'");
}

struct BootstrapConfig {
  std::size_t N = 199;
  Multiplier multiplier = Multiplier::rademacher;
  double alpha = 0.05;
  std::uint64_t seed = 1;

  void validate() const {
    if (N < 1) throw std::invalid_argument("bootstrap count must be at least 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  }
};

/// n x k matrix of i.i.d. mean-zero, unit-variance multipliers for replicate
/// `rep`. Filled row by row from the replicate's own stream.
inline Eigen::MatrixXd wild_multipliers(Eigen::Index n, Eigen::Index k, const BootstrapConfig& cfg,
                                        std::uint64_t rep) {
  if (n < 1 || k < 1) throw std::invalid_argument("multiplier matrix needs n, k >= 1");
  auto eng = make_stream(cfg.seed, StreamTag::bootstrap, rep);
  Eigen::MatrixXd G(n, k);
  const double s5 = std::sqrt(5.0);
  const double mammen_lo = -(s5 - 1.0) / 2.0;
  const double mammen_hi = (s5 + 1.0) / 2.0;
  const double mammen_p = (s5 + 1.0) / (2.0 * s5);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index l = 0; l < k; ++l) {
      if (cfg.multiplier == Multiplier::rademacher) {
        G(i, l) = (eng() >> 63) ? 1.0 : -1.0;
      } else {
        G(i, l) = uniform01(eng) < mammen_p ? mammen_lo : mammen_hi;
      }
    }
  }
  return G;
}

struct BootstrapResult {
  std::vector<double> xi_star;
  double q_hat = 0.0;
  double p_value = 1.0;
  bool reject = false;
};

/// Upper-alpha quantile of the bootstrap draws (the ceil(N(1-alpha))-th
/// smallest), the bootstrap p-value and the decision.
inline BootstrapResult calibrate(std::vector<double> xi_star, double observed, double alpha) {
  if (xi_star.empty()) throw std::invalid_argument("no bootstrap draws to calibrate against");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const std::size_t N = xi_star.size();
  std::vector<double> sorted = xi_star;
  std::sort(sorted.begin(), sorted.end());
  auto rank = static_cast<std::size_t>(std::ceil(static_cast<double>(N) * (1.0 - alpha) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, N);
  BootstrapResult r;
  r.q_hat = sorted[rank - 1];
  const auto exceed = std::count_if(xi_star.begin(), xi_star.end(), [&](double v) { return v >= observed; });
  r.p_value = (1.0 + static_cast<double>(exceed)) / (static_cast<double>(N) + 1.0);
  r.reject = observed > r.q_hat;
  r.xi_star = std::move(xi_star);
  return r;
}

/// Fully nonparametric residuals Y - m_hat(X), column l smoothed with
/// bandwidth h[l].
inline Eigen::MatrixXd nw_residuals(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const std::vector<double>& h,
                                    const KernelSpec& spec = {}) {
  if (static_cast<Eigen::Index>(h.size()) != Y.cols()) throw std::invalid_argument("one bandwidth per column");
  Eigen::MatrixXd E(Y.rows(), Y.cols());
  std::vector<double> xi(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index l = 0; l < Y.cols(); ++l) {
    const Eigen::VectorXd y = Y.col(l);
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
      for (Eigen::Index j = 0; j < X.cols(); ++j) xi[static_cast<std::size_t>(j)] = X(i, j);
      E(i, l) = Y(i, l) - nw_estimate(X, y, xi, h[static_cast<std::size_t>(l)], spec);
    }
  }
  return E;
}

/// Per-column residual bandwidths by leave-one-out cross-validation over
/// the candidates of each column.
inline std::vector<double> residual_bandwidths(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                               const std::vector<std::vector<double>>& candidates,
                                               const KernelSpec& spec = {}) {
  std::vector<double> out;
  for (Eigen::Index l = 0; l < Y.cols(); ++l) {
    out.push_back(loo_cv_bandwidth(X, Y.col(l), spec, candidates[static_cast<std::size_t>(l)]));
  }
  return out;
}

/// How resamples are built for derived responses such as (Z, Z^2).
enum class DerivedBootstrap {
  vector,        ///< wild bootstrap on the full response vector
  regenerate,    ///< wild bootstrap on Z, response rebuilt from Z*
  standardized,  ///< as regenerate, residuals of Z rescaled to the null variance
};

inline const char* to_string(DerivedBootstrap m) {
  switch (m) {
    case DerivedBootstrap::vector: return "vector";
    case DerivedBootstrap::regenerate: return "regenerate";
    case DerivedBootstrap::standardized: return "standardized";
  }
  return "?";
}

inline DerivedBootstrap derived_bootstrap_from_string(const std::string& s) {
  for (auto m : {DerivedBootstrap::vector, DerivedBootstrap::regenerate, DerivedBootstrap::standardized}) {
    if (s == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown derived bootstrap mode '" + s + "'");
}

/// Residuals divided by a local scale (NW smooth of the squared residuals at
/// the column's bandwidth), normalised to unit mean square, then multiplied
/// by the null standard deviation of the column.
inline Eigen::MatrixXd standardize_residuals(const Eigen::MatrixXd& X, const Eigen::MatrixXd& E,
                                             const std::vector<double>& h, const Eigen::VectorXd& scale,
                                             const KernelSpec& spec = {}) {
  if (scale.size() != E.cols() || static_cast<Eigen::Index>(h.size()) != E.cols()) {
    throw std::invalid_argument("one scale and bandwidth per residual column");
  }
  Eigen::MatrixXd out(E.rows(), E.cols());
  std::vector<double> xi(static_cast<std::size_t>(X.cols()));
  for (Eigen::Index l = 0; l < E.cols(); ++l) {
    const Eigen::VectorXd e2 = E.col(l).array().square();
    for (Eigen::Index i = 0; i < E.rows(); ++i) {
      for (Eigen::Index j = 0; j < X.cols(); ++j) xi[static_cast<std::size_t>(j)] = X(i, j);
      const double s2 = nw_estimate(X, e2, xi, h[static_cast<std::size_t>(l)], spec);
      out(i, l) = s2 > 0.0 ? E(i, l) / std::sqrt(s2) : 0.0;
    }
    const double ms = out.col(l).squaredNorm() / static_cast<double>(E.rows());
    if (ms > 0.0) out.col(l) *= scale(l) / std::sqrt(ms);
  }
  if (!out.allFinite()) throw FitFailure("non-finite standardized residuals");
  return out;
}

/// Bootstrap response Y* for replicate `rep`. With a derived response in
/// regenerate or standardized mode `residuals_hat` are residuals of Z.
inline Eigen::MatrixXd bootstrap_response(const NullModelFit& fit, const Eigen::MatrixXd& residuals_hat,
                                          const BootstrapConfig& cfg, std::uint64_t rep,
                                          DerivedBootstrap mode = DerivedBootstrap::vector) {
  const Eigen::MatrixXd G = wild_multipliers(residuals_hat.rows(), residuals_hat.cols(), cfg, rep);
  if (mode != DerivedBootstrap::vector && fit.derived) {
    const Eigen::MatrixXd Z = fit.derived->base_fitted + residuals_hat.cwiseProduct(G);
    return fit.derived->to_response(Z);
  }
  if (residuals_hat.rows() != fit.fitted.rows() || residuals_hat.cols() != fit.fitted.cols()) {
    throw std::invalid_argument("residuals do not match the fitted values");
  }
  return fit.fitted + residuals_hat.cwiseProduct(G);
}

/// Sup statistic xi* of one bootstrap replicate, with the null re-estimated
/// on the resample and the same bandwidths as the observed statistic.
inline double bootstrap_statistic(const Sample& sample, const NullModelFit& fit, const Eigen::MatrixXd& residuals_hat,
                                  const std::vector<StatisticEvaluator>& evaluators, const BootstrapConfig& cfg,
                                  std::uint64_t rep, DerivedBootstrap mode = DerivedBootstrap::vector) {
  if (!fit.refit) throw std::invalid_argument("null model fit has no refit procedure");
  Sample star{sample.X, bootstrap_response(fit, residuals_hat, cfg, rep, mode)};
  const NullModelFit refit = fit.refit(star);
  return sup_over(evaluators, star.Y, refit.fitted).value;
}

inline double bootstrap_statistic(const Sample& sample, const NullModelFit& fit, const Eigen::MatrixXd& residuals_hat,
                                  const std::vector<BandwidthVector>& h_grid, const KernelSpec& spec,
                                  const WeightFunction& pi, const QuadraturePolicy& quad, const BootstrapConfig& cfg,
                                  std::uint64_t rep, DerivedBootstrap mode = DerivedBootstrap::vector) {
  return bootstrap_statistic(sample, fit, residuals_hat, make_evaluators(sample.X, h_grid, spec, pi, quad), cfg, rep,
                             mode);
}

/// Baseline bandwidths equally spaced on [h0, h1], endpoints included.
inline std::vector<double> linear_bandwidth_grid(double h0, double h1, std::size_t count) {
  if (!(h0 > 0.0) || !(h1 >= h0)) throw std::invalid_argument("need 0 < h0 <= h1");
  if (count == 0) throw std::invalid_argument("bandwidth grid needs at least one point");
  std::vector<double> g;
  for (std::size_t i = 0; i < count; ++i) {
    g.push_back(count == 1 ? h0 : h0 + (h1 - h0) * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  return g;
}

struct TestConfig {
  BootstrapConfig boot{};
  std::vector<double> h_grid{0.22, 0.24, 0.26, 0.28};
  std::vector<double> beta{};  ///< h_l / h per response; empty = all ones
  KernelSpec kernel{};
  std::optional<WeightFunction> pi{};  ///< default: normalised box [0.1, 0.9]^d
  QuadraturePolicy quadrature{};
  FitOptions fit{};
  DerivedBootstrap derived_mode = DerivedBootstrap::standardized;
  double max_failure_rate = 0.05;
  std::size_t workers = 1;

  void validate() const {
    boot.validate();
    if (h_grid.empty()) throw std::invalid_argument("bandwidth grid is empty");
    for (double h : h_grid) {
      if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("grid bandwidths must be positive");
    }
    if (pi) pi->validate();
  }
};

struct TestOutcome {
  Sample sample;  ///< canonical row order; (Z, vec(ZZ')) for mean-variance
  NullModelFit fit;
  std::vector<BandwidthVector> h_grid;
  SupStatistic observed;
  std::vector<double> residual_bandwidths;
  BootstrapResult boot;
  std::size_t failed_replicates = 0;

  double statistic() const { return observed.value; }
};

inline std::vector<BandwidthVector> bandwidth_vectors(const std::vector<double>& grid, const std::vector<double>& beta,
                                                      Eigen::Index k) {
  std::vector<double> ratios = beta;
  if (ratios.empty()) ratios.assign(static_cast<std::size_t>(k), 1.0);
  if (static_cast<Eigen::Index>(ratios.size()) != k) {
    throw std::invalid_argument("bandwidth ratio count does not match the response dimension");
  }
  std::vector<BandwidthVector> out;
  for (double h : grid) {
    out.push_back(BandwidthVector::from_ratios(h, ratios));
    out.back().validate();
  }
  return out;
}

/// Full test: fit the null, compute the sup statistic over the bandwidth
/// grid and calibrate it with N wild-bootstrap replicates.
inline TestOutcome run_test(const Sample& input, ModelKind kind, const TestConfig& cfg) {
  cfg.validate();
  input.validate();
  const Sample sample = permute_rows(input, canonical_order(input));
  PreparedNull prepared = fit_null(sample, kind, cfg.fit);

  TestOutcome out;
  out.sample = std::move(prepared.sample);
  out.fit = std::move(prepared.fit);
  const Sample& s = out.sample;
  const WeightFunction pi = cfg.pi ? *cfg.pi : WeightFunction::box(static_cast<std::size_t>(s.d()), 0.1, 0.9);
  if (static_cast<Eigen::Index>(pi.dim()) != s.d()) {
    throw InvalidWeight("weight function dimension does not match covariates");
  }
  out.h_grid = bandwidth_vectors(cfg.h_grid, cfg.beta, s.k());
  if (out.fit.nuisance_bandwidth > 0.0) {
    check_bandwidth_rates(out.h_grid[out.h_grid.size() / 2].h, out.fit.nuisance_bandwidth, s.d(), s.n());
  }

  const auto evaluators = make_evaluators(s.X, out.h_grid, cfg.kernel, pi, cfg.quadrature);
  out.observed = sup_over(evaluators, s.Y, out.fit.fitted, true);

  const bool regenerate = cfg.derived_mode != DerivedBootstrap::vector && out.fit.derived.has_value();
  const Eigen::MatrixXd& target = regenerate ? out.fit.derived->base_response : s.Y;
  std::vector<std::vector<double>> candidates(static_cast<std::size_t>(target.cols()));
  for (Eigen::Index l = 0; l < target.cols(); ++l) {
    const std::size_t src = regenerate ? 0 : static_cast<std::size_t>(l);
    for (const auto& h : out.h_grid) candidates[static_cast<std::size_t>(l)].push_back(h.h_l[src]);
  }
  out.residual_bandwidths = residual_bandwidths(s.X, target, candidates, cfg.kernel);
  Eigen::MatrixXd residuals = nw_residuals(s.X, target, out.residual_bandwidths, cfg.kernel);
  if (regenerate && cfg.derived_mode == DerivedBootstrap::standardized) {
    residuals = standardize_residuals(s.X, residuals, out.residual_bandwidths, out.fit.derived->base_scale, cfg.kernel);
  }

  const std::size_t N = cfg.boot.N;
  std::vector<double> slots(N, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> errors(N);
  parallel_for(N, cfg.workers, [&](std::size_t r) {
    try {
      slots[r] = bootstrap_statistic(s, out.fit, residuals, evaluators, cfg.boot, r, cfg.derived_mode);
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  });
  std::vector<double> xi;
  xi.reserve(N);
  for (std::size_t r = 0; r < N; ++r) {
    if (errors[r].empty() && std::isfinite(slots[r])) {
      xi.push_back(slots[r]);
    } else {
      ++out.failed_replicates;
      log_warning("bootstrap replicate " + std::to_string(r) + " dropped: " +
                  (errors[r].empty() ? std::string("non-finite statistic") : errors[r]));
    }
  }
  if (static_cast<double>(out.failed_replicates) > cfg.max_failure_rate * static_cast<double>(N) || xi.empty()) {
    std::ostringstream os;
    os << out.failed_replicates << " of " << N << " bootstrap replicates failed";
    throw CalibrationUnreliable(os.str());
  }
  out.boot = calibrate(std::move(xi), out.observed.value, cfg.boot.alpha);
  return out;
}

}  // namespace elgof
