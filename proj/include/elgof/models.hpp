#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "elgof/errors.hpp"
#include "elgof/kernel.hpp"
#include "elgof/log.hpp"
#include "elgof/null_model.hpp"
#include "elgof/sample.hpp"
#include "elgof/smoothing.hpp"

namespace elgof {

enum class ModelKind { linear, partially_linear, single_index, variable_selection, mean_variance };

inline std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::linear: return "linear";
    case ModelKind::partially_linear: return "plm";
    case ModelKind::single_index: return "single-index";
    case ModelKind::variable_selection: return "varsel";
    case ModelKind::mean_variance: return "mean-variance";
  }
  return "?";
}

inline ModelKind model_kind_from_string(std::string_view name) {
  for (auto kind : {ModelKind::linear, ModelKind::partially_linear, ModelKind::single_index,
                    ModelKind::variable_selection, ModelKind::mean_variance}) {
    if (to_string(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown model '" + std::string(name) + "'");
}

namespace detail {

inline void require_scalar_response(const Sample& s, const char* what) {
  s.validate();
  if (s.k() != 1) throw std::invalid_argument(std::string(what) + " needs a univariate response");
}

/// Row-normalised smoother matrix S_ij = L((x_i - x_j)/b) / sum_t L((x_i - x_t)/b)
/// over the columns of Z.
inline Eigen::MatrixXd smoother_matrix(const Eigen::MatrixXd& Z, double b, const KernelSpec& spec) {
  if (!(b > 0.0) || !std::isfinite(b)) throw std::invalid_argument("nuisance bandwidth must be positive");
  const Eigen::Index n = Z.rows();
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
  std::vector<double> zi(static_cast<std::size_t>(Z.cols()));
  std::vector<Eigen::Index> empty;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < Z.cols(); ++j) zi[static_cast<std::size_t>(j)] = Z(i, j);
    double den = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
      const double w = product_weight(spec, Z, t, zi, b);
      S(i, t) = w;
      den += w;
    }
    if (den == 0.0) {
      empty.push_back(i);
      continue;
    }
    S.row(i) /= den;
  }
  if (!empty.empty()) {
    std::ostringstream os;
    os << "empty nuisance windows at observations";
    for (auto i : empty) os << ' ' << i;
    throw FitFailure(os.str());
  }
  return S;
}

/// NW evaluation of `values` at a new point from covariates Z.
inline double smooth_at(const Eigen::MatrixXd& Z, const Eigen::VectorXd& values, const Eigen::VectorXd& u,
                        double b, const KernelSpec& spec) {
  return nw_estimate(Z, values, std::span<const double>(u.data(), static_cast<std::size_t>(u.size())), b, spec);
}

inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X, Eigen::Index cols) {
  Eigen::MatrixXd D(X.rows(), cols + 1);
  D.col(0).setOnes();
  D.rightCols(cols) = X.leftCols(cols);
  return D;
}

}  // namespace detail

/// Ordinary least squares of Y on (1, X).
inline NullModelFit fit_parametric_linear(const Sample& sample) {
  detail::require_scalar_response(sample, "linear model");
  const Eigen::MatrixXd D = detail::with_intercept(sample.X, sample.d());
  auto qr = std::make_shared<Eigen::ColPivHouseholderQR<Eigen::MatrixXd>>(D);
  if (qr->rank() < D.cols()) throw RankDeficiency("linear design is rank deficient");
  auto design = std::make_shared<const Eigen::MatrixXd>(D);
  auto X = std::make_shared<const Eigen::MatrixXd>(sample.X);

  struct Builder {
    std::shared_ptr<Eigen::ColPivHouseholderQR<Eigen::MatrixXd>> qr;
    std::shared_ptr<const Eigen::MatrixXd> design, X;
    NullModelFit operator()(const Sample& s) const {
      if (s.X.rows() != X->rows() || s.X != *X) return fit_parametric_linear(s);
      detail::require_scalar_response(s, "linear model");
      NullModelFit f;
      f.model = "linear";
      f.theta = qr->solve(s.Y.col(0));
      f.fitted = *design * f.theta;
      f.refit = *this;
      return f;
    }
  };
  return Builder{qr, design, X}(sample);
}

/// Partially linear model Y = theta_0 + theta' X_{1..d-1} + g(X_d) + e, with g
/// a kernel smooth recentred to have sample mean zero. Because g_hat is affine
/// in theta, the profile least-squares problem is ordinary least squares of
/// the partialled-out response on the partialled-out design.
inline NullModelFit fit_partially_linear(const Sample& sample, double b, const KernelSpec& spec = {}) {
  detail::require_scalar_response(sample, "partially linear model");
  const Eigen::Index n = sample.n();
  const Eigen::Index d = sample.d();
  if (d < 2) throw std::invalid_argument("partially linear model needs d > 1");
  const Eigen::MatrixXd Xd = sample.X.col(d - 1);
  const Eigen::MatrixXd S = detail::smoother_matrix(Xd, b, spec);
  // A = I - C S with C the centring projector
  Eigen::MatrixXd CS = S;
  CS.rowwise() -= S.colwise().mean();
  const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - CS;
  const Eigen::MatrixXd D = detail::with_intercept(sample.X, d - 1);
  auto qr = std::make_shared<Eigen::ColPivHouseholderQR<Eigen::MatrixXd>>(A * D);
  if (qr->rank() < D.cols()) throw RankDeficiency("partialled-out design is rank deficient");

  struct State {
    Eigen::MatrixXd X, Xd, S, A, D;
    double b;
    KernelSpec spec;
  };
  auto state = std::make_shared<const State>(State{sample.X, Xd, S, A, D, b, spec});

  struct Builder {
    std::shared_ptr<const State> st;
    std::shared_ptr<Eigen::ColPivHouseholderQR<Eigen::MatrixXd>> qr;
    NullModelFit operator()(const Sample& s) const {
      if (s.X.rows() != st->X.rows() || s.X != st->X) return fit_partially_linear(s, st->b, st->spec);
      detail::require_scalar_response(s, "partially linear model");
      const Eigen::VectorXd y = s.Y.col(0);
      NullModelFit f;
      f.model = "plm";
      f.nuisance_bandwidth = st->b;
      f.theta = qr->solve(st->A * y);
      const Eigen::VectorXd partial = y - st->D * f.theta;
      const Eigen::VectorXd resid = st->A * partial;
      f.fitted = y - resid;
      // g_hat(u) = h_hat(u) - mean_i h_hat(X_id)
      auto st_local = st;
      const double centre = (st->S * partial).mean();
      auto part = std::make_shared<const Eigen::VectorXd>(partial);
      f.g_hat = [st_local, part, centre](const Eigen::VectorXd& u) {
        Eigen::VectorXd out(1);
        out(0) = detail::smooth_at(st_local->Xd, *part, u, st_local->b, st_local->spec) - centre;
        return out;
      };
      f.refit = *this;
      return f;
    }
  };
  return Builder{state, qr}(sample);
}

struct SingleIndexOptions {
  int restarts = 5;
  std::uint64_t seed = 20090901;
  int max_evaluations = 4000;
  double tolerance = 1e-10;
};

namespace detail {

/// Unit vector from d-1 spherical angles.
inline Eigen::VectorXd sphere_point(const Eigen::VectorXd& angles) {
  const Eigen::Index d = angles.size() + 1;
  Eigen::VectorXd th(d);
  double s = 1.0;
  for (Eigen::Index j = 0; j < d - 1; ++j) {
    th(j) = s * std::cos(angles(j));
    s *= std::sin(angles(j));
  }
  th(d - 1) = s;
  return th;
}

inline Eigen::VectorXd sphere_angles(const Eigen::VectorXd& th) {
  const Eigen::Index d = th.size();
  Eigen::VectorXd a(d - 1);
  for (Eigen::Index j = 0; j < d - 1; ++j) {
    const double tail = th.tail(d - j - 1).norm();
    a(j) = std::atan2(tail, th(j));
  }
  if (d >= 2 && th(d - 1) < 0.0) a(d - 2) = -a(d - 2);
  return a;
}

/// First nonzero coordinate positive.
inline Eigen::VectorXd canonical_sign(Eigen::VectorXd th) {
  for (Eigen::Index j = 0; j < th.size(); ++j) {
    if (th(j) != 0.0) {
      if (th(j) < 0.0) th = -th;
      break;
    }
  }
  return th;
}

/// Residual sum of squares of the leave-in NW smooth of y on the index X theta.
inline double single_index_rss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                               double b, const KernelSpec& spec) {
  const Eigen::VectorXd u = X * theta;
  const Eigen::Index n = u.size();
  double rss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
      const double z = u(i) - u(t);
      if (std::abs(z) > b) continue;
      const double w = spec(z / b);
      num += w * y(t);
      den += w;
    }
    const double e = y(i) - num / den;
    rss += e * e;
  }
  return rss;
}

struct SimplexResult {
  Eigen::VectorXd x;
  double value = 0.0;
  bool converged = false;
};

/// Nelder-Mead simplex minimisation.
template <class F>
SimplexResult nelder_mead(F&& f, Eigen::VectorXd start, double step, int max_evaluations, double tol) {
  const Eigen::Index m = start.size();
  std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(m + 1), start);
  std::vector<double> val(static_cast<std::size_t>(m + 1));
  for (Eigen::Index j = 0; j < m; ++j) pts[static_cast<std::size_t>(j + 1)](j) += step;
  int evals = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    val[i] = f(pts[i]);
    ++evals;
  }
  std::vector<std::size_t> ord(pts.size());
  SimplexResult out;
  while (evals < max_evaluations) {
    for (std::size_t i = 0; i < ord.size(); ++i) ord[i] = i;
    std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return val[a] < val[b]; });
    const std::size_t best = ord.front(), worst = ord.back(), second = ord[ord.size() - 2];
    double size = 0.0;
    for (const auto& p : pts) size = std::max(size, (p - pts[best]).cwiseAbs().maxCoeff());
    if (val[worst] - val[best] <= tol * (1.0 + std::abs(val[best])) && size <= 1e-7) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(m);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i != worst) centroid += pts[i];
    }
    centroid /= static_cast<double>(m);
    const Eigen::VectorXd refl = centroid + (centroid - pts[worst]);
    const double fr = f(refl);
    ++evals;
    if (fr < val[best]) {
      const Eigen::VectorXd exp = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = f(exp);
      ++evals;
      if (fe < fr) {
        pts[worst] = exp;
        val[worst] = fe;
      } else {
        pts[worst] = refl;
        val[worst] = fr;
      }
    } else if (fr < val[second]) {
      pts[worst] = refl;
      val[worst] = fr;
    } else {
      const bool outside = fr < val[worst];
      const Eigen::VectorXd con =
          outside ? Eigen::VectorXd(centroid + 0.5 * (refl - centroid))
                  : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
      const double fc = f(con);
      ++evals;
      if (fc < (outside ? fr : val[worst])) {
        pts[worst] = con;
        val[worst] = fc;
      } else {
        for (std::size_t i = 0; i < pts.size(); ++i) {
          if (i == best) continue;
          pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
          val[i] = f(pts[i]);
          ++evals;
        }
      }
    }
  }
  const auto it = std::min_element(val.begin(), val.end());
  out.x = pts[static_cast<std::size_t>(it - val.begin())];
  out.value = *it;
  return out;
}

}  // namespace detail

/// Single-index model Y = g(theta' X) + e with |theta| = 1. theta_hat
/// minimises the residual sum of squares of the NW smooth of Y on theta' X;
/// the search runs over spherical angles from the least-squares direction
/// and `restarts` random starts.
inline NullModelFit fit_single_index(const Sample& sample, double b, const KernelSpec& spec = {},
                                     const SingleIndexOptions& opt = {}) {
  detail::require_scalar_response(sample, "single-index model");
  const Eigen::Index d = sample.d();
  if (d < 2) throw std::invalid_argument("single-index model needs d > 1");
  if (!(b > 0.0)) throw std::invalid_argument("nuisance bandwidth must be positive");
  const Eigen::VectorXd y = sample.Y.col(0);
  auto objective = [&](const Eigen::VectorXd& angles) {
    return detail::single_index_rss(sample.X, y, detail::sphere_point(angles), b, spec);
  };

  std::vector<Eigen::VectorXd> starts;
  {
    const Eigen::MatrixXd D = detail::with_intercept(sample.X, d);
    const Eigen::VectorXd beta = D.colPivHouseholderQr().solve(y);
    Eigen::VectorXd dir = beta.tail(d);
    if (dir.norm() > 0.0 && dir.allFinite()) starts.push_back(detail::sphere_angles(dir.normalized()));
  }
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> angle(0.0, M_PI);
  for (int r = 0; r < opt.restarts; ++r) {
    Eigen::VectorXd a(d - 1);
    for (Eigen::Index j = 0; j < d - 1; ++j) a(j) = angle(rng);
    starts.push_back(a);
  }
  bool any_converged = false;
  double best_value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_theta;
  for (const auto& s : starts) {
    const auto res = detail::nelder_mead(objective, s, 0.3, opt.max_evaluations, opt.tolerance);
    if (!res.converged || !std::isfinite(res.value)) continue;
    any_converged = true;
    if (res.value < best_value) {
      best_value = res.value;
      best_theta = detail::sphere_point(res.x);
    }
  }
  if (!any_converged) throw FitFailure("single-index search did not converge from any start");

  NullModelFit f;
  f.model = "single-index";
  f.theta = detail::canonical_sign(best_theta);
  f.theta /= f.theta.norm();
  f.nuisance_bandwidth = b;
  auto index = std::make_shared<const Eigen::MatrixXd>(sample.X * f.theta);
  auto values = std::make_shared<const Eigen::VectorXd>(y);
  f.fitted.resize(sample.n(), 1);
  for (Eigen::Index i = 0; i < sample.n(); ++i) {
    Eigen::VectorXd u(1);
    u(0) = (*index)(i, 0);
    f.fitted(i, 0) = detail::smooth_at(*index, *values, u, b, spec);
  }
  f.g_hat = [index, values, b, spec](const Eigen::VectorXd& u) {
    Eigen::VectorXd out(1);
    out(0) = detail::smooth_at(*index, *values, u, b, spec);
    return out;
  };
  f.refit = [b, spec, opt](const Sample& s) { return fit_single_index(s, b, spec, opt); };
  return f;
}

/// Null model of the variable-selection problem: Y depends on the first d1
/// covariates only; m is their d1-dimensional NW regression.
inline NullModelFit fit_variable_selection_null(const Sample& sample, Eigen::Index d1, double b,
                                                const KernelSpec& spec = {}) {
  detail::require_scalar_response(sample, "variable-selection null");
  if (d1 < 1 || d1 > sample.d()) throw std::invalid_argument("need 1 <= d1 <= d");
  const Eigen::MatrixXd X1 = sample.X.leftCols(d1);
  auto S = std::make_shared<const Eigen::MatrixXd>(detail::smoother_matrix(X1, b, spec));
  auto X = std::make_shared<const Eigen::MatrixXd>(sample.X);
  auto Z = std::make_shared<const Eigen::MatrixXd>(X1);

  struct Builder {
    std::shared_ptr<const Eigen::MatrixXd> S, X, Z;
    Eigen::Index d1;
    double b;
    KernelSpec spec;
    NullModelFit operator()(const Sample& s) const {
      if (s.X.rows() != X->rows() || s.X != *X) return fit_variable_selection_null(s, d1, b, spec);
      detail::require_scalar_response(s, "variable-selection null");
      NullModelFit f;
      f.model = "varsel";
      f.theta = Eigen::VectorXd(0);
      f.nuisance_bandwidth = b;
      f.fitted = *S * s.Y.col(0);
      auto values = std::make_shared<const Eigen::VectorXd>(s.Y.col(0));
      auto Zl = Z;
      const double bl = b;
      const KernelSpec sp = spec;
      f.g_hat = [Zl, values, bl, sp](const Eigen::VectorXd& u) {
        Eigen::VectorXd out(1);
        out(0) = detail::smooth_at(*Zl, *values, u, bl, sp);
        return out;
      };
      f.refit = *this;
      return f;
    }
  };
  return Builder{S, X, Z, d1, b, spec}(sample);
}

enum class VarianceModel { constant };

namespace detail {

/// (Z, vec(Z Z')) row by row; vec stacks columns.
inline Eigen::MatrixXd mean_variance_response(const Eigen::MatrixXd& Z) {
  const Eigen::Index k1 = Z.cols();
  Eigen::MatrixXd Y(Z.rows(), k1 + k1 * k1);
  Y.leftCols(k1) = Z;
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    for (Eigen::Index b = 0; b < k1; ++b) {
      for (Eigen::Index a = 0; a < k1; ++a) Y(i, k1 + b * k1 + a) = Z(i, a) * Z(i, b);
    }
  }
  return Y;
}

/// Fitted (r, vec(Sigma + r r')) for a constant Sigma estimated as the mean of
/// vec(Y2) - Z r' - r Z' + r r'. On responses built from Z this is the mean
/// outer product of the residuals Z - r.
inline NullModelFit mean_variance_from_inner(const Sample& full, const NullModelFit& inner,
                                            Eigen::Index k1) {
  const Eigen::Index n = full.n();
  const Eigen::MatrixXd& r = inner.fitted;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(k1, k1);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index b = 0; b < k1; ++b) {
      for (Eigen::Index a = 0; a < k1; ++a) {
        sigma(a, b) += full.Y(i, k1 + b * k1 + a) - full.Y(i, a) * r(i, b) - r(i, a) * full.Y(i, b) +
                       r(i, a) * r(i, b);
      }
    }
  }
  sigma /= static_cast<double>(n);
  if (!sigma.allFinite()) throw FitFailure("non-finite residual moments in variance model");
  NullModelFit f;
  f.model = "mean-variance";
  f.nuisance_bandwidth = inner.nuisance_bandwidth;
  f.theta.resize(inner.theta.size() + k1 * k1);
  f.theta << inner.theta, Eigen::Map<const Eigen::VectorXd>(sigma.data(), k1 * k1);
  f.fitted.resize(n, k1 + k1 * k1);
  f.fitted.leftCols(k1) = r;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index b = 0; b < k1; ++b) {
      for (Eigen::Index a = 0; a < k1; ++a) f.fitted(i, k1 + b * k1 + a) = sigma(a, b) + r(i, a) * r(i, b);
    }
  }
  if (!f.fitted.allFinite()) throw FitFailure("non-finite fitted moments in variance model");
  return f;
}

}  // namespace detail

struct MeanVarianceModel {
  Sample sample;  ///< responses (Z, vec(Z Z'))
  NullModelFit fit;
};

/// Joint mean and variance null: the response becomes (Z, vec(Z Z')) and the
/// hypothesised curve (r, vec(Sigma + r r')). The refit re-estimates r with
/// the inner model's refit on the first k1 columns.
inline MeanVarianceModel build_mean_variance_model(const Sample& sample_z, const NullModelFit& inner_fit,
                                                   VarianceModel variance = VarianceModel::constant) {
  sample_z.validate();
  (void)variance;
  const Eigen::Index k1 = sample_z.k();
  if (inner_fit.fitted.rows() != sample_z.n() || inner_fit.fitted.cols() != k1) {
    throw std::invalid_argument("inner fit does not match the scalar sample");
  }
  MeanVarianceModel out;
  out.sample = Sample{sample_z.X, detail::mean_variance_response(sample_z.Y)};
  auto inner_refit = inner_fit.refit;

  std::function<NullModelFit(const Sample&)> refit;
  refit = [inner_refit, k1](const Sample& s) {
    if (s.k() != k1 + k1 * k1) throw std::invalid_argument("mean-variance refit needs k1 + k1^2 responses");
    const NullModelFit inner = inner_refit(Sample{s.X, s.Y.leftCols(k1)});
    NullModelFit f = detail::mean_variance_from_inner(s, inner, k1);
    f.g_hat = inner.g_hat;
    return f;
  };
  out.fit = detail::mean_variance_from_inner(out.sample, inner_fit, k1);
  out.fit.g_hat = inner_fit.g_hat;
  // Each refit result carries the same refit procedure.
  struct Recursive {
    std::function<NullModelFit(const Sample&)> base;
    NullModelFit operator()(const Sample& s) const {
      NullModelFit f = base(s);
      f.refit = *this;
      return f;
    }
  };
  out.fit.refit = Recursive{refit};
  const Eigen::Index t = out.fit.theta.size() - k1 * k1;
  const Eigen::Map<const Eigen::MatrixXd> sigma(out.fit.theta.data() + t, k1, k1);
  out.fit.derived = DerivedResponse{sample_z.Y, inner_fit.fitted, sigma.diagonal().cwiseMax(0.0).cwiseSqrt(),
                                    detail::mean_variance_response};
  return out;
}

/// Warns when the nuisance bandwidth breaks the rate guidance
/// h^d / b -> 0 and b / h -> 0 at the operating sample size.
inline bool check_bandwidth_rates(double h, double b, Eigen::Index d, Eigen::Index n) {
  if (!(b > 0.0) || !(h > 0.0)) return true;
  bool ok = true;
  std::ostringstream os;
  if (std::pow(h, static_cast<double>(d)) / b > 1.0) {
    os << "h^d/b = " << std::pow(h, static_cast<double>(d)) / b << " exceeds 1; ";
    ok = false;
  }
  if (b / h > std::pow(static_cast<double>(n), 0.1)) {
    os << "b/h = " << b / h << " exceeds n^(1/10); ";
    ok = false;
  }
  if (!ok) log_warning("bandwidth rate guard: " + os.str() + "nuisance estimate may bias the test");
  return ok;
}

/// Settings for fitting a null model by kind.
struct FitOptions {
  std::optional<double> b;  ///< nuisance bandwidth; cross-validated when unset
  Eigen::Index d1 = 1;      ///< retained covariates for the variable-selection null
  ModelKind inner = ModelKind::partially_linear;  ///< mean model inside mean-variance
  KernelSpec kernel{};      ///< nuisance kernel L
  SingleIndexOptions single_index{};
};

/// Nuisance bandwidth by leave-one-out cross-validation of the smooth the
/// model actually uses: Y on X_d (partially linear), Y on X^(1) (variable
/// selection), Y on the least-squares index (single index).
inline double cv_nuisance_bandwidth(const Sample& s, ModelKind kind, const FitOptions& opt) {
  const Eigen::VectorXd y = s.Y.col(0);
  Eigen::MatrixXd Z;
  switch (kind) {
    case ModelKind::partially_linear: Z = s.X.rightCols(1); break;
    case ModelKind::variable_selection: Z = s.X.leftCols(opt.d1); break;
    case ModelKind::single_index: {
      const Eigen::MatrixXd D = detail::with_intercept(s.X, s.d());
      Eigen::VectorXd dir = D.colPivHouseholderQr().solve(y).tail(s.d());
      if (!(dir.norm() > 0.0)) dir = Eigen::VectorXd::Unit(s.d(), 0);
      Z = s.X * dir.normalized();
      break;
    }
    default: return 0.0;
  }
  return loo_cv_bandwidth(Z, y, opt.kernel, default_bandwidth_grid(Z));
}

/// A fitted null together with the sample it is defined on (which differs
/// from the input for the mean-variance model).
struct PreparedNull {
  Sample sample;
  NullModelFit fit;
};

inline PreparedNull fit_null(const Sample& sample, ModelKind kind, const FitOptions& opt = {}) {
  sample.validate();
  auto bandwidth = [&](ModelKind k) { return opt.b ? *opt.b : cv_nuisance_bandwidth(sample, k, opt); };
  switch (kind) {
    case ModelKind::linear: return {sample, fit_parametric_linear(sample)};
    case ModelKind::partially_linear:
      return {sample, fit_partially_linear(sample, bandwidth(kind), opt.kernel)};
    case ModelKind::single_index:
      return {sample, fit_single_index(sample, bandwidth(kind), opt.kernel, opt.single_index)};
    case ModelKind::variable_selection:
      return {sample, fit_variable_selection_null(sample, opt.d1, bandwidth(kind), opt.kernel)};
    case ModelKind::mean_variance: {
      if (opt.inner == ModelKind::mean_variance) throw std::invalid_argument("mean-variance cannot nest itself");
      PreparedNull inner = fit_null(sample, opt.inner, opt);
      auto mv = build_mean_variance_model(sample, inner.fit);
      return {std::move(mv.sample), std::move(mv.fit)};
    }
  }
  throw std::invalid_argument("unknown model kind");
}

}  // namespace elgof
