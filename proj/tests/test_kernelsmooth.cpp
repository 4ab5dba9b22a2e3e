#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "elgof/integrate.hpp"
#include "elgof/kernel.hpp"
#include "elgof/quadrature.hpp"
#include "elgof/sample.hpp"
#include "elgof/smoothing.hpp"

using namespace elgof;

namespace {

const std::vector<KernelShape> kShapes{KernelShape::triangular, KernelShape::epanechnikov, KernelShape::biweight,
                                       KernelShape::epanechnikov4};

// exact, from tests/oracles/kernel_constants_oracle.py
constexpr double kTriangularK4_0 = 151.0 / 315.0;

double K2_triangular_closed(double u) {
  const double a = std::abs(u);
  if (a >= 2.0) return 0.0;
  if (a <= 1.0) return 2.0 / 3.0 - a * a + a * a * a / 2.0;
  return (2.0 - a) * (2.0 - a) * (2.0 - a) / 6.0;
}

}  // namespace

TEST(Kernel, IntegratesToOneSymmetricCompact) {
  for (auto shape : kShapes) {
    KernelSpec k{shape};
    const double mass = simpson_piecewise([&](double u) { return k(u); }, {-1.0, 0.0, 1.0}, 4096);
    EXPECT_NEAR(mass, 1.0, 1e-8) << k.name();
    for (double u : {0.0, 0.1, 0.37, 0.5, 0.99, 1.0}) EXPECT_EQ(k(u), k(-u));
    for (double u : {1.0000001, 1.5, 3.0}) {
      EXPECT_EQ(k(u), 0.0);
      EXPECT_EQ(k(-u), 0.0);
    }
  }
}

TEST(Kernel, OrderAndNames) {
  EXPECT_EQ(KernelSpec{}.order(), 2);
  EXPECT_EQ(KernelSpec{}.name(), "triangular");
  EXPECT_EQ(KernelSpec{KernelShape::epanechnikov4}.order(), 4);
  EXPECT_EQ(KernelSpec::from_name("biweight").base, KernelShape::biweight);
  EXPECT_THROW(KernelSpec::from_name("gaussian"), std::invalid_argument);
  // second moment of an order-4 kernel vanishes
  EXPECT_NEAR(detail::univariate_moment(KernelSpec{KernelShape::epanechnikov4}, 2), 0.0, 1e-10);
  EXPECT_NEAR(kernel_constants(KernelSpec{}, 1).k_r, 1.0 / 6.0, 1e-12);
}

TEST(KernelEval, Examples) {
  KernelSpec k;
  std::vector<double> u0{0.0}, u2{2.0}, uedge{0.5, 0.5};
  EXPECT_DOUBLE_EQ(kernel_eval(k, u0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(kernel_eval(k, u2, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(kernel_eval(k, uedge, 0.5), 0.0);
  std::vector<double> u{0.1, -0.2};
  EXPECT_NEAR(kernel_eval(k, u, 0.5), (0.8 / 0.5) * (0.6 / 0.5), 1e-15);
  EXPECT_THROW(kernel_eval(k, u0, 0.0), std::invalid_argument);
  EXPECT_THROW(kernel_eval(k, u0, -1.0), std::invalid_argument);
  EXPECT_THROW(kernel_eval(k, std::vector<double>{}, 1.0), std::invalid_argument);
}

TEST(KernelConstants, TriangularClosedForms) {
  const auto c1 = kernel_constants(KernelSpec{}, 1);
  EXPECT_NEAR(c1.R_K, 2.0 / 3.0, 1e-10);
  EXPECT_NEAR(c1.K4_0, kTriangularK4_0, 1e-10);
  const auto c2 = kernel_constants(KernelSpec{}, 2);
  EXPECT_NEAR(c2.R_K, 4.0 / 9.0, 1e-10);
  EXPECT_NEAR(c2.K4_0, kTriangularK4_0 * kTriangularK4_0, 1e-10);
  for (double u : {0.0, 0.25, 0.5, 0.9, 1.0, 1.3, 1.75, 2.0, 2.5}) {
    std::vector<double> one{u};
    EXPECT_NEAR(c1.K2(one), K2_triangular_closed(u), 1e-12) << u;
    std::vector<double> two{u, 0.4};
    EXPECT_NEAR(c2.K2(two), K2_triangular_closed(u) * K2_triangular_closed(0.4), 1e-12);
  }
}

TEST(KernelConstants, ProductPowerLaw) {
  for (auto shape : kShapes) {
    const auto c1 = kernel_constants(KernelSpec{shape}, 1);
    for (int d = 2; d <= 4; ++d) {
      const auto cd = kernel_constants(KernelSpec{shape}, d);
      EXPECT_DOUBLE_EQ(cd.R_K, std::pow(c1.R_K, d));
      EXPECT_DOUBLE_EQ(cd.K4_0, std::pow(c1.K4_0, d));
      EXPECT_DOUBLE_EQ(cd.R_of_t(0.7), std::pow(c1.R_of_t(0.7), d));
    }
  }
}

TEST(KernelConstants, ROfTInvariants) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> beta(0.3, 3.0);
  for (auto shape : kShapes) {
    for (int d : {1, 2, 3}) {
      const auto c = kernel_constants(KernelSpec{shape}, d);
      EXPECT_NEAR(c.R_of_t(1.0), c.R_K, 1e-9);
      for (int rep = 0; rep < 20; ++rep) {
        const double bl = beta(rng), bj = beta(rng);
        EXPECT_NEAR(std::pow(bj, -d) * c.R_of_t(bl / bj), std::pow(bl, -d) * c.R_of_t(bj / bl), 1e-9);
      }
    }
  }
}

TEST(Integrate, GaussLegendreExactness) {
  std::vector<double> nodes, weights;
  for (int order = 1; order <= 12; ++order) {
    gauss_legendre_rule(order, -0.5, 2.0, nodes, weights);
    ASSERT_EQ(nodes.size(), static_cast<std::size_t>(order));
    const int deg = 2 * order - 1;
    double q = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) q += weights[i] * std::pow(nodes[i], deg);
    const double exact = (std::pow(2.0, deg + 1) - std::pow(-0.5, deg + 1)) / (deg + 1);
    EXPECT_NEAR(q, exact, 1e-11 * std::max(1.0, std::abs(exact))) << order;
  }
}

TEST(Integrate, PiecewiseRules) {
  auto f = [](double x) { return std::abs(x) * x * x; };
  EXPECT_NEAR(simpson_piecewise(f, {-1.0, 0.0, 1.0}, 2), 0.5, 1e-15);
  EXPECT_NEAR(gauss_piecewise(f, {-1.0, 0.0, 1.0}), 0.5, 1e-15);
  const auto br = clip_breakpoints({0.5, -3.0, 0.2, 0.2, 9.0}, 0.0, 1.0);
  EXPECT_EQ(br, (std::vector<double>{0.0, 0.2, 0.5, 1.0}));
}

TEST(NadarayaWatson, Examples) {
  Eigen::MatrixXd X(3, 1);
  X << 0.0, 0.5, 1.0;
  Eigen::VectorXd y(3);
  y << 0.0, 1.0, 0.0;
  std::vector<double> x{0.5};
  // hand evaluation: weights k(5/6), k(0), k(5/6) = 1/6, 1, 1/6
  const double w = 1.0 - 0.5 / 0.6;
  EXPECT_NEAR(nw_estimate(X, y, x, 0.6), (0.0 * w + 1.0 + 0.0 * w) / (2.0 * w + 1.0), 1e-15);
  EXPECT_NEAR(nw_estimate(X, y, x, 0.6), 0.75, 1e-15);
  // single observation in window
  EXPECT_DOUBLE_EQ(nw_estimate(X, y, x, 0.3), 1.0);
  // constant response
  Eigen::VectorXd c = Eigen::VectorXd::Constant(3, 4.25);
  for (double t : {0.1, 0.4, 0.77}) {
    std::vector<double> xt{t};
    EXPECT_NEAR(nw_estimate(X, c, xt, 0.6), 4.25, 1e-14);
  }
}

TEST(NadarayaWatson, DegenerateWindowCarriesPoint) {
  Eigen::MatrixXd X(2, 1);
  X << 0.0, 1.0;
  Eigen::VectorXd y(2);
  y << 1.0, 2.0;
  std::vector<double> x{0.5};
  try {
    nw_estimate(X, y, x, 0.2);
    FAIL() << "expected DegenerateWindow";
  } catch (const DegenerateWindow& e) {
    EXPECT_EQ(e.point(), x);
    EXPECT_EQ(e.coordinate(), -1);
  }
  EXPECT_THROW(nw_estimate(X, y, x, 0.0), std::invalid_argument);
}

TEST(NadarayaWatson, EquivarianceAndPermutation) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const Eigen::Index n = 40;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = U(rng);
    X(i, 1) = U(rng);
    y(i) = std::sin(4 * X(i, 0)) + X(i, 1) + 0.1 * U(rng);
  }
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const Eigen::MatrixXd Xp = permute_rows(X, perm);
  const Eigen::VectorXd yp = permute_rows(Eigen::MatrixXd(y), perm);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> x{0.2 + 0.06 * t, 0.8 - 0.05 * t};
    const double m = nw_estimate(X, y, x, 0.3);
    EXPECT_NEAR(nw_estimate(X, Eigen::VectorXd(y.array() + 2.5), x, 0.3), m + 2.5, 1e-12);
    EXPECT_NEAR(nw_estimate(X, Eigen::VectorXd(-3.0 * y), x, 0.3), -3.0 * m, 1e-12);
    EXPECT_NEAR(nw_estimate(Xp, yp, x, 0.3), m, 1e-13);
    // within the range of the active responses
    double lo = 1e300, hi = -1e300;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::abs(x[0] - X(i, 0)) < 0.3 && std::abs(x[1] - X(i, 1)) < 0.3) {
        lo = std::min(lo, y(i));
        hi = std::max(hi, y(i));
      }
    }
    EXPECT_GE(m, lo - 1e-12);
    EXPECT_LE(m, hi + 1e-12);
    // the null-curve smoother is the same estimator
    EXPECT_EQ(smooth_null_curve(y, X, x, 0.3), m);
  }
}

TEST(NadarayaWatson, LinearValuesOnClusteredDesign) {
  Eigen::MatrixXd X(5, 1);
  X << 0.40, 0.41, 0.45, 0.60, 0.95;
  Eigen::VectorXd mv = (2.0 * X.col(0).array() + 1.0).matrix();
  std::vector<double> x{0.5};
  const double h = 0.2;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 5; ++i) {
    const double u = (0.5 - X(i, 0)) / h;
    const double w = std::abs(u) < 1 ? 1 - std::abs(u) : 0.0;
    num += w * mv(i);
    den += w;
  }
  EXPECT_NEAR(smooth_null_curve(mv, X, x, h), num / den, 1e-15);
}

namespace {

double brute_loo(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double h) {
  double sse = 0.0;
  int used = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index t = 0; t < X.rows(); ++t) {
      if (t == i) continue;
      const double u = std::abs(X(i, 0) - X(t, 0)) / h;
      const double w = u < 1.0 ? 1.0 - u : 0.0;
      num += w * y(t);
      den += w;
    }
    if (den == 0.0) continue;
    sse += std::pow(y(i) - num / den, 2);
    ++used;
  }
  return sse / used;
}

}  // namespace

TEST(LooCv, Examples) {
  Eigen::MatrixXd X(20, 1);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) {
    X(i, 0) = (i + 0.5) / 20.0;
    y(i) = std::sin(2 * M_PI * X(i, 0)) + 0.1 * std::cos(37.0 * i);
  }
  std::vector<double> grid;
  for (int i = 0; i < 10; ++i) grid.push_back(0.05 + 0.05 * i);
  double best_h = 0.0, best = 1e300;
  for (double h : grid) {
    const double s = brute_loo(X, y, h);
    EXPECT_NEAR(loo_cv_score(X, y, KernelSpec{}, h), s, 1e-12);
    if (s < best) {
      best = s;
      best_h = h;
    }
  }
  EXPECT_DOUBLE_EQ(loo_cv_bandwidth(X, y, KernelSpec{}, grid), best_h);
  EXPECT_DOUBLE_EQ(loo_cv_bandwidth(X, y, KernelSpec{}, {0.31}), 0.31);
  Eigen::VectorXd c = Eigen::VectorXd::Constant(20, 2.0);
  EXPECT_DOUBLE_EQ(loo_cv_bandwidth(X, c, KernelSpec{}, {0.4, 0.2, 0.3}), 0.2);
}

TEST(LooCv, NoFeasibleBandwidth) {
  Eigen::MatrixXd X(3, 1);
  X << 0.0, 1.0, 2.0;
  Eigen::VectorXd y(3);
  y << 1, 2, 3;
  EXPECT_THROW(loo_cv_bandwidth(X, y, KernelSpec{}, {0.1, 0.5}), NoFeasibleBandwidth);
  EXPECT_THROW(loo_cv_bandwidth(X, y, KernelSpec{}, {}), std::invalid_argument);
}

TEST(Bandwidth, DefaultGridAndVector) {
  Eigen::MatrixXd X(4, 2);
  X << 0, 0, 1, 0.5, 2, 1, 0.5, 0.2;
  const auto g = default_bandwidth_grid(X);
  ASSERT_EQ(g.size(), 20u);
  EXPECT_NEAR(g.front(), 0.1, 1e-14);
  EXPECT_NEAR(g.back(), 1.0, 1e-14);
  for (std::size_t i = 1; i + 1 < g.size(); ++i) EXPECT_NEAR(g[i] * g[i], g[i - 1] * g[i + 1], 1e-14);

  auto b = BandwidthVector::from_ratios(0.2, {1.0, 2.0});
  EXPECT_NEAR(b.h_l[1], 0.4, 1e-15);
  EXPECT_NEAR(b.beta()[1], 2.0, 1e-15);
  EXPECT_NO_THROW(b.validate());
  EXPECT_THROW(BandwidthVector::from_ratios(0.2, {1.0, 5000.0}).validate(), std::invalid_argument);
  EXPECT_THROW((BandwidthVector{0.2, {0.2, -0.1}}.validate()), std::invalid_argument);
  EXPECT_THROW((BandwidthVector{0.2, {}}.validate()), std::invalid_argument);
}

TEST(Quadrature, GridsAndWeights) {
  const auto pi = WeightFunction::box(2, 0.1, 0.9);
  EXPECT_NEAR(pi.height(), 1.0 / 0.64, 1e-14);
  EXPECT_NEAR(pi.integral_of_square(), 1.0 / 0.64, 1e-14);
  EXPECT_NEAR(WeightFunction::box(2, 0.1, 0.9, false).integral_of_square(), 0.64, 1e-14);
  const auto g = midpoint_grid(pi, 8);
  EXPECT_EQ(g.size(), 64u);
  double vol = 0.0;
  std::vector<std::size_t> idx(2);
  for (std::size_t f = 0; f < g.size(); ++f) {
    g.unflatten(f, idx);
    vol += g.axes[0].weights[idx[0]] * g.axes[1].weights[idx[1]];
  }
  EXPECT_NEAR(vol, 0.64, 1e-14);
  EXPECT_EQ(midpoint_nodes_for(pi, 0.22), 64u);
  EXPECT_EQ(midpoint_nodes_for(pi, 0.01), 320u);
  EXPECT_THROW(WeightFunction::box(1, 0.5, 0.5).validate(), InvalidWeight);
  EXPECT_THROW(midpoint_grid(WeightFunction::box(1, 0.5, 0.4), 4), InvalidWeight);
}

TEST(Quadrature, KinkAlignedIsExactForKernelProducts) {
  Eigen::MatrixXd X(3, 1);
  X << 0.2, 0.47, 0.81;
  const auto pi = WeightFunction::box(1, 0.1, 0.9, false);
  const auto h = BandwidthVector::equal(0.15, 1);
  const auto g = kink_aligned_grid(pi, X, h, KernelSpec{}, 2);
  auto f = [&](double x) {
    double s = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double u = std::abs(x - X(i, 0)) / 0.15;
      s += u < 1 ? (1 - u) : 0.0;
    }
    return s * s;
  };
  double q = 0.0;
  for (std::size_t i = 0; i < g.axes[0].nodes.size(); ++i) q += g.axes[0].weights[i] * f(g.axes[0].nodes[i]);
  const double ref = simpson_piecewise(f, clip_breakpoints({0.05, 0.2, 0.35, 0.32, 0.47, 0.62, 0.66, 0.81, 0.96}, 0.1, 0.9), 2);
  EXPECT_NEAR(q, ref, 1e-14);
}

TEST(Sample, CanonicalOrderIsPermutationFree) {
  Sample s{Eigen::MatrixXd(4, 1), Eigen::MatrixXd(4, 1)};
  s.X << 0.3, 0.1, 0.3, 0.2;
  s.Y << 2.0, 1.0, 1.0, 5.0;
  const auto c = permute_rows(s, canonical_order(s));
  EXPECT_EQ(c.X(0, 0), 0.1);
  EXPECT_EQ(c.X(3, 0), 0.3);
  EXPECT_EQ(c.Y(2, 0), 1.0);
  EXPECT_EQ(c.Y(3, 0), 2.0);
  const std::vector<Eigen::Index> perm{3, 1, 0, 2};
  const auto p = permute_rows(s, perm);
  const auto cp = permute_rows(p, canonical_order(p));
  EXPECT_EQ(cp.X, c.X);
  EXPECT_EQ(cp.Y, c.Y);
  Sample bad{Eigen::MatrixXd(2, 1), Eigen::MatrixXd(3, 1)};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}
