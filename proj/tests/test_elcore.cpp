#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "elgof/el_solver.hpp"
#include "elgof/models.hpp"
#include "elgof/simlab.hpp"
#include "elgof/statistic.hpp"
#include "oracles/dual_oracle.hpp"

using namespace elgof;

namespace {

Eigen::MatrixXd column(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

void expect_weight_constraints(const ELSolution& s, const Eigen::MatrixXd& Q, double tol) {
  EXPECT_NEAR(s.weights.sum(), 1.0, tol);
  const Eigen::VectorXd moment = Q.transpose() * s.weights;
  EXPECT_LE(moment.cwiseAbs().maxCoeff(), tol * std::max(1.0, Q.cwiseAbs().maxCoeff()));
  EXPECT_GT(s.weights.minCoeff(), 0.0);
}

struct Fixture1d {
  Sample s;
  NullModelFit fit;
};

Fixture1d fixture_n30() {
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N(0.0, 0.3);
  Fixture1d f;
  f.s.X.resize(30, 1);
  f.s.Y.resize(30, 1);
  f.fit.fitted.resize(30, 1);
  for (int i = 0; i < 30; ++i) {
    f.s.X(i, 0) = U(rng);
    f.fit.fitted(i, 0) = std::sin(2.0 * M_PI * f.s.X(i, 0));
    f.s.Y(i, 0) = f.fit.fitted(i, 0) + N(rng);
  }
  f.fit.model = "fixture";
  return f;
}

}  // namespace

TEST(SolveLambda, SymmetricRowsGiveZero) {
  const auto Q = column({-1.0, 1.0});
  const auto s = solve_lambda(Q);
  EXPECT_EQ(s.status, ELStatus::converged);
  EXPECT_NEAR(s.lambda(0), 0.0, 1e-15);
  EXPECT_NEAR(s.log_ratio, 0.0, 1e-15);
  EXPECT_NEAR(s.weights(0), 0.5, 1e-15);
  EXPECT_NEAR(s.weights(1), 0.5, 1e-15);
}

TEST(SolveLambda, SameSignIsCapped) {
  const auto Q = column({1.0, 2.0, 3.0});
  const auto s = solve_lambda(Q);
  EXPECT_EQ(s.status, ELStatus::capped_infeasible);
  EXPECT_DOUBLE_EQ(s.log_ratio, 2.0 * 3.0 * std::log(3.0));
  Eigen::MatrixXd Q2(3, 2);
  Q2 << 1, 0, 0, 1, 1, 1;  // zero on the hull boundary at most
  EXPECT_EQ(solve_lambda(Q2).status, ELStatus::capped_infeasible);
}

TEST(SolveLambda, AllZeroIsDegenerate) {
  const auto s = solve_lambda(Eigen::MatrixXd::Zero(4, 2));
  EXPECT_EQ(s.status, ELStatus::degenerate);
  EXPECT_EQ(s.log_ratio, 0.0);
  EXPECT_THROW(solve_lambda(Eigen::MatrixXd(0, 1)), std::invalid_argument);
}

TEST(SolveLambda, BisectionOracle) {
  for (const std::vector<double> q : {std::vector<double>{-1.0, 0.5, 0.5}, {-1.0, 0.2, 0.5}, {-3.0, 0.1, 0.4, 2.0},
                                      {-0.01, 5.0, 7.0, 0.3}}) {
    Eigen::MatrixXd Q(static_cast<Eigen::Index>(q.size()), 1);
    for (std::size_t i = 0; i < q.size(); ++i) Q(static_cast<Eigen::Index>(i), 0) = q[i];
    const double lam = oracle::bisection_lambda(q);
    double ell = 0.0;
    for (double v : q) ell += 2.0 * std::log1p(lam * v);
    const auto s = solve_lambda(Q);
    ASSERT_EQ(s.status, ELStatus::converged);
    EXPECT_NEAR(s.lambda(0), lam, 1e-8);
    EXPECT_NEAR(s.log_ratio, ell, 1e-8);
    expect_weight_constraints(s, Q, 1e-10);
    EXPECT_NEAR(-2.0 * (s.weights.array() * static_cast<double>(q.size())).log().sum(), s.log_ratio, 1e-9);
  }
}

TEST(SolveLambda, BruteForceDualOracle) {
  std::mt19937_64 rng(404);
  int feasible = 0;
  for (int rep = 0; rep < 30; ++rep) {
    const Eigen::MatrixXd Q = oracle::mixed_sign_instance(rng);
    const auto ref = oracle::brute_force_dual(Q);
    const auto s = solve_lambda(Q);
    if (!ref.bounded) {
      EXPECT_EQ(s.status, ELStatus::capped_infeasible) << Q;
      continue;
    }
    ++feasible;
    ASSERT_EQ(s.status, ELStatus::converged) << Q;
    EXPECT_NEAR(s.log_ratio, ref.log_ratio, 1e-6 * std::max(1.0, ref.log_ratio)) << Q;
    expect_weight_constraints(s, Q, 1e-8);
  }
  EXPECT_GT(feasible, 10);
}

TEST(SolveLambda, ZeroIffMeanZero) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int k : {1, 2, 3}) {
    Eigen::MatrixXd Q(12, k);
    for (int i = 0; i < 12; ++i)
      for (int l = 0; l < k; ++l) Q(i, l) = z(rng);
    Eigen::MatrixXd C = Q.rowwise() - Q.colwise().mean();
    const auto s0 = solve_lambda(C);
    EXPECT_NEAR(s0.log_ratio, 0.0, 1e-12);
    const auto s1 = solve_lambda(Eigen::MatrixXd(C.rowwise() + Eigen::RowVectorXd::Constant(k, 0.2)));
    EXPECT_GT(s1.log_ratio, 1e-6);
    EXPECT_GE(s1.log_ratio, 0.0);
  }
}

TEST(SolveLambda, OneStepConsistency) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = 50;
  for (int k : {1, 2}) {
    Eigen::MatrixXd Z(n, k);
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < k; ++l) Z(i, l) = z(rng);
    Z = Z.rowwise() - Z.colwise().mean();
    const Eigen::RowVectorXd shift = Eigen::RowVectorXd::LinSpaced(k, 1.0, 1.5);
    double previous = 1e300;
    for (double t : {10.0, 100.0}) {
      const Eigen::MatrixXd Q = Z.rowwise() + shift / t;
      const Eigen::VectorXd qbar = Q.colwise().mean().transpose();
      const Eigen::MatrixXd S = Q.transpose() * Q / n;
      const double quad = n * qbar.dot(S.ldlt().solve(qbar));
      const double ratio = solve_lambda(Q).log_ratio / quad;
      const double err = std::abs(ratio - 1.0);
      EXPECT_LT(err, previous);
      previous = err;
      if (t == 100.0) EXPECT_LT(err, 5e-2);
    }
  }
}

TEST(SolveLambda, ScaleOfColumnsIsIrrelevant) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd Q = oracle::mixed_sign_instance(rng);
    const auto s = solve_lambda(Q);
    Eigen::MatrixXd Qs = Q;
    Qs.col(0) *= -1e4;
    const auto t = solve_lambda(Qs);
    EXPECT_EQ(s.status, t.status);
    EXPECT_NEAR(s.log_ratio, t.log_ratio, 1e-8 * std::max(1.0, s.log_ratio));
  }
}

TEST(LocalResiduals, HandComputation) {
  Sample s{column({0.1, 0.3, 0.9}), column({1.0, 2.0, 4.0})};
  NullModelFit fit;
  fit.fitted = column({1.5, 1.5, 3.0});
  const std::vector<double> x{0.25};
  const auto h = BandwidthVector::equal(0.3, 1);
  const auto set = local_residuals(s, fit, x, h);
  const double w0 = (1.0 - 0.15 / 0.3) / 0.3, w1 = (1.0 - 0.05 / 0.3) / 0.3;
  const double m_tilde = (w0 * 1.5 + w1 * 1.5) / (w0 + w1);
  EXPECT_NEAR(set.Q(0, 0), w0 * (1.0 - m_tilde), 1e-14);
  EXPECT_NEAR(set.Q(1, 0), w1 * (2.0 - m_tilde), 1e-14);
  EXPECT_EQ(set.Q(2, 0), 0.0);
}

TEST(LocalResiduals, ExactNullAndEmptyWindow) {
  Sample s{column({0.1, 0.3, 0.5}), column({1.0, 2.0, 4.0})};
  NullModelFit fit;
  fit.fitted = s.Y;
  const auto set = local_residuals(s, fit, std::vector<double>{0.3}, BandwidthVector::equal(0.3, 1));
  EXPECT_NEAR(set.Q.sum(), 0.0, 1e-12);
  EXPECT_NEAR(solve_lambda(set).log_ratio, 0.0, 1e-12);
  try {
    local_residuals(s, fit, std::vector<double>{2.0}, BandwidthVector::equal(0.3, 1));
    FAIL();
  } catch (const DegenerateWindow& e) {
    EXPECT_EQ(e.coordinate(), 0);
  }
}

TEST(GlobalStatistic, ExactNullGivesZero) {
  auto f = fixture_n30();
  f.s.Y = f.fit.fitted;
  const auto pi = WeightFunction::box(1, 0.1, 0.9);
  const auto g = global_statistic(f.s, f.fit, BandwidthVector::equal(0.25, 1), KernelSpec{}, pi);
  EXPECT_NEAR(g.lambda_n, 0.0, 1e-12);
  EXPECT_NEAR(g.standardized, -1.0 / std::sqrt(0.25), 1e-10);
}

TEST(GlobalStatistic, QuadratureSumInvariant) {
  const auto f = fixture_n30();
  const auto pi = WeightFunction::box(1, 0.1, 0.9);
  const auto g = global_statistic(f.s, f.fit, BandwidthVector::equal(0.25, 1), KernelSpec{}, pi);
  double acc = 0.0;
  for (std::size_t i = 0; i < g.per_node_logratio.size(); ++i) {
    EXPECT_GE(g.per_node_logratio[i], 0.0);
    acc += g.node_weight[i] * g.per_node_logratio[i];
  }
  EXPECT_NEAR(acc, g.lambda_n, 1e-12 * std::max(1.0, g.lambda_n));
  double wsum = std::accumulate(g.node_weight.begin(), g.node_weight.end(), 0.0);
  EXPECT_NEAR(wsum, 1.0, 1e-12);
}

TEST(GlobalStatistic, ZeroMeasureWeight) {
  const auto f = fixture_n30();
  EXPECT_THROW(global_statistic(f.s, f.fit, BandwidthVector::equal(0.25, 1), KernelSpec{},
                                WeightFunction::box(1, 0.4, 0.4)),
               InvalidWeight);
}

TEST(GlobalStatistic, TooManyEmptyWindows) {
  Sample s{column({0.0, 0.05, 0.95, 1.0}), column({1.0, 2.0, 1.0, 2.0})};
  NullModelFit fit;
  fit.fitted = column({1.5, 1.5, 1.5, 1.5});
  EXPECT_THROW(global_statistic(s, fit, BandwidthVector::equal(0.1, 1), KernelSpec{}, WeightFunction::box(1, 0.1, 0.9)),
               UnreliableIntegration);
}

TEST(GlobalStatistic, GridRefinement) {
  const auto f = fixture_n30();
  const auto pi = WeightFunction::box(1, 0.1, 0.9);
  const auto h = BandwidthVector::equal(0.25, 1);
  QuadraturePolicy coarse{QuadraturePolicy::Rule::kink_aligned, 0, 4};
  QuadraturePolicy fine{QuadraturePolicy::Rule::kink_aligned, 0, 8};
  const auto a = global_statistic(f.s, f.fit, h, KernelSpec{}, pi, coarse);
  const auto b = global_statistic(f.s, f.fit, h, KernelSpec{}, pi, fine);
  EXPECT_EQ(a.capped_nodes, 0u);
  EXPECT_EQ(b.per_node_logratio.size(), 2 * a.per_node_logratio.size());
  EXPECT_LT(std::abs(a.lambda_n - b.lambda_n), 1e-6);
  // midpoint 64 vs 128 only agrees to second order
  const auto m64 = global_statistic(f.s, f.fit, h, KernelSpec{}, pi,
                                    QuadraturePolicy{QuadraturePolicy::Rule::midpoint_fixed, 64});
  const auto m128 = global_statistic(f.s, f.fit, h, KernelSpec{}, pi,
                                     QuadraturePolicy{QuadraturePolicy::Rule::midpoint_fixed, 128});
  EXPECT_LT(std::abs(m64.lambda_n - m128.lambda_n), 1e-2 * b.lambda_n);
}

TEST(GlobalStatistic, PermutationAndScaling) {
  Sample s = gen_model_51(60, 0.5, "x^2", "exp", 3);
  Sample z{s.X, Eigen::MatrixXd(60, 2)};
  z.Y.col(0) = s.Y.col(0);
  z.Y.col(1) = s.Y.col(0).array().square() + 0.1 * s.X.col(1).array();
  NullModelFit fit;
  fit.fitted.resize(60, 2);
  fit.fitted.col(0) = 0.5 * s.X.col(0) + s.X.col(1).array().exp().matrix();
  fit.fitted.col(1) = fit.fitted.col(0).array().square();
  const auto pi = WeightFunction::box(2, 0.1, 0.9);
  const auto h = BandwidthVector::equal(0.3, 2);
  const auto base = global_statistic(z, fit, h, KernelSpec{}, pi);

  std::vector<Eigen::Index> perm(60);
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(9));
  NullModelFit pf = fit;
  pf.fitted = permute_rows(fit.fitted, perm);
  const auto permuted = global_statistic(permute_rows(z, perm), pf, h, KernelSpec{}, pi);
  EXPECT_EQ(permuted.lambda_n, base.lambda_n);

  for (double c : {-2.0, 1e-3, 250.0}) {
    Sample zs = z;
    NullModelFit fs = fit;
    zs.Y.col(1) *= c;
    fs.fitted.col(1) *= c;
    const auto scaled = global_statistic(zs, fs, h, KernelSpec{}, pi);
    EXPECT_NEAR(scaled.lambda_n, base.lambda_n, 1e-8 * std::max(1.0, base.lambda_n)) << c;
  }
}

TEST(SupStatistic, SingletonDuplicatesAndExhaustive) {
  const Sample s = gen_model_51(100, 0.0, "x^2", "exp", 11);
  const auto prepared = fit_null(s, ModelKind::partially_linear);
  const auto pi = WeightFunction::box(2, 0.1, 0.9);
  std::vector<BandwidthVector> grid;
  std::vector<double> direct;
  for (double h : {0.22, 0.24, 0.26, 0.28}) {
    grid.push_back(BandwidthVector::equal(h, 1));
    direct.push_back(global_statistic(prepared.sample, prepared.fit, grid.back(), KernelSpec{}, pi).standardized);
  }
  const auto sup = sup_statistic(prepared.sample, prepared.fit, grid, KernelSpec{}, pi);
  const auto it = std::max_element(direct.begin(), direct.end());
  EXPECT_EQ(sup.value, *it);
  EXPECT_EQ(sup.argmax, static_cast<std::size_t>(it - direct.begin()));
  EXPECT_EQ(sup.argmax_h.h, grid[sup.argmax].h);

  const auto single = sup_statistic(prepared.sample, prepared.fit, {grid[1]}, KernelSpec{}, pi);
  EXPECT_EQ(single.value, direct[1]);

  auto dup = grid;
  dup.insert(dup.end(), grid.begin(), grid.end());
  EXPECT_EQ(sup_statistic(prepared.sample, prepared.fit, dup, KernelSpec{}, pi).value, sup.value);
  EXPECT_THROW(sup_statistic(prepared.sample, prepared.fit, {}, KernelSpec{}, pi), std::invalid_argument);
}
