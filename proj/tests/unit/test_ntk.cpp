#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_support.hpp"
#include "wdeos/error.hpp"
#include "wdeos/ntk.hpp"

using namespace wdeos;
using namespace wdeos::testing;

namespace {

SolverConfig tight(std::size_t dim) {
  SolverConfig s;
  s.tol = 1e-12;
  s.max_iters = dim;
  return s;
}

DenseMatrix gram(const DenseMatrix& j, double scale) {
  DenseMatrix g(j.rows(), j.rows());
  for (std::size_t a = 0; a < j.rows(); ++a)
    for (std::size_t b = 0; b < j.rows(); ++b) {
      double s = 0.0;
      for (std::size_t k = 0; k < j.cols(); ++k) s += j(a, k) * j(b, k);
      g(a, b) = scale * s;
    }
  return g;
}

DenseMatrix rank_one_dense(const std::vector<double>& lam, const Vector& b, double alpha) {
  const std::size_t n = lam.size();
  DenseMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = (i == j ? lam[i] : 0.0) + alpha * b[i] * b[j];
  return a;
}

double secular(const RankOneModel& m, double mu) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.spectrum.size(); ++i) s += m.b[i] * m.b[i] / (m.spectrum[i] - mu);
  return 1.0 + m.alpha * s;
}

std::vector<double> geomspace(double lo, double hi, std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
  return g;
}

}  // namespace

TEST(NtkGram, MatchesDenseAssembly) {
  auto t = tiny_tanh({3, 6, 2}, 7, 1);
  for (OutputMode mode : {OutputMode::per_output, OutputMode::per_sample_sum}) {
    const DenseMatrix j = dense_jacobian(t.mlp, t.params, t.batch.inputs, mode);
    const DenseMatrix g = gram(j, 1.0 / 7.0);
    const DenseMatrix op = materialize(ntk_gram_operator(t.mlp, t.params, t.batch.inputs, mode));
    for (std::size_t a = 0; a < g.rows(); ++a)
      for (std::size_t b = 0; b < g.cols(); ++b) EXPECT_NEAR(op(a, b), g(a, b), 1e-8);
    NtkConfig cfg{mode, tight(g.rows())};
    EXPECT_NEAR(ntk_lambda_max(t.mlp, t.params, t.batch.inputs, cfg), dense_sym_eig(g).front().value, 1e-8);
  }
}

TEST(NtkGram, DualityWithParameterSpace) {
  auto t = tiny_tanh({3, 6, 2}, 7, 2);
  const LinearOperator small = ntk_gram_operator(t.mlp, t.params, t.batch.inputs, OutputMode::per_output);
  const LinearOperator big = ntk_param_operator(t.mlp, t.params, t.batch.inputs, OutputMode::per_output);
  const double a = dense_sym_eig(materialize(small)).front().value;
  LanczosOptions o;
  o.tol = 1e-12;
  o.max_iters = big.dim;
  const double b = lanczos_topk(big, o).front().value;
  EXPECT_NEAR(a, b, 1e-8);
}

TEST(Residual, MatchesDenseDecomposition) {
  auto t = tiny_tanh({3, 6, 2}, 7, 3);
  const CurvatureModel m = make_curvature_model(t.mlp, t.batch);
  const DenseMatrix h = dense_hessian(m, t.params);
  const DenseMatrix j = dense_jacobian(t.mlp, t.params, t.batch.inputs);
  const DenseMatrix r = materialize(residual_operator(t.mlp, t.params, t.batch));
  for (std::size_t a = 0; a < h.rows(); ++a)
    for (std::size_t b = 0; b < h.cols(); ++b) {
      double jtj = 0.0;
      for (std::size_t k = 0; k < j.rows(); ++k) jtj += j(k, a) * j(k, b);
      EXPECT_NEAR(r(a, b), h(a, b) - jtj / 7.0, 1e-8);
    }
}

TEST(Residual, VanishesForLinearModel) {
  Mlp mlp({{4, 3}, Activation::identity, 0});
  const LabeledBatch b{random_matrix(9, 4, 1), random_matrix(9, 3, 2)};
  const ParamVector p = random_vector(mlp.num_params(), 3);
  const LinearOperator r = residual_operator(mlp, p, b);
  const Vector v = random_vector(mlp.num_params(), 4);
  EXPECT_LE(norm2(r(v)), 1e-13 * norm2(v));
}

TEST(Residual, VanishesAtInterpolation) {
  auto t = tiny_tanh({2, 8, 1}, 4, 4);
  ASSERT_LE(fit_by_gauss_newton(t.mlp, t.batch, t.params), 1e-10);
  const NtkReport rep = weyl_check(t.mlp, t.params, t.batch, tight(t.params.size()));
  EXPECT_LE(rep.residual_norm, 1e-6 * rep.lambda_max_hessian);
  EXPECT_LE(std::abs(rep.lambda_max_hessian - rep.lambda_max_ntk), 1e-6 * rep.lambda_max_hessian);
  EXPECT_TRUE(rep.weyl_satisfied);
}

TEST(Weyl, HoldsAtRandomInit) {
  auto t = tiny_tanh({3, 6, 2}, 10, 5);
  const NtkReport rep = weyl_check(t.mlp, t.params, t.batch, tight(t.params.size()));
  EXPECT_TRUE(std::isfinite(rep.lambda_max_ntk));
  EXPECT_TRUE(std::isfinite(rep.lambda_max_hessian));
  EXPECT_GT(rep.residual_norm, 0.0);
  EXPECT_TRUE(rep.weyl_satisfied);
  EXPECT_EQ(rep.n_samples, 10u);
}

TEST(NtkConvergence, BothNormalizations) {
  auto t = tiny_tanh({3, 6, 2}, 12, 6);
  NtkConfig cfg{OutputMode::per_output, tight(24)};
  const auto rows = ntk_convergence(t.mlp, t.params, t.batch.inputs, {3, 6, 12}, cfg);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_NEAR(rows[2].lambda_max, ntk_lambda_max(t.mlp, t.params, t.batch.inputs, cfg), 1e-10);
  for (const auto& r : rows) EXPECT_NEAR(r.lambda_max_unnormalized, r.lambda_max * r.n, 1e-10);
  EXPECT_THROW(ntk_convergence(t.mlp, t.params, t.batch.inputs, {13}, cfg), InvalidArgument);
}

TEST(RankOne, ZeroAlphaKeepsSpectrum) {
  const std::vector<double> lam{5, 3, 2, 1};
  const auto pairs = rank_one_eigs({lam, random_unit(4, 1), 0.0});
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(pairs[i].value, lam[i]);
    EXPECT_DOUBLE_EQ(std::abs(pairs[i].vector[i]), 1.0);
  }
}

TEST(RankOne, CoordinateDirectionShiftsOneEigenvalue) {
  const std::vector<double> lam{5, 3, 2, 1};
  const auto pairs = rank_one_eigs({lam, {1, 0, 0, 0}, 2.5});
  EXPECT_DOUBLE_EQ(pairs[0].value, 7.5);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_DOUBLE_EQ(pairs[i].value, lam[i]);
}

TEST(RankOne, RandomMatchesDenseAndInterlaces) {
  const std::size_t n = 50;
  Vector raw = random_vector(n, 7);
  std::vector<double> lam(raw.begin(), raw.end());
  std::sort(lam.rbegin(), lam.rend());
  const Vector b = random_unit(n, 8);
  for (double alpha : {0.01, 1.0, 37.0}) {
    const RankOneModel m{lam, b, alpha};
    const auto pairs = rank_one_eigs(m);
    const DenseMatrix a = rank_one_dense(lam, b, alpha);
    const auto dense = dense_sym_eig(a);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(pairs[i].value, dense[i].value, 1e-8);
      EXPECT_NEAR(std::abs(dot(pairs[i].vector, dense[i].vector)), 1.0, 1e-8);
      Vector r = a.multiply(pairs[i].vector);
      for (std::size_t k = 0; k < n; ++k) r[k] -= pairs[i].value * pairs[i].vector[k];
      EXPECT_LE(norm2(r), 1e-8 * std::max(1.0, std::abs(pairs[i].value)));
      // A root resolved to double precision: the secular function, increasing
      // between poles, changes sign across a few ulps around it.
      const double w = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(pairs[i].value));
      EXPECT_LT(secular(m, pairs[i].value - w), 0.0) << "root " << i;
      EXPECT_GT(secular(m, pairs[i].value + w), 0.0) << "root " << i;
      EXPECT_LE(secular_residual(m, pairs[i].value), 1e-8);
      // λ_i ≤ μ_i ≤ λ_{i−1}, and μ_1 ≤ λ_1 + α.
      EXPECT_GE(pairs[i].value, lam[i] - 1e-12);
      EXPECT_LE(pairs[i].value, (i == 0 ? lam[0] + alpha : lam[i - 1]) + 1e-12);
    }
  }
}

TEST(RankOne, RepeatedEigenvaluesAreDeflated) {
  const std::vector<double> lam{4, 2, 2, 2, 1};
  const Vector b = random_unit(5, 9);
  const auto pairs = rank_one_eigs({lam, b, 3.0});
  const auto dense = dense_sym_eig(rank_one_dense(lam, b, 3.0));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(pairs[i].value, dense[i].value, 1e-10);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = i + 1; j < 5; ++j) EXPECT_NEAR(dot(pairs[i].vector, pairs[j].vector), 0.0, 1e-10);
}

TEST(RankOne, RejectsBadInput) {
  EXPECT_THROW(rank_one_eigs({{1, 2}, {1, 0}, 1.0}), InvalidArgument);
  EXPECT_THROW(rank_one_eigs({{2, 1}, {1, 1}, 1.0}), InvalidArgument);
  EXPECT_THROW(rank_one_eigs({{2, 1}, {1, 0}, -1.0}), InvalidArgument);
}

TEST(Alignment, UnperturbedFollowsConcentratedDirection) {
  const std::vector<double> lam{9, 7, 5, 3, 1};
  Vector b{0.05, 0.05, 0.99, 0.05, 0.05};
  const double s = norm2(b);
  for (double& x : b) x /= s;
  const auto pts = alignment_sweep(lam, b, {0.0});
  EXPECT_EQ(pts[0].index, 3u);
}

TEST(Alignment, SeparatedSpectrumIndexFallsToOne) {
  const auto lam = separated_spectrum({});
  ASSERT_EQ(lam.size(), 50u);
  const Vector b(50, 1.0 / std::sqrt(50.0));
  const auto grid = geomspace(1e-2, 1e7, 300);
  const auto pts = alignment_sweep(lam, b, grid);
  for (std::size_t i = 1; i < pts.size(); ++i) EXPECT_LE(pts[i].index, pts[i - 1].index) << "alpha " << pts[i].alpha;
  EXPECT_EQ(pts.back().index, 1u);
  // Brute force at a few grid points.
  for (std::size_t i : {0ul, 100ul, 200ul, 299ul}) {
    const auto dense = dense_sym_eig(rank_one_dense(lam, b, grid[i]));
    std::size_t best = 0;
    double top = -1.0;
    for (std::size_t k = 0; k < dense.size(); ++k)
      if (std::abs(dot(dense[k].vector, b)) > top) {
        top = std::abs(dot(dense[k].vector, b));
        best = k + 1;
      }
    EXPECT_EQ(pts[i].index, best);
  }
}

TEST(Alignment, BandPredictsIndex) {
  const auto lam = separated_spectrum({});
  const Vector b(50, 1.0 / std::sqrt(50.0));
  for (std::size_t j = 2; j <= 4; ++j) {
    const auto [lo, hi] = alignment_band(lam, j, 5);
    const double mid = std::sqrt(lo * hi);
    EXPECT_EQ(alignment_sweep(lam, b, {mid})[0].index, j) << "band " << j;
  }
}
