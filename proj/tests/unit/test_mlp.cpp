#include <gtest/gtest.h>

#include "test_support.hpp"
#include "wdeos/error.hpp"
#include "wdeos/mlp.hpp"

using namespace wdeos;
using namespace wdeos::testing;

namespace {

ParamVector shifted(std::span<const double> p, std::span<const double> v, double s) {
  ParamVector out(p.begin(), p.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * v[i];
  return out;
}

}  // namespace

TEST(MlpLayout, ParameterCounts) {
  EXPECT_EQ(count_params({{4, 8, 3}, Activation::tanh, 0}), 67u);
  EXPECT_EQ(count_params({{3072, 200, 200, 10}, Activation::relu, 0}), 656810u);
}

TEST(MlpLayout, InitIsDeterministic) {
  Mlp a({{4, 8, 3}, Activation::relu, 7});
  Mlp b({{4, 8, 3}, Activation::relu, 7});
  EXPECT_EQ(a.init_params(), b.init_params());
  Mlp c({{4, 8, 3}, Activation::relu, 8});
  EXPECT_NE(a.init_params(), c.init_params());
}

TEST(MlpLayout, RejectsBadSpec) {
  EXPECT_THROW(Mlp({{4}, Activation::relu, 0}), InvalidArgument);
  EXPECT_THROW(Mlp({{4, 0, 3}, Activation::relu, 0}), InvalidArgument);
}

TEST(MlpLoss, InterpolationGivesZeroLossAndGradient) {
  auto t = tiny_tanh({4, 8, 3}, 16, 1);
  t.batch.targets = t.mlp.forward(t.params, t.batch.inputs);
  const auto lg = t.mlp.loss_and_grad(t.params, t.batch);
  EXPECT_EQ(lg.loss, 0.0);
  for (double g : lg.grad) EXPECT_EQ(g, 0.0);
}

TEST(MlpLoss, LinearModelGradientMatchesClosedForm) {
  const std::size_t n = 12, d = 5, c = 3;
  Mlp mlp({{d, c}, Activation::identity, 2});
  const DenseMatrix x = random_matrix(n, d, 3), y = random_matrix(n, c, 4);
  const ParamVector p = random_vector(mlp.num_params(), 5);
  const auto lg = mlp.loss_and_grad(p, {x, y});
  // residual E = XW + 1bᵀ − Y, grad_W = XᵀE/N, grad_b = 1ᵀE/N.
  DenseMatrix e(n, c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < c; ++o) {
      double s = p[d * c + o] - y(i, o);
      for (std::size_t k = 0; k < d; ++k) s += x(i, k) * p[k * c + o];
      e(i, o) = s;
    }
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t o = 0; o < c; ++o) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += x(i, k) * e(i, o);
      EXPECT_NEAR(lg.grad[k * c + o], s / n, 1e-13);
    }
  for (std::size_t o = 0; o < c; ++o) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += e(i, o);
    EXPECT_NEAR(lg.grad[d * c + o], s / n, 1e-13);
  }
}

TEST(MlpLoss, GradientMatchesFiniteDifferences) {
  auto t = tiny_tanh({4, 8, 3}, 16, 2);
  const auto lg = t.mlp.loss_and_grad(t.params, t.batch);
  Vector fd(t.params.size());
  const double h = 1e-6;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    ParamVector pp = t.params, pm = t.params;
    pp[i] += h;
    pm[i] -= h;
    fd[i] = (t.mlp.loss(pp, t.batch) - t.mlp.loss(pm, t.batch)) / (2 * h);
  }
  EXPECT_LE(rel_err(lg.grad, fd), 1e-6);
}

TEST(MlpLoss, OverflowNamesLayer) {
  Mlp mlp({{2, 3, 1}, Activation::relu, 0});
  ParamVector p(mlp.num_params(), 1e300);
  try {
    mlp.loss(p, {random_matrix(2, 2, 1), random_matrix(2, 1, 2)});
    FAIL() << "expected OverflowError";
  } catch (const OverflowError& e) {
    EXPECT_GE(e.layer(), 1u);
  }
}

TEST(MlpHvp, ZeroDirection) {
  auto t = tiny_tanh({4, 8, 3}, 16, 3);
  const Vector hv = t.mlp.hvp(t.params, t.batch, Vector(t.params.size(), 0.0));
  for (double x : hv) EXPECT_EQ(x, 0.0);
}

TEST(MlpHvp, QuadraticModelHvpIndependentOfTheta) {
  // A deep linear net is not quadratic in θ; the single-layer case is.
  Mlp lin({{5, 3}, Activation::identity, 0});
  LabeledBatch b{random_matrix(10, 5, 1), random_matrix(10, 3, 2)};
  const Vector v = random_vector(lin.num_params(), 4);
  const Vector h1 = lin.hvp(random_vector(lin.num_params(), 5), b, v);
  const Vector h2 = lin.hvp(random_vector(lin.num_params(), 6), b, v);
  EXPECT_LE(rel_err(h1, h2), 1e-13);
}

TEST(MlpHvp, MatchesFiniteDifferenceOfGradient) {
  auto t = tiny_tanh({4, 8, 3}, 16, 4);
  const Vector v = random_vector(t.params.size(), 5);
  const double eps = 1e-4;
  const auto gp = t.mlp.loss_and_grad(shifted(t.params, v, eps), t.batch).grad;
  const auto gm = t.mlp.loss_and_grad(shifted(t.params, v, -eps), t.batch).grad;
  Vector fd(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) fd[i] = (gp[i] - gm[i]) / (2 * eps);
  EXPECT_LE(rel_err(t.mlp.hvp(t.params, t.batch, v), fd), 1e-5);
}

TEST(MlpHvp, Symmetric) {
  auto t = tiny_tanh({4, 8, 3}, 16, 5);
  const Vector u = random_vector(t.params.size(), 6), v = random_vector(t.params.size(), 7);
  const double a = dot(u, t.mlp.hvp(t.params, t.batch, v));
  const double b = dot(v, t.mlp.hvp(t.params, t.batch, u));
  EXPECT_LE(std::abs(a - b) / std::abs(a), 1e-8);
}

TEST(MlpJacobian, ZeroTangent) {
  auto t = tiny_tanh({4, 8, 3}, 6, 6);
  for (double x : t.mlp.jvp(t.params, t.batch.inputs, Vector(t.params.size(), 0.0))) EXPECT_EQ(x, 0.0);
}

TEST(MlpJacobian, JvpMatchesFiniteDifferences) {
  auto t = tiny_tanh({4, 8, 3}, 6, 7);
  const Vector v = random_vector(t.params.size(), 8);
  const double eps = 1e-5;
  const DenseMatrix fp = t.mlp.forward(shifted(t.params, v, eps), t.batch.inputs);
  const DenseMatrix fm = t.mlp.forward(shifted(t.params, v, -eps), t.batch.inputs);
  Vector fd(fp.values().size());
  for (std::size_t i = 0; i < fd.size(); ++i) fd[i] = (fp.values()[i] - fm.values()[i]) / (2 * eps);
  EXPECT_LE(rel_err(t.mlp.jvp(t.params, t.batch.inputs, v), fd), 1e-5);
}

TEST(MlpJacobian, PerSampleSumIsClassSum) {
  auto t = tiny_tanh({4, 8, 3}, 6, 8);
  const Vector v = random_vector(t.params.size(), 9);
  const Vector full = t.mlp.jvp(t.params, t.batch.inputs, v, OutputMode::per_output);
  const Vector summed = t.mlp.jvp(t.params, t.batch.inputs, v, OutputMode::per_sample_sum);
  ASSERT_EQ(summed.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(summed[i], full[3 * i] + full[3 * i + 1] + full[3 * i + 2], 1e-13);
}

TEST(MlpJacobian, AdjointIdentity) {
  auto t = tiny_tanh({4, 8, 3}, 6, 9);
  double worst = 0.0;
  for (OutputMode mode : {OutputMode::per_output, OutputMode::per_sample_sum}) {
    const std::size_t m = mode == OutputMode::per_output ? 18 : 6;
    for (std::uint64_t k = 0; k < 20; ++k) {
      const Vector v = random_vector(t.params.size(), 100 + k), w = random_vector(m, 200 + k);
      const double a = dot(w, t.mlp.jvp(t.params, t.batch.inputs, v, mode));
      const double b = dot(t.mlp.vjp(t.params, t.batch.inputs, w, mode), v);
      worst = std::max(worst, std::abs(a - b) / std::max(std::abs(a), 1e-300));
    }
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(MlpJacobian, RejectsNonFiniteDirection) {
  auto t = tiny_tanh({4, 8, 3}, 6, 10);
  Vector v(t.params.size(), 0.0);
  v[0] = std::nan("");
  EXPECT_THROW(t.mlp.jvp(t.params, t.batch.inputs, v), InvalidArgument);
}
