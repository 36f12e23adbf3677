#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_support.hpp"
#include "wdeos/oscillator.hpp"
#include "wdeos/toyloss.hpp"
#include "wdeos/trainer.hpp"

using namespace wdeos;
using namespace wdeos::testing;

namespace {

double tail_jump(const std::vector<double>& s) {
  const std::size_t tail = s.size() / 10;
  double j = 0.0;
  for (std::size_t i = s.size() - tail; i + 1 < s.size(); ++i) j += std::abs(s[i + 1] - s[i]);
  return j / static_cast<double>(tail - 1);
}

}  // namespace

TEST(ToyEval, AnalyticAtZeroDisplacement) {
  const ToyConfig cfg{0.01, 2.0, 4.0};
  const ToyEval e = toy_eval(cfg, {0.0, 0.5, 3.0});
  EXPECT_DOUBLE_EQ(e.grad[0], 0.0);
  EXPECT_DOUBLE_EQ(e.grad[1], -1.0);
  EXPECT_DOUBLE_EQ(e.grad[2], -1.0);
  EXPECT_DOUBLE_EQ(e.hessian(0, 0), 201.0);
  EXPECT_EQ(e.hessian(0, 1), 0.0);
  EXPECT_EQ(e.hessian(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(toy_sharpness(cfg, {0.0, 0.0, 0.0}), 200.0);
}

TEST(ToyEval, DerivativesMatchFiniteDifferences) {
  const ToyConfig cfg{0.01, 1.5, 2.0};
  const double h = 1e-5;
  for (std::uint64_t k = 0; k < 20; ++k) {
    const Vector s = random_vector(3, 40 + k);
    const ToyEval e = toy_eval(cfg, {s[0], s[1], s[2]});
    Vector fd(3), an(e.grad.begin(), e.grad.end());
    for (int i = 0; i < 3; ++i) {
      Vector p = s, m = s;
      p[i] += h;
      m[i] -= h;
      const ToyEval ep = toy_eval(cfg, {p[0], p[1], p[2]}), em = toy_eval(cfg, {m[0], m[1], m[2]});
      fd[i] = (ep.loss - em.loss) / (2 * h);
      for (int j = 0; j < 3; ++j) {
        const double hij = (ep.grad[j] - em.grad[j]) / (2 * h);
        EXPECT_NEAR(e.hessian(j, i), hij, 1e-8 * std::max(1.0, std::abs(hij)));
      }
    }
    EXPECT_LE(rel_err(an, fd), 1e-8);
  }
}

TEST(ToyTrain, StabilizesAtEdgeWithoutWeightDecay) {
  const ToyConfig cfg;
  const ToyRun r = train_toy(cfg, 0.01, 0.0, 20000, default_toy_init(cfg));
  ASSERT_FALSE(r.diverged);
  EXPECT_LE(std::abs(stabilization_level(r.sharpness) - 200.0) / 200.0, 0.01);
}

TEST(ToyTrain, WeightDecayShiftsAndDampsTheEdge) {
  const ToyConfig cfg;
  const ToyRun r0 = train_toy(cfg, 0.01, 0.0, 20000, default_toy_init(cfg));
  const ToyRun r1 = train_toy(cfg, 0.01, 0.1, 20000, default_toy_init(cfg));
  EXPECT_NEAR(stabilization_level(r1.sharpness), 199.9, 0.05);
  EXPECT_LT(tail_jump(r1.sharpness), tail_jump(r0.sharpness));
}

TEST(ToyTrain, SharpnessOscillationDecaysAtHalfGamma) {
  const ToyConfig cfg;
  const ToyRun r = train_toy(cfg, 0.01, 0.1, 20000, default_toy_init(cfg));
  std::vector<double> tau(r.size());
  for (std::size_t i = 0; i < tau.size(); ++i) tau[i] = 0.01 * static_cast<double>(i);
  const DecayFit f = fit_decay(tau, r.sharpness);
  EXPECT_LE(std::abs(f.rate - 0.05) / 0.05, 0.25);
}

TEST(ToyTrain, SharpnessTracksTraceTermForSmallDisplacement) {
  const ToyConfig cfg;
  const ToyRun r = train_toy(cfg, 0.01, 0.1, 5000, default_toy_init(cfg));
  for (std::size_t i = 0; i < r.size(); ++i) {
    const ToyState& s = r.states[i];
    if (std::abs(s.x) >= 0.1) continue;
    const double trace = 2.0 / cfg.eta_ref + std::sqrt(cfg.beta) * s.y;
    // 2×2 block [[a, √βx], [√βx, 0]]: λ = a/2 + √(a²/4 + βx²) = a + βx²/a + …
    EXPECT_NEAR(r.sharpness[i], trace, 2.0 * cfg.beta * s.x * s.x / trace + 1e-12);
  }
}

TEST(ToyTrain, AgreesWithOscillatorReduction) {
  const ToyConfig cfg;
  for (double g : {0.0, 0.1}) {
    const ToyRun r = train_toy(cfg, 0.01, g, 20000, default_toy_init(cfg));
    OscillatorConfig oc;
    oc.eta = 0.01;
    oc.gamma = g;
    oc.x0 = 0.1;
    oc.y0 = -1.0;
    const LimitCycle lc = measure_limit_cycle(simulate_discrete(oc, 20000), 0.1);
    const double level = stabilization_level(r.sharpness);
    EXPECT_LE(std::abs(level - (200.0 + lc.y_rest)) / level, 1e-3) << "gamma " << g;
  }
  OscillatorConfig oc;
  oc.eta = 0.01;
  oc.gamma = 0.1;
  oc.x0 = 0.1;
  oc.y0 = -1.0;
  const ToyRun r = train_toy(cfg, 0.01, 0.1, 20000, default_toy_init(cfg));
  std::vector<double> tau(r.size());
  for (std::size_t i = 0; i < tau.size(); ++i) tau[i] = 0.01 * static_cast<double>(i);
  const double toy_rate = fit_decay(tau, r.sharpness).rate;
  const double osc_rate = fit_decay(rescale_time(simulate_discrete(oc, 20000), 0.01)).rate;
  EXPECT_LE(std::abs(toy_rate - osc_rate) / osc_rate, 0.20);
}

TEST(ToyProbe, ExactAtZeroDisplacement) {
  const ToyConfig cfg{0.01, 1.0, 2.0};
  ToyRun r;
  r.states = {{0.0, -0.5, 0.0}};
  r.losses = {toy_eval(cfg, r.states[0]).loss};
  r.sharpness = {toy_sharpness(cfg, r.states[0])};
  const ToyProbeReport rep = toy_probe_crosscheck(cfg, r, 0.0);
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_NEAR(rep.rows[0].beta_hat, 2.0, 1e-8);
  EXPECT_TRUE(std::isinf(rep.rows[0].c_y_crit));
}

TEST(ToyProbe, SharpeningPhaseRecoversAlpha) {
  const ToyConfig cfg;
  const ToyRun r = train_toy(cfg, 0.01, 0.0, 20000, default_toy_init(cfg));
  const ToyProbeReport rep = toy_probe_crosscheck(cfg, r, 0.0, 0.01, 1);
  ASSERT_GT(rep.rows.size(), 10u);
  EXPECT_LE(rep.max_alpha_rel_err, 0.02);
  EXPECT_LE(rep.max_beta_rel_err, 0.02);
}
