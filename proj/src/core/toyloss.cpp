#include "wdeos/toyloss.hpp"

#include <algorithm>
#include <cmath>

#include "wdeos/error.hpp"
#include "wdeos/oscillator.hpp"

namespace wdeos {

void ToyConfig::validate() const {
  if (!(eta_ref > 0.0) || !(alpha > 0.0) || !(beta > 0.0))
    throw InvalidArgument("toy: eta_ref, alpha and beta must be positive");
}

ToyEval toy_eval(const ToyConfig& cfg, const ToyState& s) {
  const double sb = std::sqrt(cfg.beta);
  const double a = 2.0 / cfg.eta_ref + sb * s.y;
  ToyEval e;
  e.loss = a * s.x * s.x / 2.0 - cfg.alpha / sb * s.y - s.z;
  e.grad = {a * s.x, sb * s.x * s.x / 2.0 - cfg.alpha / sb, -1.0};
  e.hessian = DenseMatrix(3, 3);
  e.hessian(0, 0) = a;
  e.hessian(0, 1) = e.hessian(1, 0) = sb * s.x;
  return e;
}

double toy_sharpness(const ToyConfig& cfg, const ToyState& s) {
  return dense_sym_eig(toy_eval(cfg, s).hessian).front().value;
}

ToyState default_toy_init(const ToyConfig& cfg) {
  cfg.validate();
  return {0.1, -1.0 / std::sqrt(cfg.beta), 0.0};
}

ToyRun train_toy(const ToyConfig& cfg, double eta, double gamma, std::size_t steps, const ToyState& init) {
  cfg.validate();
  if (!(eta > 0.0)) throw InvalidArgument("train_toy: eta must be > 0");
  if (!(gamma >= 0.0)) throw InvalidArgument("train_toy: gamma must be >= 0");
  if (steps < 1) throw InvalidArgument("train_toy: steps must be >= 1");

  ToyRun run;
  run.states.reserve(steps + 1);
  run.losses.reserve(steps + 1);
  run.sharpness.reserve(steps + 1);
  ToyState s = init;
  const double shrink = 1.0 - eta * gamma;
  for (std::size_t t = 0;; ++t) {
    const ToyEval e = toy_eval(cfg, s);
    run.states.push_back(s);
    run.losses.push_back(e.loss);
    run.sharpness.push_back(dense_sym_eig(e.hessian).front().value);
    if (t == steps) break;
    s.x = shrink * s.x - eta * e.grad[0];
    s.y = shrink * s.y - eta * e.grad[1];
    s.z = shrink * s.z - eta * e.grad[2];
    const bool z_bad = gamma > 0.0 ? !std::isfinite(s.z) : !(std::abs(s.z) <= kDivergenceCap);
    if (!(std::abs(s.x) <= kDivergenceCap) || !(std::abs(s.y) <= kDivergenceCap) || z_bad) {
      run.diverged = true;
      break;
    }
  }
  return run;
}

CurvatureModel toy_curvature_model(const ToyConfig& cfg) {
  CurvatureModel m;
  m.dim = 3;
  m.loss_and_grad = [cfg](std::span<const double> th) {
    const ToyEval e = toy_eval(cfg, {th[0], th[1], th[2]});
    return LossAndGrad{e.loss, ParamVector(e.grad.begin(), e.grad.end())};
  };
  m.hvp = [cfg](std::span<const double> th, std::span<const double> v) {
    return toy_eval(cfg, {th[0], th[1], th[2]}).hessian.multiply(v);
  };
  return m;
}

ToyProbeReport toy_probe_crosscheck(const ToyConfig& cfg, const ToyRun& run, double gamma, double max_abs_x,
                                    std::size_t stride) {
  cfg.validate();
  if (stride < 1) throw InvalidArgument("toy_probe_crosscheck: stride must be >= 1");
  const CurvatureModel model = toy_curvature_model(cfg);
  ProbeConfig pc;
  pc.solver.tol = 1e-10;
  ToyProbeReport rep;
  for (std::size_t t = 0; t < run.size(); t += stride) {
    const ToyState& s = run.states[t];
    if (std::abs(s.x) > max_abs_x) continue;
    const double theta[3] = {s.x, s.y, s.z};
    const double prev = t > 0 ? run.losses[t - 1] : run.losses[t];
    const CurvatureProbe p = probe(model, theta, gamma, t, prev, pc);
    ToyProbeRow row;
    row.step = t;
    row.alpha_hat = p.alpha;
    row.beta_hat = p.beta;
    row.alpha_rel_err = std::abs(p.alpha - cfg.alpha) / cfg.alpha;
    row.beta_rel_err = std::abs(p.beta - cfg.beta) / cfg.beta;
    row.c_y_crit = p.c_y_crit;
    rep.max_alpha_rel_err = std::max(rep.max_alpha_rel_err, row.alpha_rel_err);
    rep.max_beta_rel_err = std::max(rep.max_beta_rel_err, row.beta_rel_err);
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace wdeos
