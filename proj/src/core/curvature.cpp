#include "wdeos/curvature.hpp"

#include <cmath>
#include <limits>

#include "wdeos/error.hpp"

namespace wdeos {

CurvatureModel make_curvature_model(const Mlp& mlp, const LabeledBatch& batch) {
  CurvatureModel m;
  m.dim = mlp.num_params();
  m.loss_and_grad = [&mlp, &batch](std::span<const double> theta) { return mlp.loss_and_grad(theta, batch); };
  m.hvp = [&mlp, &batch](std::span<const double> theta, std::span<const double> v) {
    return mlp.hvp(theta, batch, v);
  };
  return m;
}

SharpnessResult sharpness(const CurvatureModel& model, std::span<const double> theta, std::size_t k,
                          const SolverConfig& cfg, std::span<const double> warm_start) {
  if (k < 1) throw InvalidArgument("sharpness: k must be >= 1");
  if (theta.size() != model.dim) throw InvalidArgument("sharpness: parameter length mismatch");
  LinearOperator op;
  op.dim = model.dim;
  op.apply = [&model, theta](std::span<const double> in, std::span<double> out) {
    const Vector hv = model.hvp(theta, in);
    std::copy(hv.begin(), hv.end(), out.begin());
  };

  SharpnessResult r;
  if (cfg.use_power_iteration) {
    if (k != 1) throw InvalidArgument("sharpness: power iteration supports k = 1 only");
    PowerOptions po;
    po.max_iters = cfg.power_max_iters;
    po.tol = cfg.tol;
    po.seed = cfg.seed;
    EigenPair p = power_iteration(op, po);
    r.values = {p.value};
    r.top_vector = std::move(p.vector);
    return r;
  }
  LanczosOptions lo;
  lo.k = k;
  lo.max_iters = cfg.max_iters;
  lo.tol = cfg.tol;
  lo.seed = cfg.seed;
  lo.start = warm_start;
  auto pairs = lanczos_topk(op, lo);
  for (const auto& p : pairs) r.values.push_back(p.value);
  r.top_vector = std::move(pairs.front().vector);
  return r;
}

SharpnessResult sharpness(const Mlp& mlp, std::span<const double> params, const LabeledBatch& batch,
                          std::size_t k, const SolverConfig& cfg) {
  return sharpness(make_curvature_model(mlp, batch), params, k, cfg);
}

double default_sharpness_eps(std::span<const double> theta) {
  if (theta.empty()) return 1e-4;
  return 1e-4 * (1.0 + norm2(theta) / std::sqrt(static_cast<double>(theta.size())));
}

Vector sharpness_gradient(const CurvatureModel& model, std::span<const double> theta, std::span<const double> u,
                          double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("sharpness_gradient: eps must be positive");
  if (u.size() != theta.size() || theta.size() != model.dim)
    throw InvalidArgument("sharpness_gradient: dimension mismatch");
  if (std::abs(norm2(u) - 1.0) > 1e-8) throw InvalidArgument("sharpness_gradient: u must be a unit vector");

  Vector plus(theta.begin(), theta.end()), minus(theta.begin(), theta.end());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    plus[i] += eps * u[i];
    minus[i] -= eps * u[i];
  }
  // The realized step is what floating point actually moved; if most of it
  // was rounded away the difference quotient is meaningless.
  double realized = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) realized += (plus[i] - minus[i]) * (plus[i] - minus[i]);
  if (std::sqrt(realized) < eps)
    throw InvalidArgument("sharpness_gradient: degenerate step, eps is below parameter resolution");

  const Vector hp = model.hvp(plus, u);
  const Vector hm = model.hvp(minus, u);
  Vector g(theta.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (hp[i] - hm[i]) / (2.0 * eps);
  return g;
}

double critical_cy(double alpha, double gamma) {
  if (gamma == 0.0) return std::numeric_limits<double>::infinity();
  return alpha / gamma + gamma;
}

CurvatureProbe probe(const CurvatureModel& model, std::span<const double> theta, double gamma, std::size_t step,
                     double prev_loss, const ProbeConfig& cfg, std::span<const double> warm_start,
                     Vector* top_vector) {
  if (gamma < 0.0) throw InvalidArgument("probe: gamma must be >= 0");
  const LossAndGrad lg = model.loss_and_grad(theta);
  SharpnessResult sh = sharpness(model, theta, cfg.k, cfg.solver, warm_start);
  const double eps = cfg.eps > 0.0 ? cfg.eps : default_sharpness_eps(theta);
  const Vector grad_s = sharpness_gradient(model, theta, sh.top_vector, eps);

  CurvatureProbe p;
  p.step = step;
  p.lambda_topk = sh.values;
  p.u_available = true;
  p.alpha = -dot(lg.grad, grad_s);
  p.beta = dot(grad_s, grad_s);
  p.c_x = dot(sh.top_vector, theta);
  p.c_y = dot(grad_s, theta);
  p.c_y_crit = critical_cy(p.alpha, gamma);
  p.loss = lg.loss;
  p.delta_loss = lg.loss - prev_loss;
  p.alpha_negative = p.alpha < 0.0;
  if (top_vector) *top_vector = std::move(sh.top_vector);
  return p;
}

CurvatureProbe probe(const Mlp& mlp, std::span<const double> params, const LabeledBatch& batch, double gamma,
                     std::size_t step, double prev_loss, const ProbeConfig& cfg) {
  return probe(make_curvature_model(mlp, batch), params, gamma, step, prev_loss, cfg);
}

}  // namespace wdeos
