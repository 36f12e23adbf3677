#ifndef WDEOS_CURVATURE_HPP
#define WDEOS_CURVATURE_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "wdeos/linalg.hpp"
#include "wdeos/mlp.hpp"

namespace wdeos {

/// A twice-differentiable objective seen through its gradient and its
/// Hessian-vector product at an arbitrary point.
struct CurvatureModel {
  std::size_t dim = 0;
  std::function<LossAndGrad(std::span<const double> theta)> loss_and_grad;
  std::function<Vector(std::span<const double> theta, std::span<const double> v)> hvp;
};

CurvatureModel make_curvature_model(const Mlp& mlp, const LabeledBatch& batch);

struct SolverConfig {
  std::size_t max_iters = 64;
  double tol = 1e-6;
  std::uint64_t seed = 0;
  bool use_power_iteration = false;
  std::size_t power_max_iters = 2000;
};

struct SharpnessResult {
  std::vector<double> values;  // descending
  Vector top_vector;           // unit norm, sign-normalized
};

/// Top-k eigenvalues of ∇²L(θ). `warm_start` seeds the Krylov space (e.g.
/// with the previous probe's eigenvector); it does not change the answer
/// beyond solver tolerance.
SharpnessResult sharpness(const CurvatureModel& model, std::span<const double> theta, std::size_t k,
                          const SolverConfig& cfg, std::span<const double> warm_start = {});

SharpnessResult sharpness(const Mlp& mlp, std::span<const double> params, const LabeledBatch& batch,
                          std::size_t k, const SolverConfig& cfg);

/// Default finite-difference step 1e-4·(1 + ||θ||₂/√P).
double default_sharpness_eps(std::span<const double> theta);

/// ∇S ≈ [H(θ+εu)u − H(θ−εu)u] / 2ε, i.e. ∇³L(u,u,·).
Vector sharpness_gradient(const CurvatureModel& model, std::span<const double> theta,
                          std::span<const double> u, double eps);

/// α/γ + γ, or +∞ when γ = 0.
double critical_cy(double alpha, double gamma);

struct CurvatureProbe {
  std::size_t step = 0;
  std::vector<double> lambda_topk;
  bool u_available = false;
  double alpha = 0.0;
  double beta = 0.0;
  double c_x = 0.0;
  double c_y = 0.0;
  double c_y_crit = 0.0;
  double loss = 0.0;
  double delta_loss = 0.0;
  /// α < 0: transient early-training regime, kept in logs.
  bool alpha_negative = false;
};

struct ProbeConfig {
  std::size_t k = 1;
  SolverConfig solver;
  /// <= 0 selects default_sharpness_eps.
  double eps = 0.0;
};

/// One instrumentation record at θ. Also returns the top eigenvector through
/// `top_vector` when non-null so callers can warm-start the next probe.
CurvatureProbe probe(const CurvatureModel& model, std::span<const double> theta, double gamma, std::size_t step,
                     double prev_loss, const ProbeConfig& cfg, std::span<const double> warm_start = {},
                     Vector* top_vector = nullptr);

CurvatureProbe probe(const Mlp& mlp, std::span<const double> params, const LabeledBatch& batch, double gamma,
                     std::size_t step, double prev_loss, const ProbeConfig& cfg);

}  // namespace wdeos

#endif  // WDEOS_CURVATURE_HPP
