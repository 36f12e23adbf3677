#ifndef WDEOS_TOYLOSS_HPP
#define WDEOS_TOYLOSS_HPP

#include <array>
#include <cstddef>
#include <vector>

#include "wdeos/curvature.hpp"
#include "wdeos/linalg.hpp"

namespace wdeos {

/// Three-variable loss with one unstable direction:
///   L(x, y, z) = (2/η_ref + √β·y)·x²/2 − (α/√β)·y − z
/// so that S ≈ 2/η_ref + √β·y, ∇S ≈ (0, √β, 0) and −⟨∇L, ∇S⟩ ≈ α.
struct ToyConfig {
  double eta_ref = 0.01;
  double alpha = 1.0;
  double beta = 1.0;

  void validate() const;
};

struct ToyState {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

struct ToyEval {
  double loss = 0.0;
  std::array<double, 3> grad{};
  DenseMatrix hessian;  // 3x3
};

ToyEval toy_eval(const ToyConfig& cfg, const ToyState& s);

/// λmax of the exact Hessian.
double toy_sharpness(const ToyConfig& cfg, const ToyState& s);

/// (0.1, −1/√β, 0): sharpness starts one unit of √β·y below 2/η_ref.
ToyState default_toy_init(const ToyConfig& cfg);

struct ToyRun {
  std::vector<ToyState> states;  // steps + 1 entries, including the start
  std::vector<double> losses;
  std::vector<double> sharpness;
  bool diverged = false;

  std::size_t size() const { return states.size(); }
};

/// GD with decoupled weight decay, θ ← (1−ηγ)θ − η∇L. z is excluded from the
/// divergence test when γ > 0 (it relaxes to 1/γ).
ToyRun train_toy(const ToyConfig& cfg, double eta, double gamma, std::size_t steps, const ToyState& init);

/// Exact-derivative model for the curvature machinery.
CurvatureModel toy_curvature_model(const ToyConfig& cfg);

struct ToyProbeRow {
  std::size_t step = 0;
  double alpha_hat = 0.0;
  double beta_hat = 0.0;
  double alpha_rel_err = 0.0;
  double beta_rel_err = 0.0;
  double c_y_crit = 0.0;
};

struct ToyProbeReport {
  std::vector<ToyProbeRow> rows;
  double max_alpha_rel_err = 0.0;
  double max_beta_rel_err = 0.0;
};

/// Runs the generic probe on states of `run` with |x| <= max_abs_x (the
/// sharpening phase) and compares α̂, β̂ with the configured α, β.
ToyProbeReport toy_probe_crosscheck(const ToyConfig& cfg, const ToyRun& run, double gamma,
                                    double max_abs_x = 0.01, std::size_t stride = 1);

}  // namespace wdeos

#endif  // WDEOS_TOYLOSS_HPP
