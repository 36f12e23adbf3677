#ifndef WDEOS_NTK_HPP
#define WDEOS_NTK_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "wdeos/curvature.hpp"
#include "wdeos/linalg.hpp"
#include "wdeos/mlp.hpp"

namespace wdeos {

struct NtkConfig {
  OutputMode mode = OutputMode::per_output;
  SolverConfig solver;
};

/// v ↦ (1/N)·J·Jᵀ·v on R^M, M = N·C (per_output) or N (per_sample_sum).
LinearOperator ntk_gram_operator(const Mlp& mlp, std::span<const double> params, const DenseMatrix& inputs,
                                 OutputMode mode);

/// v ↦ (1/N)·Jᵀ·J·v on R^P. Shares its nonzero spectrum with the Gram operator.
LinearOperator ntk_param_operator(const Mlp& mlp, std::span<const double> params, const DenseMatrix& inputs,
                                  OutputMode mode);

/// R = H − (1/N)JᵀJ with the per-output Jacobian (the Gauss-Newton split of
/// the mean-squared-error Hessian).
LinearOperator residual_operator(const Mlp& mlp, std::span<const double> params, const LabeledBatch& batch);

double ntk_lambda_max(const Mlp& mlp, std::span<const double> params, const DenseMatrix& inputs,
                      const NtkConfig& cfg = {});

/// ||R||₂ = max(λmax(R), λmax(−R)).
double residual_spectral_norm(const Mlp& mlp, std::span<const double> params, const LabeledBatch& batch,
                              const SolverConfig& solver = {});

struct NtkReport {
  std::size_t n_samples = 0;
  double lambda_max_ntk = 0.0;
  double lambda_max_hessian = 0.0;
  double residual_norm = 0.0;
  double tol = 0.0;
  bool weyl_satisfied = false;
};

/// |λmax(H) − λmax(Θ̂)| <= ||R||₂ + tol. Always uses the per-output Gram
/// matrix since that is the one appearing in the Hessian decomposition.
NtkReport weyl_check(const Mlp& mlp, std::span<const double> params, const LabeledBatch& batch,
                     const SolverConfig& solver = {}, double tol = 1e-8);

struct NtkConvergenceRow {
  std::size_t n = 0;
  double lambda_max_unnormalized = 0.0;  // λmax(JJᵀ)
  double lambda_max = 0.0;               // λmax((1/N)JJᵀ)
};

/// λmax of the Gram matrix on the first n rows of `inputs` for each n.
std::vector<NtkConvergenceRow> ntk_convergence(const Mlp& mlp, std::span<const double> params,
                                               const DenseMatrix& inputs, const std::vector<std::size_t>& n_grid,
                                               const NtkConfig& cfg = {});

/// diag(λ) + α·b·bᵀ.
struct RankOneModel {
  std::vector<double> spectrum;  // descending
  Vector b;                      // unit norm
  double alpha = 0.0;
};

/// Eigenpairs of the rank-one update, descending, from the secular equation
/// 1 + α Σ b_i²/(λ_i − μ) = 0 after deflating zero components and repeated
/// eigenvalues.
std::vector<EigenPair> rank_one_eigs(const RankOneModel& model);

/// Secular function value at μ, relative to the size of its terms. Used to
/// check roots.
double secular_residual(const RankOneModel& model, double mu);

struct AlignmentPoint {
  double alpha = 0.0;
  std::size_t index = 0;  // 1-based, eigenvalues ordered descending
  double alignment = 0.0; // |<q_index, b>|
};

/// For each α, the eigenvector of diag(λ) + α·b·bᵀ most aligned with b.
std::vector<AlignmentPoint> alignment_sweep(const std::vector<double>& spectrum, const Vector& b,
                                            const std::vector<double>& alpha_grid);

/// Leading eigenvalues floor·ratio^(leading−i), i = 1..leading, above a bulk
/// drawn uniform on [0.5, 1.5]·bulk_scale·n^0.3. Descending.
struct SeparatedSpectrum {
  std::size_t n = 50;
  std::size_t leading = 5;
  double ratio = 10.0;
  double floor = 100.0;
  double bulk_scale = 1.0;
  std::uint64_t seed = 0;
};

std::vector<double> separated_spectrum(const SeparatedSpectrum& s);

/// (λ_j − λ_k, λ_{j−1} − λ_k) for 1-based 2 <= j <= k: the α range in which
/// the j-th eigenvector is expected to be the most aligned one.
std::pair<double, double> alignment_band(const std::vector<double>& spectrum, std::size_t j, std::size_t k);

}  // namespace wdeos

#endif  // WDEOS_NTK_HPP
