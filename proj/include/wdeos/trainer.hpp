#ifndef WDEOS_TRAINER_HPP
#define WDEOS_TRAINER_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wdeos/curvature.hpp"
#include "wdeos/mlp.hpp"
#include "wdeos/ntk.hpp"

namespace wdeos {

struct RunConfig {
  MlpSpec spec;
  double eta = 0.01;
  double gamma = 0.0;
  std::size_t steps = 1000;
  std::size_t probe_every = 25;
  std::size_t lanczos_k = 1;
  /// Initialization seed; overrides spec.init_seed. Also seeds the solver.
  std::uint64_t seed = 0;
  std::size_t warmup_ignore = 50;
  SolverConfig solver;
  /// Disable to train without instrumentation (the loss series is identical).
  bool probes = true;

  void validate() const;
};

struct RunLog {
  std::vector<double> losses;  // L(θ_t) for every executed step t
  std::vector<CurvatureProbe> probes;
  ParamVector final_params;
  std::string digest;  // FNV-1a over final params and losses
  bool diverged = false;
  std::optional<std::size_t> diverged_at;
  std::string divergence_reason;

  /// λmax of every probe, in order.
  std::vector<double> sharpness_series() const;
};

struct StepResult {
  ParamVector params;
  double loss = 0.0;
};

/// θ' = (1 − ηγ)θ − η∇L(θ) with one gradient evaluation. Throws
/// DivergenceError on a non-finite loss.
StepResult gd_wd_step(const Mlp& mlp, std::span<const double> params, const LabeledBatch& batch, double eta,
                      double gamma, std::size_t step = 0);

RunLog run(const RunConfig& cfg, const LabeledBatch& batch);

/// Smallest t >= warmup_ignore with L_{t+1} > L_t.
std::optional<std::size_t> detect_onset(std::span<const double> losses, std::size_t warmup_ignore);

/// Mean of the last ⌈10%⌉ entries.
double stabilization_level(std::span<const double> series);

/// c_y > c_y_crit at some probe past warmup with α > 0, before λmax first
/// reaches `reach_fraction`·(2/η − γ).
bool crossed_before_reaching(const RunLog& log, const RunConfig& cfg, double reach_fraction = 0.95);

/// Mean ΔL over every full window of `window` steps after `from`; returns the
/// largest such mean.
double max_window_mean_delta(std::span<const double> losses, std::size_t from, std::size_t window);

/// Loss averaged over consecutive disjoint windows of `window` steps from
/// `from`; returns the largest per-step change between neighbouring window
/// means. Smooths out period-2 spikes that dominate endpoint differences.
double max_block_mean_delta(std::span<const double> losses, std::size_t from, std::size_t window);

struct SweepOptions {
  std::size_t jobs = 1;
  bool compute_ntk = false;
  NtkConfig ntk;
};

struct SweepRow {
  double gamma = 0.0;
  std::uint64_t seed = 0;
  std::optional<std::size_t> onset;
  std::optional<double> stabilization;
  std::optional<double> max_sharpness;
  bool crossed = false;
  bool diverged = false;
  std::optional<double> ntk_lambda_max;
  std::string digest;
  std::string error;  // empty on success
};

/// One run per (γ, seed) cell, executed on up to `jobs` threads. Rows come
/// back ordered by γ then seed regardless of completion order. Logs are
/// stored in `logs` (same order) when non-null.
std::vector<SweepRow> sweep(const RunConfig& base, const LabeledBatch& batch, const std::vector<double>& gammas,
                            const std::vector<std::uint64_t>& seeds, const SweepOptions& opts = {},
                            std::vector<RunLog>* logs = nullptr);

}  // namespace wdeos

#endif  // WDEOS_TRAINER_HPP
