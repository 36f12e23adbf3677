#ifndef WDEOS_OSCILLATOR_HPP
#define WDEOS_OSCILLATOR_HPP

#include <cstddef>
#include <optional>
#include <vector>

namespace wdeos {

/// Two-variable model of gradient descent with weight decay at the edge of
/// stability: x is the displacement along the top Hessian eigenvector, y the
/// sharpness deviation from 2/η.
struct OscillatorConfig {
  double eta = 0.01;
  double gamma = 0.0;
  double alpha = 1.0;  // progressive-sharpening force
  double beta = 1.0;   // ||∇S||²
  double c_x = 0.0;    // <u, θ*>
  double c_y = 0.0;    // <∇S, θ*>
  double x0 = 0.01;
  double y0 = -1.0;

  void validate() const;
};

struct OscillatorPrediction {
  double y_star = 0.0;       // resting y of the period-2 cycle, −γ
  double bounce_mean = 0.0;  // M = −ηγc_x/2
  std::optional<double> amplitude;
  double c_y_crit = 0.0;  // +∞ when γ = 0
  bool collapsed = false;
  double y_star_collapsed = 0.0;  // α/γ − c_y, meaningful when collapsed
  double decay_rate = 0.0;        // γ/2
  double omega_d = 0.0;           // √(8α+7γ²)/2
};

struct Trajectory {
  std::vector<double> times;
  std::vector<double> xs;
  std::vector<double> ys;
  bool diverged = false;

  std::size_t size() const { return times.size(); }
};

/// Divergence cap on |x| and |y|.
inline constexpr double kDivergenceCap = 1e12;

/// Iterates the exact map
///   x' = −x(1 + ηy + ηγ) − ηγc_x
///   y' = (1 − ηγ)y − ηγc_y + ηα − ηβx²/2
/// for `steps` steps. times are step indices 0..steps.
Trajectory simulate_discrete(const OscillatorConfig& cfg, std::size_t steps);

OscillatorPrediction predict(const OscillatorConfig& cfg);

/// Default envelope step min(0.01, 1/(10·ω_d)).
double default_envelope_step(const OscillatorConfig& cfg);

/// RK4 integration of dX/dτ = X(Y+γ), dY/dτ = α − βX²/2 − γY − γc_y from
/// (x0, y0). c_x is sub-leading at this scale and dropped. dtau <= 0 selects
/// default_envelope_step.
Trajectory simulate_envelope(const OscillatorConfig& cfg, double tau_max, double dtau = 0.0);

/// Copy of `traj` with times multiplied by `factor` (e.g. η for τ = ηt).
Trajectory rescale_time(Trajectory traj, double factor);

struct LimitCycle {
  double amplitude = 0.0;  // half the mean |x_{t+1} − x_t| over the tail
  double mean_x = 0.0;
  double y_rest = 0.0;
};

LimitCycle measure_limit_cycle(const Trajectory& traj, double tail_fraction);

struct DecayFit {
  double rate = 0.0;       // exponential decay rate of y − y_rest extrema
  double frequency = 0.0;  // angular frequency, π / mean extremum spacing
  std::size_t extrema = 0;
};

/// Fits y_rest + A e^{−rate·t} cos(ωt + φ) to the y series through its local
/// extrema. y_rest is the mean of the final 10%.
DecayFit fit_decay(const Trajectory& traj);

/// Same fit on an arbitrary series sampled at `times`.
DecayFit fit_decay(const std::vector<double>& times, const std::vector<double>& values);

}  // namespace wdeos

#endif  // WDEOS_OSCILLATOR_HPP
