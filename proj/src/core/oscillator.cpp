#include "wdeos/oscillator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "wdeos/curvature.hpp"
#include "wdeos/error.hpp"

namespace wdeos {

void OscillatorConfig::validate() const {
  if (!(eta > 0.0)) throw InvalidArgument("oscillator: eta must be > 0");
  if (!(gamma >= 0.0)) throw InvalidArgument("oscillator: gamma must be >= 0");
  if (!(beta > 0.0)) throw InvalidArgument("oscillator: beta must be > 0");
  for (double v : {alpha, c_x, c_y, x0, y0})
    if (!std::isfinite(v)) throw InvalidArgument("oscillator: non-finite parameter");
}

Trajectory simulate_discrete(const OscillatorConfig& cfg, std::size_t steps) {
  cfg.validate();
  if (steps < 1) throw InvalidArgument("simulate_discrete: steps must be >= 1");
  const double eta = cfg.eta, g = cfg.gamma;
  Trajectory tr;
  tr.times.reserve(steps + 1);
  tr.xs.reserve(steps + 1);
  tr.ys.reserve(steps + 1);
  double x = cfg.x0, y = cfg.y0;
  tr.times.push_back(0.0);
  tr.xs.push_back(x);
  tr.ys.push_back(y);
  for (std::size_t t = 1; t <= steps; ++t) {
    const double xn = -x * (1.0 + eta * y + eta * g) - eta * g * cfg.c_x;
    const double yn = (1.0 - eta * g) * y - eta * g * cfg.c_y + eta * cfg.alpha - eta * cfg.beta * x * x / 2.0;
    x = xn;
    y = yn;
    tr.times.push_back(static_cast<double>(t));
    tr.xs.push_back(x);
    tr.ys.push_back(y);
    if (!(std::abs(x) <= kDivergenceCap) || !(std::abs(y) <= kDivergenceCap)) {
      tr.diverged = true;
      break;
    }
  }
  return tr;
}

OscillatorPrediction predict(const OscillatorConfig& cfg) {
  cfg.validate();
  const double a = cfg.alpha, b = cfg.beta, g = cfg.gamma;
  OscillatorPrediction p;
  p.y_star = -g;
  p.bounce_mean = -cfg.eta * g * cfg.c_x / 2.0;
  p.c_y_crit = critical_cy(a, g);
  p.collapsed = cfg.c_y >= p.c_y_crit;
  if (p.collapsed) {
    p.y_star_collapsed = a / g - cfg.c_y;
  } else {
    p.amplitude = std::sqrt(std::max(0.0, 2.0 * (a + g * g - g * cfg.c_y) / b));
    p.y_star_collapsed = g > 0.0 ? a / g - cfg.c_y : -std::numeric_limits<double>::infinity();
  }
  p.decay_rate = g / 2.0;
  p.omega_d = std::sqrt(std::max(0.0, 8.0 * a + 7.0 * g * g)) / 2.0;
  return p;
}

double default_envelope_step(const OscillatorConfig& cfg) {
  const double w = predict(cfg).omega_d;
  return w > 0.0 ? std::min(0.01, 1.0 / (10.0 * w)) : 0.01;
}

Trajectory simulate_envelope(const OscillatorConfig& cfg, double tau_max, double dtau) {
  cfg.validate();
  if (dtau <= 0.0) dtau = default_envelope_step(cfg);
  if (!(tau_max > 0.0)) throw InvalidArgument("simulate_envelope: tau_max must be > 0");
  if (cfg.x0 < 0.0) throw InvalidArgument("simulate_envelope: X(0) must be >= 0");

  const double a = cfg.alpha, b = cfg.beta, g = cfg.gamma, cy = cfg.c_y;
  using State = std::array<double, 2>;
  auto f = [&](const State& s) -> State {
    return {s[0] * (s[1] + g), a - b * s[0] * s[0] / 2.0 - g * s[1] - g * cy};
  };
  const auto n = static_cast<std::size_t>(std::llround(tau_max / dtau));
  Trajectory tr;
  tr.times.reserve(n + 1);
  tr.xs.reserve(n + 1);
  tr.ys.reserve(n + 1);
  State s{cfg.x0, cfg.y0};
  tr.times.push_back(0.0);
  tr.xs.push_back(s[0]);
  tr.ys.push_back(s[1]);
  for (std::size_t i = 1; i <= n; ++i) {
    const State k1 = f(s);
    const State k2 = f({s[0] + 0.5 * dtau * k1[0], s[1] + 0.5 * dtau * k1[1]});
    const State k3 = f({s[0] + 0.5 * dtau * k2[0], s[1] + 0.5 * dtau * k2[1]});
    const State k4 = f({s[0] + dtau * k3[0], s[1] + dtau * k3[1]});
    for (int c = 0; c < 2; ++c) s[c] += dtau / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
    if (!std::isfinite(s[0]) || !std::isfinite(s[1])) {
      std::ostringstream msg;
      msg << "simulate_envelope: integrator blew up at tau = " << static_cast<double>(i) * dtau;
      throw DivergenceError(msg.str(), i);
    }
    tr.times.push_back(static_cast<double>(i) * dtau);
    tr.xs.push_back(s[0]);
    tr.ys.push_back(s[1]);
  }
  return tr;
}

Trajectory rescale_time(Trajectory traj, double factor) {
  for (double& t : traj.times) t *= factor;
  return traj;
}

LimitCycle measure_limit_cycle(const Trajectory& traj, double tail_fraction) {
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0))
    throw InvalidArgument("measure_limit_cycle: tail_fraction must lie in (0, 1]");
  auto tail = static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(traj.size())));
  tail = std::min(tail, traj.size());
  tail -= tail % 2;  // whole period-2 cycles
  if (tail < 100) throw InvalidArgument("measure_limit_cycle: tail shorter than 100 points");
  const std::size_t start = traj.size() - tail;
  LimitCycle lc;
  double jump = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t i = start; i < traj.size(); ++i) {
    sx += traj.xs[i];
    sy += traj.ys[i];
    if (i + 1 < traj.size()) jump += std::abs(traj.xs[i + 1] - traj.xs[i]);
  }
  lc.amplitude = 0.5 * jump / static_cast<double>(tail - 1);
  lc.mean_x = sx / static_cast<double>(tail);
  lc.y_rest = sy / static_cast<double>(tail);
  return lc;
}

namespace {

// Indices of strict local extrema; a plateau counts once, at its first index.
std::vector<std::size_t> local_extrema(const std::vector<double>& d) {
  std::vector<std::size_t> out;
  std::size_t i = 1;
  while (i + 1 < d.size()) {
    std::size_t j = i;
    while (j + 1 < d.size() && d[j + 1] == d[i]) ++j;
    if (j + 1 >= d.size()) break;
    const bool is_max = d[i] > d[i - 1] && d[j] > d[j + 1];
    const bool is_min = d[i] < d[i - 1] && d[j] < d[j + 1];
    if (is_max || is_min) out.push_back(i);
    i = j + 1;
  }
  return out;
}

}  // namespace

DecayFit fit_decay(const std::vector<double>& times, const std::vector<double>& values) {
  if (times.size() != values.size()) throw InvalidArgument("fit_decay: length mismatch");
  const std::size_t n = values.size();
  if (n < 20) throw InvalidArgument("fit_decay: series too short");
  const auto tail = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(n)));
  double rest = 0.0;
  for (std::size_t i = n - tail; i < n; ++i) rest += values[i];
  rest /= static_cast<double>(tail);
  double tail_var = 0.0;
  for (std::size_t i = n - tail; i < n; ++i) tail_var += (values[i] - rest) * (values[i] - rest);
  const double tail_sd = std::sqrt(tail_var / static_cast<double>(tail));

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = values[i] - rest;
  const auto ext = local_extrema(d);
  double biggest = 0.0;
  for (std::size_t i : ext) biggest = std::max(biggest, std::abs(d[i]));
  // Extrema at the level of the residual tail motion are "settled".
  const double floor = std::max(1e-6 * biggest, 10.0 * tail_sd);

  std::vector<double> t, logm;
  for (std::size_t i : ext) {
    if (std::abs(d[i]) <= floor) break;
    t.push_back(times[i]);
    logm.push_back(std::log(std::abs(d[i])));
  }
  if (t.size() < 5) throw InvalidArgument("fit_decay: fewer than 5 usable extrema");

  const double m = static_cast<double>(t.size());
  double st = 0.0, sl = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    st += t[i];
    sl += logm[i];
  }
  const double tm = st / m, lm = sl / m;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    num += (t[i] - tm) * (logm[i] - lm);
    den += (t[i] - tm) * (t[i] - tm);
  }
  DecayFit fit;
  fit.rate = -num / den;
  const double spacing = (t.back() - t.front()) / (m - 1.0);
  fit.frequency = M_PI / spacing;
  fit.extrema = t.size();
  return fit;
}

DecayFit fit_decay(const Trajectory& traj) { return fit_decay(traj.times, traj.ys); }

}  // namespace wdeos
