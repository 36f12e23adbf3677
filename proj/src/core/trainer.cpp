#include "wdeos/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <thread>

#include "wdeos/error.hpp"

namespace wdeos {

void RunConfig::validate() const {
  spec.validate();
  if (!(eta > 0.0)) throw InvalidArgument("run: eta must be > 0");
  if (!(gamma >= 0.0)) throw InvalidArgument("run: gamma must be >= 0");
  if (probe_every < 1) throw InvalidArgument("run: probe_every must be >= 1");
  if (lanczos_k < 1) throw InvalidArgument("run: lanczos_k must be >= 1");
  if (steps < 1) throw InvalidArgument("run: steps must be >= 1");
}

std::vector<double> RunLog::sharpness_series() const {
  std::vector<double> s;
  s.reserve(probes.size());
  for (const auto& p : probes) s.push_back(p.lambda_topk.front());
  return s;
}

StepResult gd_wd_step(const Mlp& mlp, std::span<const double> params, const LabeledBatch& batch, double eta,
                      double gamma, std::size_t step) {
  const LossAndGrad lg = mlp.loss_and_grad(params, batch);
  if (!std::isfinite(lg.loss)) throw DivergenceError("non-finite loss", step);
  StepResult r;
  r.loss = lg.loss;
  r.params.resize(params.size());
  const double shrink = 1.0 - eta * gamma;
  for (std::size_t i = 0; i < params.size(); ++i) r.params[i] = shrink * params[i] - eta * lg.grad[i];
  return r;
}

namespace {

std::string fnv1a_digest(const ParamVector& params, const std::vector<double>& losses) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const std::vector<double>& v) {
    for (double x : v) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &x, sizeof x);
      for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
    }
  };
  feed(params);
  feed(losses);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

RunLog run(const RunConfig& cfg, const LabeledBatch& batch) {
  cfg.validate();
  MlpSpec spec = cfg.spec;
  spec.init_seed = cfg.seed;
  const Mlp mlp(spec);
  if (batch.inputs.cols() != spec.input_dim() || batch.targets.cols() != spec.output_dim())
    throw InvalidArgument("run: batch shape does not match the network");

  const CurvatureModel model = make_curvature_model(mlp, batch);
  ProbeConfig pc;
  pc.k = cfg.lanczos_k;
  pc.solver = cfg.solver;
  pc.solver.seed = cfg.seed;

  RunLog log;
  log.losses.reserve(cfg.steps);
  ParamVector theta = mlp.init_params();
  Vector top;
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    try {
      if (cfg.probes && t % cfg.probe_every == 0) {
        const double prev = log.losses.empty() ? mlp.loss(theta, batch) : log.losses.back();
        Vector next_top;
        log.probes.push_back(probe(model, theta, cfg.gamma, t, prev, pc, top, &next_top));
        top = std::move(next_top);
      }
      StepResult r = gd_wd_step(mlp, theta, batch, cfg.eta, cfg.gamma, t);
      log.losses.push_back(r.loss);
      theta = std::move(r.params);
    } catch (const DivergenceError& e) {
      log.diverged = true;
      log.diverged_at = t;
      log.divergence_reason = e.what();
      break;
    } catch (const OverflowError& e) {
      log.diverged = true;
      log.diverged_at = t;
      log.divergence_reason = e.what();
      break;
    }
  }
  log.final_params = std::move(theta);
  log.digest = fnv1a_digest(log.final_params, log.losses);
  return log;
}

std::optional<std::size_t> detect_onset(std::span<const double> losses, std::size_t warmup_ignore) {
  if (losses.empty()) throw InvalidArgument("detect_onset: empty series");
  for (std::size_t t = warmup_ignore; t + 1 < losses.size(); ++t)
    if (losses[t + 1] > losses[t]) return t;
  return std::nullopt;
}

double stabilization_level(std::span<const double> series) {
  if (series.size() < 10) throw InvalidArgument("stabilization_level: need at least 10 entries");
  const auto tail = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(series.size())));
  double s = 0.0;
  for (std::size_t i = series.size() - tail; i < series.size(); ++i) s += series[i];
  return s / static_cast<double>(tail);
}

bool crossed_before_reaching(const RunLog& log, const RunConfig& cfg, double reach_fraction) {
  const double reach = reach_fraction * (2.0 / cfg.eta - cfg.gamma);
  for (const auto& p : log.probes) {
    if (p.lambda_topk.front() >= reach) return false;
    if (p.step < cfg.warmup_ignore || !(p.alpha > 0.0)) continue;
    if (p.c_y > p.c_y_crit) return true;
  }
  return false;
}

double max_window_mean_delta(std::span<const double> losses, std::size_t from, std::size_t window) {
  if (window < 1) throw InvalidArgument("max_window_mean_delta: window must be >= 1");
  double worst = -INFINITY;
  for (std::size_t s = from; s + window < losses.size(); ++s)
    worst = std::max(worst, (losses[s + window] - losses[s]) / static_cast<double>(window));
  return worst;
}

double max_block_mean_delta(std::span<const double> losses, std::size_t from, std::size_t window) {
  if (window < 1) throw InvalidArgument("max_block_mean_delta: window must be >= 1");
  double worst = -INFINITY, prev = NAN;
  for (std::size_t s = from; s + window <= losses.size(); s += window) {
    double m = 0.0;
    for (std::size_t i = s; i < s + window; ++i) m += losses[i];
    m /= static_cast<double>(window);
    if (!std::isnan(prev)) worst = std::max(worst, (m - prev) / static_cast<double>(window));
    prev = m;
  }
  return worst;
}

std::vector<SweepRow> sweep(const RunConfig& base, const LabeledBatch& batch, const std::vector<double>& gammas,
                            const std::vector<std::uint64_t>& seeds, const SweepOptions& opts,
                            std::vector<RunLog>* logs) {
  if (gammas.empty() || seeds.empty()) throw InvalidArgument("sweep: gamma and seed lists must be non-empty");
  base.validate();
  const std::size_t cells = gammas.size() * seeds.size();
  std::vector<SweepRow> rows(cells);
  std::vector<RunLog> local(cells);

  auto do_cell = [&](std::size_t i) {
    RunConfig cfg = base;
    cfg.gamma = gammas[i / seeds.size()];
    cfg.seed = seeds[i % seeds.size()];
    SweepRow& row = rows[i];
    row.gamma = cfg.gamma;
    row.seed = cfg.seed;
    try {
      RunLog lg = run(cfg, batch);
      row.diverged = lg.diverged;
      row.digest = lg.digest;
      row.onset = detect_onset(lg.losses, cfg.warmup_ignore);
      const auto s = lg.sharpness_series();
      if (s.size() >= 10) row.stabilization = stabilization_level(s);
      if (!s.empty()) row.max_sharpness = *std::max_element(s.begin(), s.end());
      row.crossed = crossed_before_reaching(lg, cfg);
      if (opts.compute_ntk && !lg.diverged) {
        MlpSpec spec = cfg.spec;
        spec.init_seed = cfg.seed;
        const Mlp mlp(spec);
        row.ntk_lambda_max = ntk_lambda_max(mlp, lg.final_params, batch.inputs, opts.ntk);
      }
      local[i] = std::move(lg);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  };

  const std::size_t jobs = std::max<std::size_t>(1, std::min(opts.jobs, cells));
  if (jobs == 1) {
    for (std::size_t i = 0; i < cells; ++i) do_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells; i = next++) do_cell(i);
      });
    for (auto& th : pool) th.join();
  }
  if (logs) *logs = std::move(local);
  return rows;
}

}  // namespace wdeos
