#include "wdeos/wdeos.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "wdeos/dataset.hpp"
#include "wdeos/error.hpp"
#include "wdeos/ntk.hpp"
#include "wdeos/oscillator.hpp"
#include "wdeos/serialize.hpp"
#include "wdeos/toyloss.hpp"
#include "wdeos/trainer.hpp"

struct wdeos_trajectory {
  wdeos::Trajectory t;
};
struct wdeos_toy_run {
  wdeos::ToyRun r;
};
struct wdeos_dataset {
  wdeos::ImageDataset ds;
};
struct wdeos_run_log {
  wdeos::RunLog log;
  wdeos::RunConfig cfg;
};

namespace {

thread_local std::string g_last_error;

wdeos_status fail(wdeos_status s, const char* what) {
  g_last_error = what;
  return s;
}

template <class Fn>
wdeos_status guard(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return WDEOS_OK;
  } catch (const wdeos::Error& e) {
    return fail(static_cast<wdeos_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(WDEOS_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(WDEOS_INTERNAL, e.what());
  }
}

void need(const void* p, const char* name) {
  if (!p) throw wdeos::InvalidArgument(std::string(name) + " must not be null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

wdeos::OscillatorConfig to_cpp(const wdeos_oscillator_config& c) {
  return {c.eta, c.gamma, c.alpha, c.beta, c.c_x, c.c_y, c.x0, c.y0};
}

wdeos::ToyConfig to_cpp(const wdeos_toy_config& c) { return {c.eta_ref, c.alpha, c.beta}; }

wdeos::Activation to_cpp(wdeos_activation a) {
  switch (a) {
    case WDEOS_RELU:
      return wdeos::Activation::relu;
    case WDEOS_TANH:
      return wdeos::Activation::tanh;
    case WDEOS_IDENTITY:
      return wdeos::Activation::identity;
  }
  throw wdeos::InvalidArgument("unknown activation");
}

wdeos::MlpSpec make_spec(const size_t* sizes, size_t n, wdeos_activation act, uint64_t seed) {
  need(sizes, "layer_sizes");
  wdeos::MlpSpec spec{{sizes, sizes + n}, to_cpp(act), seed};
  spec.validate();
  return spec;
}

wdeos::RunConfig to_cpp(const wdeos_run_config& c) {
  wdeos::RunConfig r;
  r.spec = make_spec(c.layer_sizes, c.n_layers, c.activation, c.seed);
  r.eta = c.eta;
  r.gamma = c.gamma;
  r.steps = c.steps;
  r.probe_every = c.probe_every;
  r.lanczos_k = c.lanczos_k;
  r.seed = c.seed;
  r.warmup_ignore = c.warmup_ignore;
  r.solver.max_iters = c.lanczos_max_iters;
  r.solver.tol = c.lanczos_tol;
  r.solver.use_power_iteration = c.use_power_iteration != 0;
  return r;
}

std::vector<std::string> to_paths(const char* const* paths, size_t n) {
  if (n > 0) need(paths, "paths");
  std::vector<std::string> out;
  for (size_t i = 0; i < n; ++i) {
    need(paths[i], "path");
    out.emplace_back(paths[i]);
  }
  return out;
}

const size_t kDefaultLayers[] = {64, 32, 32, 10};

}  // namespace

extern "C" {

const char* wdeos_last_error(void) { return g_last_error.c_str(); }
const char* wdeos_version(void) { return "0.1.0"; }
void wdeos_string_free(char* s) { std::free(s); }

void wdeos_oscillator_config_default(wdeos_oscillator_config* cfg) {
  if (!cfg) return;
  const wdeos::OscillatorConfig d;
  *cfg = {d.eta, d.gamma, d.alpha, d.beta, d.c_x, d.c_y, d.x0, d.y0};
}

wdeos_status wdeos_oscillator_predict(const wdeos_oscillator_config* cfg, wdeos_oscillator_prediction* out) {
  return guard([&] {
    need(cfg, "cfg");
    need(out, "out");
    const auto p = wdeos::predict(to_cpp(*cfg));
    out->y_star = p.y_star;
    out->bounce_mean = p.bounce_mean;
    out->has_amplitude = p.amplitude.has_value();
    out->amplitude = p.amplitude.value_or(std::numeric_limits<double>::quiet_NaN());
    out->c_y_crit = p.c_y_crit;
    out->collapsed = p.collapsed;
    out->y_star_collapsed = p.y_star_collapsed;
    out->decay_rate = p.decay_rate;
    out->omega_d = p.omega_d;
  });
}

wdeos_status wdeos_oscillator_simulate(const wdeos_oscillator_config* cfg, size_t steps, wdeos_trajectory** out) {
  return guard([&] {
    need(cfg, "cfg");
    need(out, "out");
    *out = new wdeos_trajectory{wdeos::simulate_discrete(to_cpp(*cfg), steps)};
  });
}

wdeos_status wdeos_envelope_simulate(const wdeos_oscillator_config* cfg, double tau_max, double dtau,
                                     wdeos_trajectory** out) {
  return guard([&] {
    need(cfg, "cfg");
    need(out, "out");
    *out = new wdeos_trajectory{wdeos::simulate_envelope(to_cpp(*cfg), tau_max, dtau)};
  });
}

size_t wdeos_trajectory_length(const wdeos_trajectory* t) { return t ? t->t.size() : 0; }
int wdeos_trajectory_diverged(const wdeos_trajectory* t) { return t && t->t.diverged; }

wdeos_status wdeos_trajectory_copy(const wdeos_trajectory* t, double* times, double* xs, double* ys) {
  return guard([&] {
    need(t, "trajectory");
    if (times) std::copy(t->t.times.begin(), t->t.times.end(), times);
    if (xs) std::copy(t->t.xs.begin(), t->t.xs.end(), xs);
    if (ys) std::copy(t->t.ys.begin(), t->t.ys.end(), ys);
  });
}

wdeos_status wdeos_trajectory_rescale_time(wdeos_trajectory* t, double factor) {
  return guard([&] {
    need(t, "trajectory");
    t->t = wdeos::rescale_time(std::move(t->t), factor);
  });
}

void wdeos_trajectory_free(wdeos_trajectory* t) { delete t; }

wdeos_status wdeos_measure_limit_cycle(const wdeos_trajectory* t, double tail_fraction, double* amplitude,
                                       double* mean_x, double* y_rest) {
  return guard([&] {
    need(t, "trajectory");
    const auto lc = wdeos::measure_limit_cycle(t->t, tail_fraction);
    if (amplitude) *amplitude = lc.amplitude;
    if (mean_x) *mean_x = lc.mean_x;
    if (y_rest) *y_rest = lc.y_rest;
  });
}

wdeos_status wdeos_fit_decay(const wdeos_trajectory* t, double* rate, double* frequency) {
  return guard([&] {
    need(t, "trajectory");
    const auto f = wdeos::fit_decay(t->t);
    if (rate) *rate = f.rate;
    if (frequency) *frequency = f.frequency;
  });
}

wdeos_status wdeos_toy_default_init(const wdeos_toy_config* cfg, wdeos_toy_state* out) {
  return guard([&] {
    need(cfg, "cfg");
    need(out, "out");
    const auto s = wdeos::default_toy_init(to_cpp(*cfg));
    *out = {s.x, s.y, s.z};
  });
}

wdeos_status wdeos_toy_eval(const wdeos_toy_config* cfg, const wdeos_toy_state* s, double* loss, double* grad,
                            double* hessian) {
  return guard([&] {
    need(cfg, "cfg");
    need(s, "state");
    const auto e = wdeos::toy_eval(to_cpp(*cfg), {s->x, s->y, s->z});
    if (loss) *loss = e.loss;
    if (grad) std::copy(e.grad.begin(), e.grad.end(), grad);
    if (hessian) std::copy(e.hessian.values().begin(), e.hessian.values().end(), hessian);
  });
}

wdeos_status wdeos_toy_train(const wdeos_toy_config* cfg, double eta, double gamma, size_t steps,
                             const wdeos_toy_state* init, wdeos_toy_run** out) {
  return guard([&] {
    need(cfg, "cfg");
    need(init, "init");
    need(out, "out");
    *out = new wdeos_toy_run{wdeos::train_toy(to_cpp(*cfg), eta, gamma, steps, {init->x, init->y, init->z})};
  });
}

size_t wdeos_toy_run_length(const wdeos_toy_run* r) { return r ? r->r.size() : 0; }
int wdeos_toy_run_diverged(const wdeos_toy_run* r) { return r && r->r.diverged; }

wdeos_status wdeos_toy_run_sharpness(const wdeos_toy_run* r, double* out) {
  return guard([&] {
    need(r, "run");
    need(out, "out");
    std::copy(r->r.sharpness.begin(), r->r.sharpness.end(), out);
  });
}

wdeos_status wdeos_toy_run_losses(const wdeos_toy_run* r, double* out) {
  return guard([&] {
    need(r, "run");
    need(out, "out");
    std::copy(r->r.losses.begin(), r->r.losses.end(), out);
  });
}

wdeos_status wdeos_toy_run_states(const wdeos_toy_run* r, wdeos_toy_state* out) {
  return guard([&] {
    need(r, "run");
    need(out, "out");
    for (size_t i = 0; i < r->r.size(); ++i) out[i] = {r->r.states[i].x, r->r.states[i].y, r->r.states[i].z};
  });
}

void wdeos_toy_run_free(wdeos_toy_run* r) { delete r; }

wdeos_status wdeos_toy_crosscheck(const wdeos_toy_config* cfg, const wdeos_toy_run* r, double gamma, double max_abs_x,
                                  double* max_alpha_rel_err, double* max_beta_rel_err, size_t* rows) {
  return guard([&] {
    need(cfg, "cfg");
    need(r, "run");
    const auto rep = wdeos::toy_probe_crosscheck(to_cpp(*cfg), r->r, gamma, max_abs_x);
    if (max_alpha_rel_err) *max_alpha_rel_err = rep.max_alpha_rel_err;
    if (max_beta_rel_err) *max_beta_rel_err = rep.max_beta_rel_err;
    if (rows) *rows = rep.rows.size();
  });
}

wdeos_status wdeos_dataset_synthetic(size_t n, size_t d, size_t c, uint64_t seed, wdeos_synthetic_mode mode,
                                     wdeos_dataset** out) {
  return guard([&] {
    need(out, "out");
    const auto m = mode == WDEOS_TEACHER ? wdeos::SyntheticMode::teacher : wdeos::SyntheticMode::random_labels;
    *out = new wdeos_dataset{wdeos::synthetic_dataset(n, d, c, seed, m)};
  });
}

wdeos_status wdeos_dataset_load_cifar10(const char* const* paths, size_t n_paths, size_t count, wdeos_dataset** out) {
  return guard([&] {
    need(out, "out");
    *out = new wdeos_dataset{wdeos::load_cifar10_bin(to_paths(paths, n_paths), count)};
  });
}

wdeos_status wdeos_dataset_normalize(const wdeos_dataset* ds, wdeos_stats_source source, const char* const* stats_paths,
                                     size_t n_stats_paths, wdeos_dataset** out) {
  return guard([&] {
    need(ds, "dataset");
    need(out, "out");
    std::optional<wdeos::ChannelStats> full;
    if (source == WDEOS_STATS_FULL_TRAIN_SET && n_stats_paths > 0)
      full = wdeos::cifar10_channel_stats(to_paths(stats_paths, n_stats_paths));
    const auto src = source == WDEOS_STATS_SELF ? wdeos::StatsSource::self : wdeos::StatsSource::full_train_set;
    *out = new wdeos_dataset{wdeos::normalize_per_channel(ds->ds, src, full)};
  });
}

wdeos_status wdeos_dataset_slice(const wdeos_dataset* ds, size_t begin, size_t count, wdeos_dataset** out) {
  return guard([&] {
    need(ds, "dataset");
    need(out, "out");
    *out = new wdeos_dataset{ds->ds.slice(begin, count)};
  });
}

size_t wdeos_dataset_size(const wdeos_dataset* ds) { return ds ? ds->ds.size() : 0; }
size_t wdeos_dataset_input_dim(const wdeos_dataset* ds) { return ds ? ds->ds.inputs.cols() : 0; }
size_t wdeos_dataset_num_classes(const wdeos_dataset* ds) { return ds ? ds->ds.num_classes() : 0; }

wdeos_status wdeos_dataset_labels(const wdeos_dataset* ds, int* out) {
  return guard([&] {
    need(ds, "dataset");
    need(out, "out");
    std::copy(ds->ds.labels.begin(), ds->ds.labels.end(), out);
  });
}

wdeos_status wdeos_dataset_metadata_json(const wdeos_dataset* ds, char** out) {
  return guard([&] {
    need(ds, "dataset");
    need(out, "out");
    *out = dup_string(wdeos::dataset_metadata_json(ds->ds));
  });
}

void wdeos_dataset_free(wdeos_dataset* ds) { delete ds; }

void wdeos_run_config_default(wdeos_run_config* cfg) {
  if (!cfg) return;
  const wdeos::RunConfig d;
  cfg->layer_sizes = kDefaultLayers;
  cfg->n_layers = 4;
  cfg->activation = WDEOS_RELU;
  cfg->eta = 0.25;
  cfg->gamma = 0.0;
  cfg->steps = 3000;
  cfg->probe_every = d.probe_every;
  cfg->lanczos_k = d.lanczos_k;
  cfg->seed = 0;
  cfg->warmup_ignore = d.warmup_ignore;
  cfg->lanczos_max_iters = d.solver.max_iters;
  cfg->lanczos_tol = d.solver.tol;
  cfg->use_power_iteration = 0;
}

wdeos_status wdeos_mlp_num_params(const size_t* layer_sizes, size_t n_layers, size_t* out) {
  return guard([&] {
    need(out, "out");
    *out = wdeos::count_params(make_spec(layer_sizes, n_layers, WDEOS_RELU, 0));
  });
}

wdeos_status wdeos_mlp_init_params(const size_t* layer_sizes, size_t n_layers, wdeos_activation act, uint64_t seed,
                                   double* out) {
  return guard([&] {
    need(out, "out");
    const auto p = wdeos::Mlp(make_spec(layer_sizes, n_layers, act, seed)).init_params();
    std::copy(p.begin(), p.end(), out);
  });
}

wdeos_status wdeos_train(const wdeos_run_config* cfg, const wdeos_dataset* ds, wdeos_run_log** out) {
  return guard([&] {
    need(cfg, "cfg");
    need(ds, "dataset");
    need(out, "out");
    auto h = std::make_unique<wdeos_run_log>();
    h->cfg = to_cpp(*cfg);
    h->log = wdeos::run(h->cfg, ds->ds.to_batch());
    *out = h.release();
  });
}

size_t wdeos_run_log_steps(const wdeos_run_log* log) { return log ? log->log.losses.size() : 0; }
size_t wdeos_run_log_num_probes(const wdeos_run_log* log) { return log ? log->log.probes.size() : 0; }
int wdeos_run_log_diverged(const wdeos_run_log* log) { return log && log->log.diverged; }
size_t wdeos_run_log_num_params(const wdeos_run_log* log) { return log ? log->log.final_params.size() : 0; }

wdeos_status wdeos_run_log_losses(const wdeos_run_log* log, double* out) {
  return guard([&] {
    need(log, "log");
    need(out, "out");
    std::copy(log->log.losses.begin(), log->log.losses.end(), out);
  });
}

wdeos_status wdeos_run_log_final_params(const wdeos_run_log* log, double* out) {
  return guard([&] {
    need(log, "log");
    need(out, "out");
    std::copy(log->log.final_params.begin(), log->log.final_params.end(), out);
  });
}

wdeos_status wdeos_run_log_probe(const wdeos_run_log* log, size_t i, wdeos_probe* out) {
  return guard([&] {
    need(log, "log");
    need(out, "out");
    if (i >= log->log.probes.size()) throw wdeos::InvalidArgument("probe index out of range");
    const auto& p = log->log.probes[i];
    *out = {p.step, p.lambda_topk.front(), p.alpha, p.beta, p.c_x, p.c_y, p.c_y_crit, p.loss, p.delta_loss};
  });
}

wdeos_status wdeos_run_log_digest(const wdeos_run_log* log, char** out) {
  return guard([&] {
    need(log, "log");
    need(out, "out");
    *out = dup_string(log->log.digest);
  });
}

wdeos_status wdeos_run_log_write_jsonl(const wdeos_run_log* log, const char* path) {
  return guard([&] {
    need(log, "log");
    need(path, "path");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw wdeos::IoError(std::string("cannot write ") + path);
    wdeos::write_run_jsonl(log->log, f);
    if (!f) throw wdeos::IoError(std::string("write failed for ") + path);
  });
}

wdeos_status wdeos_run_log_summary_json(const wdeos_run_log* log, char** out) {
  return guard([&] {
    need(log, "log");
    need(out, "out");
    *out = dup_string(wdeos::run_summary_json(log->log, log->cfg));
  });
}

void wdeos_run_log_free(wdeos_run_log* log) { delete log; }

wdeos_status wdeos_detect_onset(const double* losses, size_t n, size_t warmup_ignore, int* has_onset, size_t* onset) {
  return guard([&] {
    need(losses, "losses");
    need(has_onset, "has_onset");
    const auto t = wdeos::detect_onset({losses, n}, warmup_ignore);
    *has_onset = t.has_value();
    if (onset && t) *onset = *t;
  });
}

wdeos_status wdeos_stabilization_level(const double* series, size_t n, double* out) {
  return guard([&] {
    need(series, "series");
    need(out, "out");
    *out = wdeos::stabilization_level({series, n});
  });
}

wdeos_status wdeos_sweep(const wdeos_run_config* base, const wdeos_dataset* ds, const double* gammas, size_t n_gammas,
                         const uint64_t* seeds, size_t n_seeds, size_t jobs, int compute_ntk, wdeos_sweep_row* rows) {
  return guard([&] {
    need(base, "base");
    need(ds, "dataset");
    need(gammas, "gammas");
    need(seeds, "seeds");
    need(rows, "rows");
    wdeos::SweepOptions opts;
    opts.jobs = jobs;
    opts.compute_ntk = compute_ntk != 0;
    const auto res = wdeos::sweep(to_cpp(*base), ds->ds.to_batch(), {gammas, gammas + n_gammas},
                                  {seeds, seeds + n_seeds}, opts);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (size_t i = 0; i < res.size(); ++i) {
      const auto& r = res[i];
      rows[i] = {r.gamma,
                 r.seed,
                 r.onset.has_value(),
                 r.onset.value_or(0),
                 r.stabilization.value_or(nan),
                 r.max_sharpness.value_or(nan),
                 r.crossed,
                 r.diverged,
                 r.ntk_lambda_max.value_or(nan),
                 !r.error.empty()};
    }
  });
}

wdeos_status wdeos_weyl_check(const size_t* layer_sizes, size_t n_layers, wdeos_activation act, const double* params,
                              const wdeos_dataset* ds, wdeos_ntk_report* out) {
  return guard([&] {
    need(params, "params");
    need(ds, "dataset");
    need(out, "out");
    const wdeos::Mlp mlp(make_spec(layer_sizes, n_layers, act, 0));
    const auto rep = wdeos::weyl_check(mlp, {params, mlp.num_params()}, ds->ds.to_batch());
    *out = {rep.n_samples, rep.lambda_max_ntk, rep.lambda_max_hessian, rep.residual_norm, rep.weyl_satisfied};
  });
}

wdeos_status wdeos_ntk_lambda_max(const size_t* layer_sizes, size_t n_layers, wdeos_activation act,
                                  const double* params, const wdeos_dataset* ds, int per_sample_sum, double* out) {
  return guard([&] {
    need(params, "params");
    need(ds, "dataset");
    need(out, "out");
    const wdeos::Mlp mlp(make_spec(layer_sizes, n_layers, act, 0));
    wdeos::NtkConfig cfg;
    cfg.mode = per_sample_sum ? wdeos::OutputMode::per_sample_sum : wdeos::OutputMode::per_output;
    *out = wdeos::ntk_lambda_max(mlp, {params, mlp.num_params()}, ds->ds.inputs, cfg);
  });
}

wdeos_status wdeos_ntk_convergence(const size_t* layer_sizes, size_t n_layers, wdeos_activation act,
                                   const double* params, const wdeos_dataset* ds, const size_t* n_grid,
                                   size_t n_points, int per_sample_sum, double* lambda_max) {
  return guard([&] {
    need(params, "params");
    need(ds, "dataset");
    need(n_grid, "n_grid");
    need(lambda_max, "lambda_max");
    const wdeos::Mlp mlp(make_spec(layer_sizes, n_layers, act, 0));
    wdeos::NtkConfig cfg;
    cfg.mode = per_sample_sum ? wdeos::OutputMode::per_sample_sum : wdeos::OutputMode::per_output;
    const auto rows =
        wdeos::ntk_convergence(mlp, {params, mlp.num_params()}, ds->ds.inputs, {n_grid, n_grid + n_points}, cfg);
    for (size_t i = 0; i < rows.size(); ++i) lambda_max[i] = rows[i].lambda_max;
  });
}

wdeos_status wdeos_rank_one_eigs(const double* spectrum, const double* b, size_t n, double alpha, double* values,
                                 double* vectors) {
  return guard([&] {
    need(spectrum, "spectrum");
    need(b, "b");
    need(values, "values");
    const auto pairs = wdeos::rank_one_eigs({{spectrum, spectrum + n}, {b, b + n}, alpha});
    for (size_t i = 0; i < pairs.size(); ++i) {
      values[i] = pairs[i].value;
      if (vectors) std::copy(pairs[i].vector.begin(), pairs[i].vector.end(), vectors + i * n);
    }
  });
}

wdeos_status wdeos_separated_spectrum(size_t n, size_t leading, double ratio, double floor, double bulk_scale,
                                      uint64_t seed, double* out) {
  return guard([&] {
    need(out, "out");
    const auto lam = wdeos::separated_spectrum({n, leading, ratio, floor, bulk_scale, seed});
    std::copy(lam.begin(), lam.end(), out);
  });
}

wdeos_status wdeos_alignment_sweep(const double* spectrum, const double* b, size_t n, const double* alphas,
                                   size_t n_alphas, size_t* index, double* alignment) {
  return guard([&] {
    need(spectrum, "spectrum");
    need(b, "b");
    need(alphas, "alphas");
    need(index, "index");
    const auto pts = wdeos::alignment_sweep({spectrum, spectrum + n}, {b, b + n}, {alphas, alphas + n_alphas});
    for (size_t i = 0; i < pts.size(); ++i) {
      index[i] = pts[i].index;
      if (alignment) alignment[i] = pts[i].alignment;
    }
  });
}

}  // extern "C"
