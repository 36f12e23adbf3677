/* C interface to the wdeos numerical library.
 *
 * Every function returns a wdeos_status. On failure the message of the most
 * recent error on the calling thread is available from wdeos_last_error().
 * Handles are opaque and owned by the caller; release each with its _free
 * function. Strings returned through char** are freed with wdeos_string_free.
 */
#ifndef WDEOS_H
#define WDEOS_H

#include <stddef.h>
#include <stdint.h>

#if defined(WDEOS_BUILDING_LIBRARY)
#define WDEOS_API __attribute__((visibility("default")))
#else
#define WDEOS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum wdeos_status {
  WDEOS_OK = 0,
  WDEOS_INVALID_ARGUMENT = 1,
  WDEOS_NOT_CONVERGED = 2,
  WDEOS_OVERFLOW = 3,
  WDEOS_PARSE_ERROR = 4,
  WDEOS_IO_ERROR = 5,
  WDEOS_DIVERGED = 6,
  WDEOS_INTERNAL = 99
} wdeos_status;

WDEOS_API const char* wdeos_last_error(void);
WDEOS_API const char* wdeos_version(void);
WDEOS_API void wdeos_string_free(char* s);

/* ---- oscillator ---- */

typedef struct wdeos_oscillator_config {
  double eta, gamma, alpha, beta, c_x, c_y, x0, y0;
} wdeos_oscillator_config;

typedef struct wdeos_oscillator_prediction {
  double y_star;
  double bounce_mean;
  double amplitude; /* valid only when has_amplitude */
  int has_amplitude;
  double c_y_crit; /* +inf when gamma == 0 */
  int collapsed;
  double y_star_collapsed;
  double decay_rate;
  double omega_d;
} wdeos_oscillator_prediction;

typedef struct wdeos_trajectory wdeos_trajectory;

WDEOS_API void wdeos_oscillator_config_default(wdeos_oscillator_config* cfg);
WDEOS_API wdeos_status wdeos_oscillator_predict(const wdeos_oscillator_config* cfg, wdeos_oscillator_prediction* out);
WDEOS_API wdeos_status wdeos_oscillator_simulate(const wdeos_oscillator_config* cfg, size_t steps,
                                                 wdeos_trajectory** out);
/* dtau <= 0 selects the default step. */
WDEOS_API wdeos_status wdeos_envelope_simulate(const wdeos_oscillator_config* cfg, double tau_max, double dtau,
                                               wdeos_trajectory** out);

WDEOS_API size_t wdeos_trajectory_length(const wdeos_trajectory* t);
WDEOS_API int wdeos_trajectory_diverged(const wdeos_trajectory* t);
/* Each non-null buffer must hold wdeos_trajectory_length() doubles. */
WDEOS_API wdeos_status wdeos_trajectory_copy(const wdeos_trajectory* t, double* times, double* xs, double* ys);
WDEOS_API wdeos_status wdeos_trajectory_rescale_time(wdeos_trajectory* t, double factor);
WDEOS_API void wdeos_trajectory_free(wdeos_trajectory* t);

WDEOS_API wdeos_status wdeos_measure_limit_cycle(const wdeos_trajectory* t, double tail_fraction, double* amplitude,
                                                 double* mean_x, double* y_rest);
WDEOS_API wdeos_status wdeos_fit_decay(const wdeos_trajectory* t, double* rate, double* frequency);

/* ---- toy loss ---- */

typedef struct wdeos_toy_config {
  double eta_ref, alpha, beta;
} wdeos_toy_config;

typedef struct wdeos_toy_state {
  double x, y, z;
} wdeos_toy_state;

typedef struct wdeos_toy_run wdeos_toy_run;

WDEOS_API wdeos_status wdeos_toy_default_init(const wdeos_toy_config* cfg, wdeos_toy_state* out);
/* grad: 3 doubles, hessian: 9 doubles row-major; either may be null. */
WDEOS_API wdeos_status wdeos_toy_eval(const wdeos_toy_config* cfg, const wdeos_toy_state* s, double* loss,
                                      double* grad, double* hessian);
WDEOS_API wdeos_status wdeos_toy_train(const wdeos_toy_config* cfg, double eta, double gamma, size_t steps,
                                       const wdeos_toy_state* init, wdeos_toy_run** out);
WDEOS_API size_t wdeos_toy_run_length(const wdeos_toy_run* r);
WDEOS_API int wdeos_toy_run_diverged(const wdeos_toy_run* r);
WDEOS_API wdeos_status wdeos_toy_run_sharpness(const wdeos_toy_run* r, double* out);
WDEOS_API wdeos_status wdeos_toy_run_losses(const wdeos_toy_run* r, double* out);
WDEOS_API wdeos_status wdeos_toy_run_states(const wdeos_toy_run* r, wdeos_toy_state* out);
WDEOS_API void wdeos_toy_run_free(wdeos_toy_run* r);
WDEOS_API wdeos_status wdeos_toy_crosscheck(const wdeos_toy_config* cfg, const wdeos_toy_run* r, double gamma,
                                            double max_abs_x, double* max_alpha_rel_err, double* max_beta_rel_err,
                                            size_t* rows);

/* ---- datasets ---- */

typedef struct wdeos_dataset wdeos_dataset;

typedef enum wdeos_synthetic_mode { WDEOS_RANDOM_LABELS = 0, WDEOS_TEACHER = 1 } wdeos_synthetic_mode;
typedef enum wdeos_stats_source { WDEOS_STATS_FULL_TRAIN_SET = 0, WDEOS_STATS_SELF = 1 } wdeos_stats_source;

WDEOS_API wdeos_status wdeos_dataset_synthetic(size_t n, size_t d, size_t c, uint64_t seed, wdeos_synthetic_mode mode,
                                               wdeos_dataset** out);
WDEOS_API wdeos_status wdeos_dataset_load_cifar10(const char* const* paths, size_t n_paths, size_t count,
                                                  wdeos_dataset** out);
/* With WDEOS_STATS_FULL_TRAIN_SET, stats_paths lists the five training
 * batches; statistics are streamed from them. */
WDEOS_API wdeos_status wdeos_dataset_normalize(const wdeos_dataset* ds, wdeos_stats_source source,
                                               const char* const* stats_paths, size_t n_stats_paths,
                                               wdeos_dataset** out);
WDEOS_API wdeos_status wdeos_dataset_slice(const wdeos_dataset* ds, size_t begin, size_t count, wdeos_dataset** out);
WDEOS_API size_t wdeos_dataset_size(const wdeos_dataset* ds);
WDEOS_API size_t wdeos_dataset_input_dim(const wdeos_dataset* ds);
WDEOS_API size_t wdeos_dataset_num_classes(const wdeos_dataset* ds);
WDEOS_API wdeos_status wdeos_dataset_labels(const wdeos_dataset* ds, int* out);
WDEOS_API wdeos_status wdeos_dataset_metadata_json(const wdeos_dataset* ds, char** out);
WDEOS_API void wdeos_dataset_free(wdeos_dataset* ds);

/* ---- networks and training ---- */

typedef enum wdeos_activation { WDEOS_RELU = 0, WDEOS_TANH = 1, WDEOS_IDENTITY = 2 } wdeos_activation;

typedef struct wdeos_run_config {
  const size_t* layer_sizes;
  size_t n_layers; /* entries in layer_sizes, >= 2 */
  wdeos_activation activation;
  double eta;
  double gamma;
  size_t steps;
  size_t probe_every;
  size_t lanczos_k;
  uint64_t seed;
  size_t warmup_ignore;
  size_t lanczos_max_iters;
  double lanczos_tol;
  int use_power_iteration;
} wdeos_run_config;

typedef struct wdeos_run_log wdeos_run_log;

typedef struct wdeos_probe {
  size_t step;
  double lambda_max;
  double alpha, beta, c_x, c_y, c_y_crit;
  double loss, delta_loss;
} wdeos_probe;

typedef struct wdeos_sweep_row {
  double gamma;
  uint64_t seed;
  int has_onset;
  size_t onset;
  double stabilization; /* NaN when unavailable */
  double max_sharpness;
  int crossed;
  int diverged;
  double ntk_lambda_max; /* NaN unless requested */
  int failed;
} wdeos_sweep_row;

/* Fills the desk-scale defaults; layer_sizes points to static storage. */
WDEOS_API void wdeos_run_config_default(wdeos_run_config* cfg);
WDEOS_API wdeos_status wdeos_mlp_num_params(const size_t* layer_sizes, size_t n_layers, size_t* out);
WDEOS_API wdeos_status wdeos_mlp_init_params(const size_t* layer_sizes, size_t n_layers, wdeos_activation act,
                                             uint64_t seed, double* out);

WDEOS_API wdeos_status wdeos_train(const wdeos_run_config* cfg, const wdeos_dataset* ds, wdeos_run_log** out);
WDEOS_API size_t wdeos_run_log_steps(const wdeos_run_log* log);
WDEOS_API size_t wdeos_run_log_num_probes(const wdeos_run_log* log);
WDEOS_API int wdeos_run_log_diverged(const wdeos_run_log* log);
WDEOS_API wdeos_status wdeos_run_log_losses(const wdeos_run_log* log, double* out);
WDEOS_API size_t wdeos_run_log_num_params(const wdeos_run_log* log);
WDEOS_API wdeos_status wdeos_run_log_final_params(const wdeos_run_log* log, double* out);
WDEOS_API wdeos_status wdeos_run_log_probe(const wdeos_run_log* log, size_t i, wdeos_probe* out);
WDEOS_API wdeos_status wdeos_run_log_digest(const wdeos_run_log* log, char** out);
WDEOS_API wdeos_status wdeos_run_log_write_jsonl(const wdeos_run_log* log, const char* path);
WDEOS_API wdeos_status wdeos_run_log_summary_json(const wdeos_run_log* log, char** out);
WDEOS_API void wdeos_run_log_free(wdeos_run_log* log);

/* has_onset receives 0 when the series never increases past warmup. */
WDEOS_API wdeos_status wdeos_detect_onset(const double* losses, size_t n, size_t warmup_ignore, int* has_onset,
                                          size_t* onset);
WDEOS_API wdeos_status wdeos_stabilization_level(const double* series, size_t n, double* out);

/* rows must hold n_gammas * n_seeds entries, ordered by gamma then seed. */
WDEOS_API wdeos_status wdeos_sweep(const wdeos_run_config* base, const wdeos_dataset* ds, const double* gammas,
                                   size_t n_gammas, const uint64_t* seeds, size_t n_seeds, size_t jobs,
                                   int compute_ntk, wdeos_sweep_row* rows);

/* ---- NTK ---- */

typedef struct wdeos_ntk_report {
  size_t n_samples;
  double lambda_max_ntk;
  double lambda_max_hessian;
  double residual_norm;
  int weyl_satisfied;
} wdeos_ntk_report;

WDEOS_API wdeos_status wdeos_weyl_check(const size_t* layer_sizes, size_t n_layers, wdeos_activation act,
                                        const double* params, const wdeos_dataset* ds, wdeos_ntk_report* out);
/* per_sample_sum != 0 selects one Gram row per sample. */
WDEOS_API wdeos_status wdeos_ntk_lambda_max(const size_t* layer_sizes, size_t n_layers, wdeos_activation act,
                                            const double* params, const wdeos_dataset* ds, int per_sample_sum,
                                            double* out);

/* lambda_max receives λmax((1/n)JJᵀ) on the first n_grid[i] samples. */
WDEOS_API wdeos_status wdeos_ntk_convergence(const size_t* layer_sizes, size_t n_layers, wdeos_activation act,
                                             const double* params, const wdeos_dataset* ds, const size_t* n_grid,
                                             size_t n_points, int per_sample_sum, double* lambda_max);

/* values: n doubles; vectors: n*n doubles, row i is eigenvector i (may be null). */
WDEOS_API wdeos_status wdeos_rank_one_eigs(const double* spectrum, const double* b, size_t n, double alpha,
                                           double* values, double* vectors);
/* Descending spectrum with `leading` geometrically separated eigenvalues
 * floor*ratio^(leading-i) over a small random bulk; out holds n doubles. */
WDEOS_API wdeos_status wdeos_separated_spectrum(size_t n, size_t leading, double ratio, double floor, double bulk_scale,
                                                uint64_t seed, double* out);

/* index receives 1-based indices; alignment may be null. */
WDEOS_API wdeos_status wdeos_alignment_sweep(const double* spectrum, const double* b, size_t n, const double* alphas,
                                             size_t n_alphas, size_t* index, double* alignment);

#ifdef __cplusplus
}
#endif

#endif /* WDEOS_H */
