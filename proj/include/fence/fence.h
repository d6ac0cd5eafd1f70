/* C interface to the fence library.
 *
 * Every call returns a fence_status. On failure the message of the last error
 * on the calling thread is available from fence_last_error() until the next
 * failing call on that thread. Handles are opaque and owned by the caller;
 * release them with the matching *_free function (NULL is accepted).
 *
 * Grids are exchanged as row-major double arrays, one row per node.
 */
#ifndef FENCE_H
#define FENCE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define FENCE_API __declspec(dllexport)
#else
#define FENCE_API __attribute__((visibility("default")))
#endif

typedef enum fence_status {
  FENCE_OK = 0,
  FENCE_ERR_INVALID_INPUT = 1,
  FENCE_ERR_STATE = 2,
  FENCE_ERR_NUMERICAL = 3,
  FENCE_ERR_DIVERGENCE = 4,
  FENCE_ERR_IO = 5,
  FENCE_ERR_CONFIG = 6,
  FENCE_ERR_INTERNAL = 7
} fence_status;

FENCE_API const char* fence_last_error(void);
FENCE_API const char* fence_status_name(fence_status status);
FENCE_API const char* fence_version(void);

/* ---- grids ---- */

/* Values plus a presence mask (1 = value present). */
typedef struct fence_grid fence_grid;

FENCE_API fence_status fence_grid_create(size_t n_nodes, size_t n_steps, const double* values,
                                         fence_grid** out);
/* Dense CSV: header t0,t1,...; empty or nan cells are absent. */
FENCE_API fence_status fence_grid_read_csv(const char* path, fence_grid** out);
/* Absent cells are written empty. */
FENCE_API fence_status fence_grid_write_csv(const fence_grid* grid, const char* path);
FENCE_API size_t fence_grid_nodes(const fence_grid* grid);
FENCE_API size_t fence_grid_steps(const fence_grid* grid);
/* Copies n_nodes * n_steps values (absent cells read as 0). */
FENCE_API fence_status fence_grid_values(const fence_grid* grid, double* out);
FENCE_API fence_status fence_grid_presence(const fence_grid* grid, double* out);
FENCE_API void fence_grid_free(fence_grid* grid);

/* ---- masks ---- */

typedef struct fence_mask fence_mask;

typedef enum fence_mask_pattern { FENCE_MASK_SR_TC = 0, FENCE_MASK_SC_TC = 1 } fence_mask_pattern;

typedef struct fence_mask_config {
  fence_mask_pattern pattern;
  double missing_rate;
  int patch_length;
  int n_communities;
  uint64_t seed;
} fence_mask_config;

FENCE_API void fence_mask_config_default(fence_mask_config* cfg);
/* `adjacency` (n_nodes x n_nodes, row-major) is used by SC-TC; NULL selects
 * a ring graph. */
FENCE_API fence_status fence_mask_generate(const fence_mask_config* cfg, size_t n_nodes,
                                           size_t length, const double* adjacency,
                                           fence_mask** out);
FENCE_API fence_status fence_mask_create(size_t n_nodes, size_t n_steps, const double* entries,
                                         fence_mask** out);
FENCE_API fence_status fence_mask_read_csv(const char* path, fence_mask** out);
FENCE_API fence_status fence_mask_write_csv(const fence_mask* mask, const char* path);
FENCE_API size_t fence_mask_nodes(const fence_mask* mask);
FENCE_API size_t fence_mask_steps(const fence_mask* mask);
FENCE_API fence_status fence_mask_entries(const fence_mask* mask, double* out);
FENCE_API void fence_mask_free(fence_mask* mask);

/* ---- noise schedule ---- */

typedef struct fence_schedule fence_schedule;

typedef enum fence_variance { FENCE_VARIANCE_BETA_TILDE = 0, FENCE_VARIANCE_BETA = 1 } fence_variance;

FENCE_API fence_status fence_schedule_quadratic(int n_steps, double beta1, double beta_k,
                                                fence_variance variance, fence_schedule** out);
FENCE_API int fence_schedule_steps(const fence_schedule* sched);
/* Step k is 1-based. */
FENCE_API fence_status fence_schedule_at(const fence_schedule* sched, int k, double* beta,
                                         double* alpha_bar, double* sigma2);
FENCE_API void fence_schedule_free(fence_schedule* sched);

/* ---- Gaussian oracle world ---- */

typedef struct fence_world fence_world;

typedef struct fence_world_spec {
  int nodes;
  int steps;
  double rho_s;
  double rho_t;
  double mean;
  uint64_t seed;
} fence_world_spec;

FENCE_API void fence_world_spec_default(fence_world_spec* spec);
FENCE_API fence_status fence_world_spec_read(const char* path, fence_world_spec* spec);
FENCE_API fence_status fence_world_spec_write(const char* path, const fence_world_spec* spec);
FENCE_API fence_status fence_world_create(const fence_world_spec* spec, fence_world** out);
/* `windows` independent draws side by side: n_nodes x (windows * steps). Draw
 * w uses stream w of the spec seed. */
FENCE_API fence_status fence_world_sample(const fence_world* world, int windows, fence_grid** out);
/* Analytic conditional mean and variance (n_nodes x steps each) given the
 * entries of `observed` where `mask` is 1. */
FENCE_API fence_status fence_world_conditional(const fence_world* world, const fence_grid* observed,
                                               const fence_mask* mask, double* mean,
                                               double* variance);
FENCE_API void fence_world_free(fence_world* world);

/* ---- denoisers ---- */

typedef struct fence_backend fence_backend;

/* Closed-form denoiser for `world` observed through (observed, mask).
 * pi_true < 1 mixes the prior into the conditional score. */
FENCE_API fence_status fence_backend_oracle(const fence_world* world, const fence_grid* observed,
                                            const fence_mask* mask, const fence_schedule* sched,
                                            double pi_true, fence_backend** out);
FENCE_API fence_status fence_backend_load(const char* checkpoint, fence_backend** out);
FENCE_API void fence_backend_free(fence_backend* backend);

/* ---- training ---- */

typedef struct fence_network_config {
  int channels;
  int heads;
  int layers;
  int step_embed_dim;
  int ff_mult;
} fence_network_config;

typedef struct fence_train_config {
  int epochs;
  double learning_rate;
  double weight_decay;
  int patience;
  int batch_size;
  double remask_rate;
  int remask_patch;
  int window;
  uint64_t seed;
} fence_train_config;

typedef struct fence_train_report {
  int epochs_run;
  int best_epoch;
  double best_validation_loss;
  int stopped_early;
  int warned_untrained_init;
} fence_train_report;

typedef void (*fence_epoch_fn)(int epoch, double train_loss, double validation_loss, void* user);

FENCE_API void fence_network_config_default(fence_network_config* cfg);
/* conditional = 0: stage-1 defaults; otherwise stage-2 defaults. */
FENCE_API void fence_train_config_default(fence_train_config* cfg, int conditional);
/* Stage 1 from fresh weights. The series is split 60/20/20 in time and
 * normalized with training statistics. */
FENCE_API fence_status fence_train_unconditional(const fence_grid* series,
                                                 const fence_network_config* net,
                                                 const fence_train_config* cfg,
                                                 const fence_schedule* sched,
                                                 const char* checkpoint_out, fence_epoch_fn on_epoch,
                                                 void* user, fence_train_report* report);
/* Stage 2 starting from `checkpoint_in`. */
FENCE_API fence_status fence_finetune_conditional(const fence_grid* series,
                                                  const char* checkpoint_in,
                                                  const fence_train_config* cfg,
                                                  const fence_schedule* sched,
                                                  const char* checkpoint_out,
                                                  fence_epoch_fn on_epoch, void* user,
                                                  fence_train_report* report);

/* ---- imputation ---- */

typedef enum fence_guidance_mode {
  FENCE_GUIDANCE_FENCE = 0,
  FENCE_GUIDANCE_FIXED = 1,
  FENCE_GUIDANCE_NONE = 2
} fence_guidance_mode;

typedef enum fence_aggregation {
  FENCE_AGG_CLUSTER = 0,
  FENCE_AGG_GLOBAL = 1,
  FENCE_AGG_NODE = 2
} fence_aggregation;

typedef enum fence_anchoring { FENCE_ANCHOR_FREE = 0, FENCE_ANCHOR_CLAMP = 1 } fence_anchoring;

typedef struct fence_impute_config {
  fence_guidance_mode mode;
  double fixed_lambda;
  double pi;
  double lambda_ref;
  double t0;
  double t1;
  double alpha_scale;
  double lambda_max;
  fence_aggregation aggregation;
  int n_clusters; /* 0 = max(1, round(N / 20)) */
  int recluster_every;
  int n_samples;
  uint64_t seed;
  fence_anchoring anchoring;
  int threads;
} fence_impute_config;

typedef struct fence_result fence_result;

typedef struct fence_trace_row {
  int sample;
  int k;
  int node;
  double lambda;
  double log_posterior;
  double guidance_norm;
  int cluster_id;
} fence_trace_row;

FENCE_API void fence_impute_config_default(fence_impute_config* cfg);
/* Present-but-unmasked entries of `observed` are ignored; the mask decides
 * what is observed. */
FENCE_API fence_status fence_impute(const fence_backend* cond, const fence_backend* uncond,
                                    const fence_grid* observed, const fence_mask* mask,
                                    const fence_schedule* sched, const fence_impute_config* cfg,
                                    fence_result** out);
FENCE_API size_t fence_result_samples(const fence_result* result);
FENCE_API fence_status fence_result_sample(const fence_result* result, size_t index, double* out);
FENCE_API fence_status fence_result_mean(const fence_result* result, double* out);
FENCE_API size_t fence_result_trace_rows(const fence_result* result);
FENCE_API fence_status fence_result_trace_row(const fence_result* result, size_t index,
                                              fence_trace_row* out);
/* samples_path may be NULL. */
FENCE_API fence_status fence_result_write_trace(const fence_result* result, const char* trace_path,
                                                const char* samples_path);
FENCE_API void fence_result_free(fence_result* result);

FENCE_API fence_status fence_trace_summarize(const char* trace_path, const char* out_path);

/* ---- metrics ---- */

typedef struct fence_metrics {
  double mae;
  double rmse;
  double mape;
  double crps; /* NaN when no ensemble was given */
  size_t n_evaluated;
} fence_metrics;

/* Evaluates where eval_mask is 1. `samples` holds n_samples row-major grids
 * back to back and may be NULL (then crps is NaN). `per_node` receives
 * n_nodes rows of (mae, rmse, mape, crps) when non-NULL. */
FENCE_API fence_status fence_evaluate(const fence_grid* pred, const fence_grid* truth,
                                      const fence_mask* eval_mask, const double* samples,
                                      size_t n_samples, fence_metrics* out, double* per_node);
FENCE_API fence_status fence_crps(const double* samples, size_t n, double truth, double* out);
/* Reads the samples CSV written next to a trace (sample,node,t0,...). *out is
 * malloc'ed (free with fence_free) and holds *n_samples grids. */
FENCE_API fence_status fence_samples_read_csv(const char* path, double** out, size_t* n_samples,
                                              size_t* n_nodes, size_t* n_steps);
FENCE_API void fence_free(void* p);

/* ---- experiments ---- */

/* Runs the config file's pipeline and writes reports into output_dir. */
FENCE_API fence_status fence_run_experiment(const char* config_path, const char* output_dir,
                                            fence_metrics* out);
/* Static text listing every config key with its default. */
FENCE_API const char* fence_config_reference(void);

#ifdef __cplusplus
}
#endif

#endif /* FENCE_H */
