#ifndef LSLU_H
#define LSLU_H

/* C interface to the LSLU toolkit: training, evaluation, inference-time
 * fusion, gradient checking, term-count ablation, latency benchmarking and
 * class-selectivity analysis, plus the series activation itself for use on
 * raw buffers.
 *
 * Every entry point returns an lslu_status; LSLU_OK is zero. On failure a
 * human-readable message is available from lslu_last_error() until the next
 * call on the same thread. Handles are opaque and must be released with
 * their matching *_free function. Result handles own the strings they hand
 * out; the pointers stay valid until the result is freed.
 */

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lslu_status {
    LSLU_OK = 0,
    LSLU_BAD_ARGUMENT = 1,      /* null pointer or out-of-range scalar argument */
    LSLU_BAD_CONFIG = 2,        /* unknown key, bad value, or invalid combination */
    LSLU_IO_ERROR = 3,          /* missing file or failed read/write */
    LSLU_BAD_DATA = 4,          /* malformed dataset or checkpoint bytes */
    LSLU_NUMERIC_ERROR = 5,      /* shape/domain errors raised by the core */
    LSLU_TOLERANCE_EXCEEDED = 6, /* command ran, hard tolerance not met; result is still filled */
    LSLU_INTERNAL_ERROR = 7
} lslu_status;

typedef struct lslu_config lslu_config;
typedef struct lslu_result lslu_result;

const char* lslu_version(void);

/* Thread-local message for the most recent failure on this thread. */
const char* lslu_last_error(void);

/* Configs ----------------------------------------------------------- */

/* Fresh config with documented defaults. */
lslu_status lslu_config_create(lslu_config** out);

/* Parse a flat JSON config file. Unknown keys are rejected. */
lslu_status lslu_config_load(const char* path, lslu_config** out);

/* Recover the config a checkpoint was trained with. */
lslu_status lslu_config_from_checkpoint(const char* checkpoint_path, lslu_config** out);

/* Merge a JSON object of overrides into an existing config. */
lslu_status lslu_config_update_json(lslu_config* cfg, const char* json_object);

/* Canonical JSON form of the config (every key present). */
lslu_status lslu_config_json(const lslu_config* cfg, lslu_result** out);

void lslu_config_free(lslu_config* cfg);

/* Commands ----------------------------------------------------------- */

/* Train per the config; writes metrics.csv, trajectories.csv (when the
 * network has series activations) and checkpoint.lslu under out_dir. */
lslu_status lslu_train(const lslu_config* cfg, lslu_result** out);

/* Evaluate a checkpoint on the config's dataset. split is "train" or
 * "test" (null means "test"). */
lslu_status lslu_evaluate(const lslu_config* cfg, const char* checkpoint_path, const char* split,
                          lslu_result** out);

/* Fuse a trained checkpoint for inference and verify equivalence on a
 * random probe batch. Returns LSLU_TOLERANCE_EXCEEDED (result filled) when
 * the probe difference breaks the dtype tolerance or an argmax flips. */
lslu_status lslu_fuse(const char* checkpoint_in, const char* checkpoint_out, long long probes,
                      lslu_result** out);

/* Compare analytic gradients against central finite differences on a fresh
 * float64 network built from the config. corrupt_group (nullable) perturbs
 * one group's analytic values to prove the harness catches faults. Returns
 * LSLU_TOLERANCE_EXCEEDED (result filled) when any group fails. */
lslu_status lslu_grad_check(const lslu_config* cfg, int samples_per_group, double step,
                            double tolerance, const char* corrupt_group, lslu_result** out);

/* One full training run per term count in n_values; reports parameter
 * counts, FLOPs, accuracy and latency per run. */
lslu_status lslu_ablate(const lslu_config* cfg, const int* n_values, int count, lslu_result** out);

/* Wall-clock per-forward statistics for a checkpoint; fuse_first times the
 * fused network instead of the stored one. */
lslu_status lslu_benchmark(const char* checkpoint_path, int fuse_first, long long batch,
                           long long iters, long long warmup, lslu_result** out);

/* Class-selectivity distribution of one activation layer (or every layer
 * when layer is null or "all") against the config's dataset. */
lslu_status lslu_class_selectivity(const lslu_config* cfg, const char* checkpoint_path,
                                   const char* layer, lslu_result** out);

/* Series activation on a raw buffer -------------------------------- */

/* y[i] = sum_n theta[n]*alpha[n]*f(x[i]+shift[n]) + omega[n], with base
 * f in {"relu","leakyrelu","gelu","silu"}. terms may be zero, in which
 * case y = f(x) and the parameter arrays may be null. */
lslu_status lslu_series_apply(const char* base, double leaky_slope, int terms, const double* theta,
                              const double* omega, const double* alpha, const double* shift,
                              const double* x, double* y, long long count);

/* Results ------------------------------------------------------------ */

/* Pretty-printed JSON document; owned by the result. */
const char* lslu_result_json(const lslu_result* result);

/* Top-level numeric field (numbers and booleans; booleans read as 0/1). */
lslu_status lslu_result_number(const lslu_result* result, const char* key, double* out);

/* Top-level string field; pointer owned by the result. */
lslu_status lslu_result_string(const lslu_result* result, const char* key, const char** out);

void lslu_result_free(lslu_result* result);

#ifdef __cplusplus
}
#endif

#endif /* LSLU_H */
