#ifndef RSHDP_H
#define RSHDP_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Values 2 to 4 match the command-line exit codes.
 */
typedef enum RshdpStatus {
  RSHDP_STATUS_OK = 0,
  RSHDP_STATUS_NULL_POINTER = 1,
  RSHDP_STATUS_CONFIG = 2,
  RSHDP_STATUS_DATA = 3,
  RSHDP_STATUS_VERIFICATION = 4,
  RSHDP_STATUS_NUMERICAL = 5,
  RSHDP_STATUS_BUFFER_TOO_SMALL = 6,
  RSHDP_STATUS_INTERNAL = 7,
  RSHDP_STATUS_PANIC = 8,
} RshdpStatus;

/**
 * Run configuration (model, sampler, priors, iterations, seed).
 */
typedef struct RshdpConfig RshdpConfig;

/**
 * Result of one fitted chain.
 */
typedef struct RshdpRun RshdpRun;

/**
 * Observation sequence of `len` rows with `dim` columns.
 */
typedef struct RshdpSequence RshdpSequence;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rshdp_version(void);

/**
 * Copy the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to fit). Returns the full message length in bytes, excluding the
 * terminator; an empty message means the last call succeeded.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t rshdp_last_error(char *buf, size_t cap);

/**
 * Build a sequence from `len * dim` row-major values.
 *
 * # Safety
 * `values` must point to `len * dim` readable doubles; `out` must be writable.
 */
enum RshdpStatus rshdp_sequence_new(const double *values,
                                    size_t len,
                                    size_t dim,
                                    struct RshdpSequence **out);

/**
 * # Safety
 * `seq` must be null or a handle from `rshdp_sequence_new` not yet freed.
 */
void rshdp_sequence_free(struct RshdpSequence *seq);

/**
 * Number of rows, or 0 for a null handle.
 *
 * # Safety
 * `seq` must be null or a live sequence handle.
 */
size_t rshdp_sequence_len(const struct RshdpSequence *seq);

/**
 * Configuration holding every default.
 *
 * # Safety
 * `out` must be writable.
 */
enum RshdpStatus rshdp_config_new(struct RshdpConfig **out);

/**
 * # Safety
 * `cfg` must be null or a handle from `rshdp_config_new` not yet freed.
 */
void rshdp_config_free(struct RshdpConfig *cfg);

/**
 * Set one dotted key, e.g. "priors.alpha.shape" to "2".
 *
 * # Safety
 * `cfg` must be a live config handle; `key` and `value` NUL-terminated strings.
 */
enum RshdpStatus rshdp_config_set(struct RshdpConfig *cfg, const char *key, const char *value);

/**
 * Apply a TOML document of dotted keys.
 *
 * # Safety
 * `cfg` must be a live config handle; `text` a NUL-terminated string.
 */
enum RshdpStatus rshdp_config_apply_toml(struct RshdpConfig *cfg, const char *text);

/**
 * Run one chain. Draws come from RNG stream 1 of the configured seed, so the
 * result equals the first chain of the command-line `fit`.
 *
 * # Safety
 * `cfg` and `seq` must be live handles; `out` must be writable.
 */
enum RshdpStatus rshdp_fit(const struct RshdpConfig *cfg,
                           const struct RshdpSequence *seq,
                           struct RshdpRun **out);

/**
 * # Safety
 * `run` must be null or a handle from `rshdp_fit` not yet freed.
 */
void rshdp_run_free(struct RshdpRun *run);

/**
 * Number of timesteps in the modal state sequence, or 0 for a null handle.
 *
 * # Safety
 * `run` must be null or a live run handle.
 */
size_t rshdp_run_len(const struct RshdpRun *run);

/**
 * Number of sweeps in the trace, or 0 for a null handle.
 *
 * # Safety
 * `run` must be null or a live run handle.
 */
size_t rshdp_run_sweeps(const struct RshdpRun *run);

/**
 * Copy the modal state sequence into `states` (capacity `cap`).
 *
 * # Safety
 * `run` must be a live run handle; `states` must point to `cap` writable entries.
 */
enum RshdpStatus rshdp_run_modal_states(const struct RshdpRun *run, size_t *states, size_t cap);

/**
 * Copy per-sweep joint log-likelihoods and occupied-state counts.
 * Either output may be null to skip it.
 *
 * # Safety
 * `run` must be a live run handle; non-null outputs must hold `cap` entries.
 */
enum RshdpStatus rshdp_run_trace(const struct RshdpRun *run,
                                 double *joint_loglik,
                                 size_t *n_states,
                                 size_t cap);

/**
 * Accuracy and support-weighted F1 after optimal label matching.
 *
 * # Safety
 * `predicted` and `truth` must point to `len` readable entries; outputs must be writable.
 */
enum RshdpStatus rshdp_evaluate(const size_t *predicted,
                                const size_t *truth,
                                size_t len,
                                double *accuracy,
                                double *weighted_f1);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSHDP_H */
