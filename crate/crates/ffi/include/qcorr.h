#ifndef QCORR_H
#define QCORR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QcorrStatus {
  QCORR_STATUS_OK = 0,
  QCORR_STATUS_NULL_POINTER = 1,
  QCORR_STATUS_INVALID_UTF8 = 2,
  QCORR_STATUS_CONFIG = 3,
  QCORR_STATUS_SIMULATION = 4,
  QCORR_STATUS_OUT_OF_RANGE = 5,
  QCORR_STATUS_PANIC = 6,
} QcorrStatus;

typedef enum QcorrRegime {
  QCORR_REGIME_UNCERTAINTY_DOMINATED = 0,
  QCORR_REGIME_WAVELIKE = 1,
  QCORR_REGIME_SEMICLASSICAL = 2,
  QCORR_REGIME_INDETERMINATE = 3,
} QcorrRegime;

/**
 * Mutable simulation parameters, validated when a run starts.
 */
typedef struct QcorrConfig QcorrConfig;

/**
 * Finished ensemble run.
 */
typedef struct QcorrEnsemble QcorrEnsemble;

/**
 * A left-hand side is meaningful only when its `has_` flag is set.
 */
typedef struct QcorrRegimeReport {
  double uncertainty;
  bool has_uncertainty;
  double wavelike;
  bool has_wavelike;
  enum QcorrRegime label;
} QcorrRegimeReport;

/**
 * One measurement: sampled quantum point and the classical reference at `t`.
 */
typedef struct QcorrSample {
  double t;
  double x_quantum;
  double p_quantum;
  double x_classical;
  double p_classical;
} QcorrSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *qcorr_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *qcorr_last_error(void);

/**
 * New config holding the defaults.
 */
struct QcorrConfig *qcorr_config_new(void);

/**
 * Parses `key = value` lines (the config-file format) into a new handle.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum QcorrStatus qcorr_config_parse(const char *text, struct QcorrConfig **out);

/**
 * Sets one key, with the same names and syntax as the config file.
 *
 * # Safety
 * `config` must come from this library; `key` and `value` must be
 * NUL-terminated strings.
 */
enum QcorrStatus qcorr_config_set(struct QcorrConfig *config, const char *key, const char *value);

/**
 * Checks every field without running anything.
 *
 * # Safety
 * `config` must come from this library.
 */
enum QcorrStatus qcorr_config_validate(const struct QcorrConfig *config);

/**
 * # Safety
 * `config` must come from this library and not be used afterwards. NULL is
 * ignored.
 */
void qcorr_config_free(struct QcorrConfig *config);

/**
 * Both regime left-hand sides and the label for the config's parameters.
 *
 * # Safety
 * `config` must come from this library; `out` must be writable.
 */
enum QcorrStatus qcorr_regimes(const struct QcorrConfig *config, struct QcorrRegimeReport *out);

/**
 * Runs the configured ensemble to completion. Blocks the calling thread.
 *
 * # Safety
 * `config` must come from this library; `out` must be writable.
 */
enum QcorrStatus qcorr_run_ensemble(const struct QcorrConfig *config, struct QcorrEnsemble **out);

/**
 * # Safety
 * `ensemble` must come from this library and not be used afterwards. NULL
 * is ignored.
 */
void qcorr_ensemble_free(struct QcorrEnsemble *ensemble);

/**
 * Number of member runs, or 0 for NULL.
 *
 * # Safety
 * `ensemble` must come from this library or be NULL.
 */
size_t qcorr_ensemble_run_count(const struct QcorrEnsemble *ensemble);

/**
 * Mean divergence time; `censored` is set when some run never crossed and
 * was counted at `t_max`.
 *
 * # Safety
 * `ensemble` must come from this library; both outputs must be writable.
 */
enum QcorrStatus qcorr_ensemble_divergence(const struct QcorrEnsemble *ensemble,
                                           double *time,
                                           bool *censored);

/**
 * Number of measurements recorded for member `run`.
 *
 * # Safety
 * `ensemble` must come from this library; `count` must be writable.
 */
enum QcorrStatus qcorr_ensemble_sample_count(const struct QcorrEnsemble *ensemble,
                                             size_t run,
                                             size_t *count);

/**
 * Copies up to `capacity` samples of member `run` into `buf` and stores the
 * number written in `written`.
 *
 * # Safety
 * `ensemble` must come from this library; `buf` must hold `capacity`
 * elements; `written` must be writable.
 */
enum QcorrStatus qcorr_ensemble_samples(const struct QcorrEnsemble *ensemble,
                                        size_t run,
                                        struct QcorrSample *buf,
                                        size_t capacity,
                                        size_t *written);

/**
 * Crossing time of member `run`; `diverged` is false (and `time` NaN) if it
 * never crossed the threshold.
 *
 * # Safety
 * `ensemble` must come from this library; both outputs must be writable.
 */
enum QcorrStatus qcorr_run_divergence_time(const struct QcorrEnsemble *ensemble,
                                           size_t run,
                                           double *time,
                                           bool *diverged);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QCORR_H */
