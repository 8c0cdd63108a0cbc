#ifndef ONLAD_H
#define ONLAD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OnladActivation {
  ONLAD_ACTIVATION_IDENTITY = 0,
  ONLAD_ACTIVATION_SIGMOID = 1,
} OnladActivation;

typedef enum OnladStatus {
  ONLAD_STATUS_OK = 0,
  ONLAD_STATUS_NULL_POINTER = 1,
  ONLAD_STATUS_INVALID_ARGUMENT = 2,
  ONLAD_STATUS_DIMENSION_MISMATCH = 3,
  ONLAD_STATUS_NOT_INITIALIZED = 4,
  ONLAD_STATUS_SINGULAR_MATRIX = 5,
  ONLAD_STATUS_INIT_TOO_SMALL = 6,
  ONLAD_STATUS_INDEX_OVERFLOW = 7,
  ONLAD_STATUS_IO = 8,
  ONLAD_STATUS_PARSE = 9,
  ONLAD_STATUS_SINGLE_CLASS = 10,
  ONLAD_STATUS_PANIC = 11,
} OnladStatus;

/**
 * Opaque fixed-point core handle.
 */
typedef struct OnladCore OnladCore;

/**
 * Opaque detector handle.
 */
typedef struct OnladDetector OnladDetector;

/**
 * Detector hyperparameters. Use [`onlad_detector_config_default`] and
 * override fields.
 */
typedef struct OnladDetectorConfig {
  size_t hidden;
  enum OnladActivation activation;
  double init_low;
  double init_high;
  double ff;
  double epsilon;
  /**
   * Anomaly threshold; `INFINITY` disables flagging.
   */
  double theta;
} OnladDetectorConfig;

typedef struct OnladStepResult {
  /**
   * Score before training; NaN when the stability guard skipped the sample.
   */
  double score;
  bool is_anomaly;
  bool trained;
} OnladStepResult;

typedef struct OnladCostReport {
  uint64_t s_parameter;
  uint64_t s_input;
  uint64_t s_train;
  uint64_t s_predict;
  uint64_t s_onlad;
  uint64_t i_train;
  uint64_t i_predict;
  uint64_t i_batch_k;
  uint64_t i_batch_1;
} OnladCostReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *onlad_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *onlad_version(void);

struct OnladDetectorConfig onlad_detector_config_default(void);

/**
 * Creates a detector for `n` input features.
 *
 * # Safety
 * `config` must be NULL or point to a valid config; `out` must be a valid
 * pointer to write the handle to.
 */
enum OnladStatus onlad_detector_new(size_t n,
                                    const struct OnladDetectorConfig *config,
                                    uint64_t seed,
                                    struct OnladDetector **out);

/**
 * # Safety
 * `det` must be NULL or a handle from this library that has not been freed.
 */
void onlad_detector_free(struct OnladDetector *det);

/**
 * Batch-initialises on `rows × n` row-major normal samples.
 *
 * # Safety
 * `data` must point to `rows * cols` readable doubles.
 */
enum OnladStatus onlad_detector_init(struct OnladDetector *det,
                                     const double *data,
                                     size_t rows,
                                     size_t cols);

/**
 * Anomaly score of one sample without training.
 *
 * # Safety
 * `x` must point to `len` readable doubles and `score` must be writable.
 */
enum OnladStatus onlad_detector_score(const struct OnladDetector *det,
                                      const double *x,
                                      size_t len,
                                      double *score);

/**
 * Scores `x` and then trains on it with the detector's forgetting factor.
 *
 * # Safety
 * `x` must point to `len` readable doubles and `result` must be writable.
 */
enum OnladStatus onlad_detector_train_step(struct OnladDetector *det,
                                           const double *x,
                                           size_t len,
                                           struct OnladStepResult *result);

/**
 * # Safety
 * `det` must be a valid handle.
 */
enum OnladStatus onlad_detector_set_theta(struct OnladDetector *det, double theta);

/**
 * # Safety
 * `det` must be a valid handle.
 */
enum OnladStatus onlad_detector_set_ff(struct OnladDetector *det, double ff);

/**
 * Writes the model to a text file.
 *
 * # Safety
 * `det` must be a valid handle and `path` a NUL-terminated UTF-8 string.
 */
enum OnladStatus onlad_detector_save(const struct OnladDetector *det, const char *path);

/**
 * Loads a model written by [`onlad_detector_save`]; `config` supplies ff,
 * epsilon and theta (NULL for defaults).
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string, `config` NULL or valid, and
 * `out` writable.
 */
enum OnladStatus onlad_detector_load(const char *path,
                                     const struct OnladDetectorConfig *config,
                                     struct OnladDetector **out);

/**
 * Creates a fixed-point core with `n` inputs and `hidden` hidden nodes.
 *
 * # Safety
 * `out` must be writable.
 */
enum OnladStatus onlad_core_new(size_t n, size_t hidden, struct OnladCore **out);

/**
 * # Safety
 * `core` must be NULL or a handle from this library that has not been freed.
 */
void onlad_core_free(struct OnladCore *core);

/**
 * Processes one 64-bit input packet. When the packet produces an output
 * packet, `*has_output` is set and `*output` receives its 32-bit word.
 *
 * # Safety
 * `core` must be a valid handle; `output` and `has_output` writable.
 */
enum OnladStatus onlad_core_step(struct OnladCore *core,
                                 uint64_t packet,
                                 uint32_t *output,
                                 bool *has_output);

/**
 * # Safety
 * `out` must be writable.
 */
enum OnladStatus onlad_cost_report(size_t n,
                                   size_t hidden,
                                   size_t m,
                                   size_t k,
                                   struct OnladCostReport *out);

/**
 * ROC AUC with nonzero `labels` marking anomalies.
 *
 * # Safety
 * `scores` and `labels` must point to `len` readable elements; `out` writable.
 */
enum OnladStatus onlad_auc(const double *scores, const uint8_t *labels, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ONLAD_H */
