#ifndef CONCLAD_H
#define CONCLAD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

#define CONCLAD_OK 0

#define CONCLAD_ERR_NULL_POINTER 1

#define CONCLAD_ERR_INVALID_ARGUMENT 2

#define CONCLAD_ERR_DIMENSION_MISMATCH 3

#define CONCLAD_ERR_EMPTY_INPUT 4

#define CONCLAD_ERR_BUDGET_EXCEEDS_POOL 5

#define CONCLAD_ERR_ORACLE 6

#define CONCLAD_ERR_NUMERIC 7

#define CONCLAD_ERR_IO 8

#define CONCLAD_ERR_BUFFER_TOO_SMALL 9

#define CONCLAD_ERR_PANIC 10

#define CONCLAD_MODE_DEFAULT 0

#define CONCLAD_MODE_NO_ITERS 1

#define CONCLAD_MODE_NO_PSEUDO 2

#define CONCLAD_MODE_SUP_TOP 3

#define CONCLAD_MODE_SUP_RAND 4

#define CONCLAD_MODE_COLLAPSE_ONE_CLASS 5

/**
 * A detector: learned class transforms plus its validation reservoir.
 */
typedef struct ConcladDetector ConcladDetector;

/**
 * An `n x d` float matrix with per-row sample ids and optional labels.
 */
typedef struct ConcladEmbeddings ConcladEmbeddings;

/**
 * A fitted per-class PCA subspace.
 */
typedef struct ConcladSubspace ConcladSubspace;

/**
 * What one task produced, including the model used to score test data.
 */
typedef struct ConcladTaskResult ConcladTaskResult;

/**
 * Tunable detector settings. Obtain defaults from
 * `conclad_detector_options_default` and override fields as needed.
 */
typedef struct ConcladDetectorOptions {
  /**
   * Fraction of above-threshold samples pseudo-labeled per iteration.
   */
  double alpha;
  /**
   * Standard deviations above the validation mean for the threshold.
   */
  double k_std;
  /**
   * Fraction of variance kept by each class subspace.
   */
  double retention;
  /**
   * Total inner iterations per task.
   */
  size_t max_iters;
  /**
   * Share of each task's budget spent at the first iteration.
   */
  double initial_budget_share;
  /**
   * Per-class share of pretrain data held out for threshold calibration.
   */
  double validation_fraction;
} ConcladDetectorOptions;

/**
 * Label callback: write the class of `sample_id` to `*label` and return 0,
 * or return nonzero if the sample is unknown.
 */
typedef int (*ConcladOracleFn)(void *user_data, uint64_t sample_id, int32_t *label);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *conclad_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *conclad_version(void);

/**
 * Copies `n * d` row-major floats into a new embedding set.
 *
 * `ids` (length `n`) may be NULL, giving ids `0..n`. `labels` (length `n`)
 * may be NULL for unlabeled data.
 */
int conclad_embeddings_new(const float *data,
                           size_t n,
                           size_t d,
                           const uint64_t *ids,
                           const int32_t *labels,
                           struct ConcladEmbeddings **out);

void conclad_embeddings_free(struct ConcladEmbeddings *set);

int conclad_embeddings_shape(const struct ConcladEmbeddings *set, size_t *n, size_t *d);

/**
 * Rank-based AUROC of `scores` against `is_novel` (nonzero = novel).
 */
int conclad_auroc(const double *scores, const uint8_t *is_novel, size_t n, double *out);

/**
 * Fits a PCA subspace to every row of `set`.
 */
int conclad_subspace_fit(const struct ConcladEmbeddings *set,
                         int32_t class_id,
                         double retention,
                         struct ConcladSubspace **out);

void conclad_subspace_free(struct ConcladSubspace *subspace);

/**
 * Number of retained components.
 */
int conclad_subspace_rank(const struct ConcladSubspace *subspace, size_t *out);

/**
 * Reconstruction error of one `d`-vector.
 */
int conclad_subspace_fre(const struct ConcladSubspace *subspace,
                         const double *u,
                         size_t d,
                         double *out);

/**
 * Default detector settings.
 */
struct ConcladDetectorOptions conclad_detector_options_default(void);

/**
 * Builds a detector from labeled pretrain data. `options` may be NULL for
 * the defaults.
 */
int conclad_detector_pretrain(const struct ConcladEmbeddings *pretrain,
                              const struct ConcladDetectorOptions *options,
                              uint64_t seed,
                              struct ConcladDetector **out);

void conclad_detector_free(struct ConcladDetector *detector);

/**
 * Current novelty threshold on initial scores.
 */
int conclad_detector_threshold(const struct ConcladDetector *detector, double *out);

/**
 * Number of classes the detector has learned so far.
 */
int conclad_detector_class_count(const struct ConcladDetector *detector, size_t *out);

/**
 * Initial (old-class) novelty score of every row of `set`, written to
 * `out[0..n]`.
 */
int conclad_detector_score(const struct ConcladDetector *detector,
                           const struct ConcladEmbeddings *set,
                           double *out,
                           size_t capacity);

/**
 * Runs one task on `pool` with an oracle given as parallel arrays of sample
 * ids and labels. The detector absorbs the discovered classes; on error it
 * is left unchanged.
 */
int conclad_detector_run_task(struct ConcladDetector *detector,
                              const struct ConcladEmbeddings *pool,
                              const uint64_t *oracle_ids,
                              const int32_t *oracle_labels,
                              size_t oracle_len,
                              size_t budget,
                              int mode,
                              uint64_t seed,
                              struct ConcladTaskResult **out);

/**
 * As `conclad_detector_run_task`, asking `oracle` for each queried label.
 */
int conclad_detector_run_task_with_callback(struct ConcladDetector *detector,
                                            const struct ConcladEmbeddings *pool,
                                            ConcladOracleFn oracle,
                                            void *user_data,
                                            size_t budget,
                                            int mode,
                                            uint64_t seed,
                                            struct ConcladTaskResult **out);

void conclad_task_result_free(struct ConcladTaskResult *result);

/**
 * Oracle calls spent and the threshold of the last iteration.
 */
int conclad_task_result_summary(const struct ConcladTaskResult *result,
                                size_t *queries,
                                double *threshold);

/**
 * Copies the discovered class ids into `out`. `*count` receives the number
 * of ids even when the buffer is too small, so a first call with
 * `capacity = 0` sizes the buffer.
 */
int conclad_task_result_discovered(const struct ConcladTaskResult *result,
                                   int32_t *out,
                                   size_t capacity,
                                   size_t *count);

/**
 * Copies the predicted-novel sample ids, ascending, into `out`. Sizing
 * works as in `conclad_task_result_discovered`.
 */
int conclad_task_result_predicted(const struct ConcladTaskResult *result,
                                  uint64_t *out,
                                  size_t capacity,
                                  size_t *count);

/**
 * Test-time novelty scores of every row of `set` under the model the task
 * finished with, written to `out[0..n]`.
 */
int conclad_task_result_score_test(const struct ConcladTaskResult *result,
                                   const struct ConcladEmbeddings *set,
                                   double *out,
                                   size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONCLAD_H */
