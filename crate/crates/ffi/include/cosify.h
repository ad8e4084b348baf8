#ifndef COSIFY_H
#define COSIFY_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum CosifyStatus {
  COSIFY_STATUS_OK = 0,
  COSIFY_STATUS_NULL_POINTER = 1,
  /**
   * A parameter violates a documented precondition.
   */
  COSIFY_STATUS_USAGE = 2,
  /**
   * A size or depth limit was exceeded.
   */
  COSIFY_STATUS_RESOURCE = 3,
  /**
   * An internal invariant failed; the result is not trustworthy.
   */
  COSIFY_STATUS_INVARIANT = 4,
  COSIFY_STATUS_IO = 5,
  COSIFY_STATUS_CONFIG = 6,
  COSIFY_STATUS_PANIC = 7,
  /**
   * The search hit its depth cap before producing a value.
   */
  COSIFY_STATUS_TRUNCATED = 8,
} CosifyStatus;

/**
 * Noisy automaton over a finite abelian group with error rate epsilon.
 */
typedef struct CosifyModel CosifyModel;

/**
 * Survival curve of oriented percolation from the origin.
 */
typedef struct CosifySurvival CosifySurvival;

/**
 * Monte Carlo estimate of the coupling meeting probability.
 */
typedef struct CosifyMeeting {
  double estimate;
  double ci_lo;
  double ci_hi;
  double exact_lower_bound;
  uint64_t replicas;
  uint64_t successes;
  uint64_t target_hits;
  uint64_t implication_violations;
} CosifyMeeting;

/**
 * A stationary value produced by coupling from the past.
 */
typedef struct CosifySample {
  /**
   * Symbol index in mixed radix over the group factors.
   */
  uint32_t value;
  /**
   * Greatest level from which no open path reaches the site.
   */
  int64_t horizon;
} CosifySample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static nul-terminated string.
 */
const char *cosify_version(void);

/**
 * Copies the last error message of this thread into `buf` (truncated and
 * nul-terminated) and returns its full length, or 0 if there is none.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null with `len == 0`.
 */
size_t cosify_last_error(char *buf, size_t len);

/**
 * Creates a model over the group `Z/f_0 x ... x Z/f_{n-1}`.
 *
 * # Safety
 * `factors` must point to `n_factors` values; `out` must be writable.
 */
enum CosifyStatus cosify_model_new(const uint32_t *factors,
                                   size_t n_factors,
                                   double epsilon,
                                   struct CosifyModel **out);

/**
 * # Safety
 * `model` must come from [`cosify_model_new`] and not be used afterwards.
 */
void cosify_model_free(struct CosifyModel *model);

/**
 * Normalized error rate `epsilon |A| / (|A| - 1)`.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum CosifyStatus cosify_model_epsilon_tilde(const struct CosifyModel *model, double *out);

/**
 * Exact lower bound on the probability that the coupling started at `n0`
 * meets on `[-k, k]` by time 0.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum CosifyStatus cosify_meeting_lower_bound(const struct CosifyModel *model,
                                             int64_t k,
                                             int64_t n0,
                                             double *out);

/**
 * Monte Carlo estimate of the meeting probability over `replicas` seeded
 * noise fields.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum CosifyStatus cosify_meeting_estimate(const struct CosifyModel *model,
                                          int64_t k,
                                          int64_t n0,
                                          uint64_t replicas,
                                          uint64_t seed,
                                          struct CosifyMeeting *out);

/**
 * Stationary value at site `(n, i)` of the noise field with `seed`, by
 * coupling from the past. Returns `Truncated` if no horizon is found
 * within `depth_cap` levels.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum CosifyStatus cosify_cftp_sample(const struct CosifyModel *model,
                                     int64_t n,
                                     int64_t i,
                                     uint64_t seed,
                                     uint64_t depth_cap,
                                     struct CosifySample *out);

/**
 * Survival of oriented site percolation with open probability `p` from
 * the origin on a torus of `width`, over `replicas` fields.
 *
 * # Safety
 * `out` must be writable.
 */
enum CosifyStatus cosify_survival_run(double p,
                                      uint64_t depth,
                                      size_t width,
                                      uint64_t replicas,
                                      uint64_t seed,
                                      bool backward,
                                      struct CosifySurvival **out);

/**
 * Fraction of replicas whose open path spans `d` levels, `d <= depth`.
 *
 * # Safety
 * `survival` must be a live handle; `out` must be writable.
 */
enum CosifyStatus cosify_survival_at(const struct CosifySurvival *survival,
                                     uint64_t d,
                                     double *out);

/**
 * 95% Wilson interval of the survival probability at full depth.
 *
 * # Safety
 * `survival` must be a live handle; `lo` and `hi` must be writable.
 */
enum CosifyStatus cosify_survival_interval(const struct CosifySurvival *survival,
                                           double *lo,
                                           double *hi);

/**
 * # Safety
 * `survival` must come from [`cosify_survival_run`] and not be used afterwards.
 */
void cosify_survival_free(struct CosifySurvival *survival);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COSIFY_H */
