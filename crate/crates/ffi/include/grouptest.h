#ifndef GROUPTEST_H
#define GROUPTEST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GtStatus {
  GT_STATUS_OK = 0,
  GT_STATUS_NULL_POINTER = 1,
  GT_STATUS_EMPTY_POPULATION = 2,
  GT_STATUS_INVALID_PROBABILITY = 3,
  GT_STATUS_INVALID_PARAMETER = 4,
  GT_STATUS_RATIO_VIOLATED = 5,
  GT_STATUS_DEGENERATE_SET = 6,
  GT_STATUS_DEGENERATE_PARTITION = 7,
  GT_STATUS_ORACLE_INCONSISTENT = 8,
  GT_STATUS_BUDGET_EXHAUSTED = 9,
  GT_STATUS_TOO_LARGE = 10,
  GT_STATUS_IO = 11,
  GT_STATUS_LENGTH_MISMATCH = 12,
  GT_STATUS_PANIC = 13,
} GtStatus;

typedef enum GtStrategy {
  GT_STRATEGY_EXPLICIT_CONFIRM = 0,
  GT_STRATEGY_MERGED_PRUNING = 1,
  GT_STRATEGY_LAMINAR = 2,
} GtStrategy;

/**
 * Opaque search plan handle (truncation, partition and trees).
 */
typedef struct GtPlan GtPlan;

/**
 * Opaque population handle.
 */
typedef struct GtPopulation GtPopulation;

/**
 * Opaque result of one search run.
 */
typedef struct GtRun GtRun;

typedef struct GtPopulationStats {
  double mu;
  double entropy_bits;
} GtPopulationStats;

/**
 * Settings for [`gt_plan_new`].
 */
typedef struct GtPlanConfig {
  /**
   * Truncation threshold, used when `target_error <= 0`.
   */
  double theta;
  /**
   * If positive, derive theta from this target truncation error instead.
   */
  double target_error;
  /**
   * Ratio bound; values `<= 0` select the optimal gamma.
   */
  double gamma;
  /**
   * Set fullness threshold in (0, 1/2].
   */
  double fullness;
  /**
   * Use Huffman instead of Shannon-Fano depths.
   */
  bool huffman;
} GtPlanConfig;

typedef struct GtBounds {
  double entropy_bits;
  double mu;
  double theta;
  double t_bd;
  double variance_proxy;
  double length_cap;
  double psi;
  double t_nec;
  double success_lb;
  double laminar_bd;
  double capacity_ratio;
} GtBounds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *gt_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gt_version(void);

/**
 * Create a population from `len` probabilities.
 *
 * # Safety
 * `probs` must point to `len` doubles; `out` must be valid for writes.
 */
enum GtStatus gt_population_new(const double *probs, size_t len, struct GtPopulation **out);

/**
 * Draw `p_i = min(mu w_i, 1)` with `w` from a symmetric Dirichlet.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum GtStatus gt_population_dirichlet(size_t n,
                                      double mu,
                                      double alpha,
                                      uint64_t seed,
                                      struct GtPopulation **out);

/**
 * # Safety
 * `pop` must be null or a handle from this library not yet freed.
 */
void gt_population_free(struct GtPopulation *pop);

/**
 * Number of items, or 0 for a null handle.
 *
 * # Safety
 * `pop` must be null or a live handle.
 */
size_t gt_population_len(const struct GtPopulation *pop);

/**
 * # Safety
 * `pop` must be a live handle; `out` must be valid for writes.
 */
enum GtStatus gt_population_stats(const struct GtPopulation *pop, struct GtPopulationStats *out);

/**
 * Sample a defectivity vector into `bits` (one byte per item, 0 or 1).
 *
 * # Safety
 * `pop` must be a live handle; `bits` must hold `len` writable bytes.
 */
enum GtStatus gt_population_sample_defectivity(const struct GtPopulation *pop,
                                               uint64_t seed,
                                               uint8_t *bits,
                                               size_t len);

/**
 * Truncation threshold for a target error in (0, 1).
 *
 * # Safety
 * `pop` must be a live handle; `out` must be valid for writes.
 */
enum GtStatus gt_compute_theta(double target_error, const struct GtPopulation *pop, double *out);

/**
 * Default settings: theta 0.001, optimal gamma, fullness 1/2, Shannon-Fano.
 */
struct GtPlanConfig gt_plan_config_default(void);

/**
 * Truncate, partition and build the search trees for `pop`.
 *
 * # Safety
 * `pop` and `config` must be valid; `out` must be valid for writes.
 */
enum GtStatus gt_plan_new(const struct GtPopulation *pop,
                          const struct GtPlanConfig *config,
                          struct GtPlan **out);

/**
 * # Safety
 * `plan` must be null or a live handle.
 */
void gt_plan_free(struct GtPlan *plan);

/**
 * Number of search sets, or 0 for a null handle.
 *
 * # Safety
 * `plan` must be null or a live handle.
 */
size_t gt_plan_set_count(const struct GtPlan *plan);

/**
 * Number of items kept after truncation, or 0 for a null handle.
 *
 * # Safety
 * `plan` must be null or a live handle.
 */
size_t gt_plan_retained(const struct GtPlan *plan);

/**
 * Theta and gamma actually used by the plan.
 *
 * # Safety
 * `plan` must be live; `theta` and `gamma` must be valid for writes.
 */
enum GtStatus gt_plan_parameters(const struct GtPlan *plan, double *theta, double *gamma);

/**
 * Bernstein-based bounds for the plan built from `pop`.
 *
 * # Safety
 * `plan` must have been built from `pop`; `out` must be valid for writes.
 */
enum GtStatus gt_plan_bounds(const struct GtPlan *plan,
                             const struct GtPopulation *pop,
                             struct GtBounds *out);

/**
 * Search against the defectivity vector `truth` (one byte per item,
 * non-zero meaning defective). `budget < 0` means unlimited; exceeding a
 * budget returns `BUDGET_EXHAUSTED`.
 *
 * # Safety
 * `plan` must be live; `truth` must hold `len` bytes; `out` must be valid for writes.
 */
enum GtStatus gt_plan_run(const struct GtPlan *plan,
                          const uint8_t *truth,
                          size_t len,
                          enum GtStrategy strategy,
                          int64_t budget,
                          struct GtRun **out);

/**
 * # Safety
 * `run` must be null or a live handle.
 */
void gt_run_free(struct GtRun *run);

/**
 * # Safety
 * `run` must be null or a live handle.
 */
uint64_t gt_run_total_tests(const struct GtRun *run);

/**
 * Whether the run recovered the defectivity vector exactly.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
bool gt_run_success(const struct GtRun *run);

/**
 * # Safety
 * `run` must be null or a live handle.
 */
size_t gt_run_found_len(const struct GtRun *run);

/**
 * Copy up to `cap` found item indices (ascending) into `buf`; returns the
 * number written.
 *
 * # Safety
 * `run` must be live; `buf` must hold `cap` writable `size_t`s.
 */
size_t gt_run_found_copy(const struct GtRun *run, size_t *buf, size_t cap);

/**
 * Coefficient of mu under the capped-probability fullness variant.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum GtStatus gt_coefficient_f(double fullness, double cap, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GROUPTEST_H */
