/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef ROBANDIT_H
#define ROBANDIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  RB_STATUS_OK = 0,
  RB_STATUS_INVALID_INPUT = 1,
  RB_STATUS_FAILS_TO_CONVERGE = 2,
  RB_STATUS_OUT_OF_SPAN = 3,
  RB_STATUS_SINGULAR_GRAM = 4,
  RB_STATUS_TOO_MANY_REMOVED = 5,
  RB_STATUS_INVALID_NU = 6,
  RB_STATUS_CONFIG_INVALID = 7,
  RB_STATUS_CHECKPOINT_OUT_OF_RANGE = 8,
  RB_STATUS_IO = 9,
  RB_STATUS_NULL_POINTER = 10,
  RB_STATUS_PANIC = 11,
} RbStatus;

/**
 * Client model selector for coreset construction and thresholds.
 */
typedef enum {
  RB_CLIENT_MODEL_M1 = 1,
  RB_CLIENT_MODEL_M2 = 2,
} RbClientModel;

/**
 * Opaque finite action set.
 */
typedef struct RbActionSet RbActionSet;

/**
 * Opaque approximate G-optimal design over an action set.
 */
typedef struct RbDesign RbDesign;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null if there was none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *rb_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rb_version(void);

/**
 * Builds an action set from `count` rows of `dim` values.
 *
 * # Safety
 * `data` points to `count * dim` doubles; `out` is a valid pointer.
 */
RbStatus rb_action_set_new(const double *data, size_t count, size_t dim, RbActionSet **out);

/**
 * # Safety
 * `set` is null or a handle from [`rb_action_set_new`] not yet freed.
 */
void rb_action_set_free(RbActionSet *set);

/**
 * Number of actions, or 0 for a null handle.
 *
 * # Safety
 * `set` is null or a live handle.
 */
size_t rb_action_set_len(const RbActionSet *set);

/**
 * Ambient dimension, or 0 for a null handle.
 *
 * # Safety
 * `set` is null or a live handle.
 */
size_t rb_action_set_dim(const RbActionSet *set);

/**
 * Computes an approximate G-optimal design over `set`.
 *
 * # Safety
 * `set` is a live handle; `out` is a valid pointer.
 */
RbStatus rb_design_compute(const RbActionSet *set, double tol, size_t max_iters, RbDesign **out);

/**
 * # Safety
 * `design` is null or a handle from [`rb_design_compute`] not yet freed.
 */
void rb_design_free(RbDesign *design);

/**
 * `max_a ||a||^2_{M(pi)^+}`, or NaN for a null handle.
 *
 * # Safety
 * `design` is null or a live handle.
 */
double rb_design_gvalue(const RbDesign *design);

/**
 * Rank of the span of the actions, or 0 for a null handle.
 *
 * # Safety
 * `design` is null or a live handle.
 */
size_t rb_design_effective_dim(const RbDesign *design);

/**
 * Number of actions with positive weight, or 0 for a null handle.
 *
 * # Safety
 * `design` is null or a live handle.
 */
size_t rb_design_support_len(const RbDesign *design);

/**
 * Writes the weight of every action (zero off the support) into `out[0..len]`;
 * `len` must equal the number of actions.
 *
 * # Safety
 * `design` is a live handle; `out` points to `len` writable doubles.
 */
RbStatus rb_design_weights(const RbDesign *design, double *out, size_t len);

/**
 * Rounds the design into per-action play counts for round budget `budget`
 * (zero off the support); `len` must equal the number of actions. `nu` is only
 * read under M2.
 *
 * # Safety
 * `design` is a live handle; `out` points to `len` writable integers.
 */
RbStatus rb_design_coreset_counts(const RbDesign *design,
                                  uint64_t budget,
                                  RbClientModel model,
                                  double nu,
                                  uint64_t *out,
                                  size_t len);

/**
 * `<a, M^+ a>` for a `dim`-vector `a` and a row-major `dim x dim` Gram matrix.
 *
 * # Safety
 * `a` holds `dim` doubles, `gram` holds `dim * dim`, `out` is valid.
 */
RbStatus rb_weighted_norm_sq(const double *a, const double *gram, size_t dim, double *out);

/**
 * Spectral filter over `n` points of dimension `p` with threshold `lambda`.
 * Writes the mean estimate to `out_mean[0..p]` and the number of removed
 * points to `out_removed` (may be null).
 *
 * # Safety
 * `points` holds `n * p` doubles, `out_mean` has room for `p`.
 */
RbStatus rb_filter(const double *points,
                   size_t n,
                   size_t p,
                   double lambda,
                   uint64_t seed,
                   double *out_mean,
                   size_t *out_removed);

/**
 * Robust least squares with the default threshold rule, assuming corruption
 * rate `alpha`. `actions` is `n x d` row-major; the estimate goes to
 * `out_theta[0..d]` and the removal count to `out_removed` (may be null).
 *
 * # Safety
 * Buffers hold the stated number of elements.
 */
RbStatus rb_robust_least_squares(const double *actions,
                                 const double *rewards,
                                 size_t n,
                                 size_t d,
                                 double alpha,
                                 uint64_t seed,
                                 double *out_theta,
                                 size_t *out_removed);

/**
 * Ordinary least squares restricted to the span of the actions.
 *
 * # Safety
 * Buffers hold the stated number of elements.
 */
RbStatus rb_vanilla_least_squares(const double *actions,
                                  const double *rewards,
                                  size_t n,
                                  size_t d,
                                  double *out_theta);

/**
 * Inverse CDF of the centred Laplace law with the given scale, for `u` in (0, 1).
 * Returns NaN outside that range.
 */
double rb_laplace_quantile(double u, double scale);

/**
 * M1 elimination threshold at batch scale `qi`; `epsilon <= 0` disables privacy.
 *
 * # Safety
 * `out` is a valid pointer.
 */
RbStatus rb_threshold_m1(double qi,
                         size_t d,
                         double c_gamma,
                         double delta,
                         double alpha,
                         double epsilon,
                         double *out);

/**
 * M2 elimination threshold for round budget `m` and support size `k`;
 * `epsilon <= 0` disables privacy.
 *
 * # Safety
 * `out` is a valid pointer.
 */
RbStatus rb_threshold_m2(double m,
                         size_t d,
                         size_t k,
                         double nu,
                         double c_gamma,
                         double delta,
                         double alpha,
                         double epsilon,
                         double *out);

/**
 * Runs a sweep described by a JSON configuration and writes its output
 * directory. `workers == 0` uses one thread per core. On success
 * `out_summary_csv` (may be null) receives the summary table as CSV, to be
 * released with [`rb_string_free`]. Relative instance paths resolve against the
 * working directory.
 *
 * # Safety
 * `config_json` and `out_dir` are NUL-terminated UTF-8 strings.
 */
RbStatus rb_run_sweep_json(const char *config_json,
                           const char *out_dir,
                           size_t workers,
                           bool resume,
                           char **out_summary_csv);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` is null or a string produced by this library and not yet freed.
 */
void rb_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROBANDIT_H */
