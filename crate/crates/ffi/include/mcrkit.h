#ifndef MCRKIT_H
#define MCRKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  MCRKIT_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  MCRKIT_STATUS_NULL_ARGUMENT = 1,
  /**
   * Invalid arguments or configuration.
   */
  MCRKIT_STATUS_CONFIG_ERROR = 2,
  /**
   * Unreadable or malformed data.
   */
  MCRKIT_STATUS_DATA_ERROR = 3,
  /**
   * Numerical or search failure.
   */
  MCRKIT_STATUS_SOLVER_ERROR = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  MCRKIT_STATUS_PANIC = 5,
  /**
   * Output buffer too small.
   */
  MCRKIT_STATUS_BUFFER_TOO_SMALL = 6,
} McrkitStatus;

/**
 * Which switched-loss estimator a class uses.
 */
typedef enum {
  MCRKIT_ESTIMATOR_SWITCH = 0,
  MCRKIT_ESTIMATOR_DIVIDE = 1,
} McrkitEstimator;

/**
 * How reliance compares switched and original losses.
 */
typedef enum {
  MCRKIT_MODE_RATIO = 0,
  MCRKIT_MODE_DIFFERENCE = 1,
} McrkitMode;

/**
 * Opaque handle to a model class bound to a dataset.
 */
typedef struct McrkitClass McrkitClass;

/**
 * Opaque dataset handle.
 */
typedef struct McrkitDataset McrkitDataset;

/**
 * Bounds on empirical model class reliance at one threshold.
 */
typedef struct {
  double lower;
  double upper;
  double lower_difference;
  double upper_difference;
  bool lower_tight;
  bool upper_tight;
} McrkitBounds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes of the calling thread's last error message, excluding the
 * terminating NUL.
 */
size_t mcrkit_last_error_length(void);

/**
 * Copy the last error message into `buf` (NUL-terminated). Returns
 * `BufferTooSmall` when `cap` is not larger than the message length.
 *
 * # Safety
 * `buf` must point to at least `cap` writable bytes.
 */
McrkitStatus mcrkit_last_error_message(char *buf, size_t cap);

/**
 * Build a dataset from row-major blocks `x1` (`n x p1`) and `x2` (`n x p2`).
 *
 * # Safety
 * Array arguments must hold the stated number of elements; `out` must be writable.
 */
McrkitStatus mcrkit_dataset_new(const double *y,
                                size_t n,
                                const double *x1,
                                size_t p1,
                                const double *x2,
                                size_t p2,
                                McrkitDataset **out);

/**
 * Load a CSV file; `x1_cols` is a comma-separated list of column names.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
McrkitStatus mcrkit_dataset_load_csv(const char *path,
                                     const char *outcome,
                                     const char *x1_cols,
                                     McrkitDataset **out);

/**
 * Number of rows, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t mcrkit_dataset_rows(const McrkitDataset *ds);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void mcrkit_dataset_free(McrkitDataset *ds);

/**
 * Original loss, switched loss and reliance of the linear model
 * `intercept + beta' (x1, x2)` under squared error.
 *
 * # Safety
 * `beta` must hold `p1 + p2` values; output pointers must be writable.
 */
McrkitStatus mcrkit_linear_model_reliance(const McrkitDataset *ds,
                                          const double *beta,
                                          size_t beta_len,
                                          double intercept,
                                          McrkitEstimator est,
                                          McrkitMode mode,
                                          double *out_e_orig,
                                          double *out_e_switch,
                                          double *out_reliance);

/**
 * Linear class bound to `ds`. With `weights` null the class is
 * unconstrained; otherwise slopes satisfy `sum_j weights[j] beta_j^2 <= radius`.
 *
 * # Safety
 * `weights` must be null or hold `p1 + p2` values; `out` must be writable.
 */
McrkitStatus mcrkit_linear_class_new(const McrkitDataset *ds,
                                     bool intercept,
                                     const double *weights,
                                     double radius,
                                     McrkitEstimator est,
                                     McrkitClass **out);

/**
 * RBF kernel class with dictionary and offset taken from `train`, norm
 * bound `r_k`, bound to the rows of `analysis`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
McrkitStatus mcrkit_rkhs_class_new(const McrkitDataset *train,
                                   const McrkitDataset *analysis,
                                   double sigma,
                                   double r_k,
                                   McrkitEstimator est,
                                   McrkitClass **out);

/**
 * Number of parameters of class members, or 0 for a null handle.
 *
 * # Safety
 * `class` must be null or a live class handle.
 */
size_t mcrkit_class_param_dim(const McrkitClass *class_);

/**
 * Global minimizer of `xi_orig e_orig + xi_switch e_switch` over the class.
 * `params` receives `mcrkit_class_param_dim` values.
 *
 * # Safety
 * `params` must hold `cap` writable values; other outputs must be writable.
 */
McrkitStatus mcrkit_class_minimize(const McrkitClass *class_,
                                   double xi_orig,
                                   double xi_switch,
                                   double *params,
                                   size_t cap,
                                   double *out_e_orig,
                                   double *out_e_switch);

/**
 * Bounds on empirical reliance over class members with `e_orig <= eps_abs`.
 *
 * # Safety
 * `class` must be a live handle; `out` must be writable.
 */
McrkitStatus mcrkit_class_search(const McrkitClass *class_, double eps_abs, McrkitBounds *out);

/**
 * # Safety
 * `class` must be null or a handle not yet freed.
 */
void mcrkit_class_free(McrkitClass *class_);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mcrkit_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MCRKIT_H */
