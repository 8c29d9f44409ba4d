#ifndef BSSANOVA_H
#define BSSANOVA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum BssStatus {
  BSS_STATUS_OK = 0,
  BSS_STATUS_INVALID_ARGUMENT = 1,
  BSS_STATUS_DOMAIN = 2,
  BSS_STATUS_DATA = 3,
  BSS_STATUS_PARSE = 4,
  BSS_STATUS_NUMERICAL = 5,
  BSS_STATUS_CAPABILITY = 6,
  BSS_STATUS_FORMAT = 7,
  BSS_STATUS_DIVERGENCE = 8,
  BSS_STATUS_IO = 9,
  BSS_STATUS_NULL_POINTER = 10,
  BSS_STATUS_PANIC = 11,
} BssStatus;

/**
 * Selection criterion for [`bss_model_fit`].
 */
typedef enum BssCriterion {
  BSS_CRITERION_BIC = 0,
  BSS_CRITERION_AIC = 1,
} BssCriterion;

/**
 * Precomputed KL basis.
 */
typedef struct BssBasis BssBasis;

/**
 * Fitted regression model.
 */
typedef struct BssModel BssModel;

/**
 * Settings for [`bss_model_fit`]; start from [`bss_fit_options_default`].
 */
typedef struct BssFitOptions {
  enum BssCriterion criterion;
  size_t tolerance;
  size_t max_interaction_order;
  size_t max_stage;
  double a;
  double b;
  double a_tau;
  double b_tau;
  size_t n_draws;
  size_t burn_in;
  uint64_t seed;
} BssFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *bss_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bss_version(void);

/**
 * Compute the first `n_basis` scaled eigenfunctions on a `grid_size` grid.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum BssStatus bss_basis_create(size_t n_basis, size_t grid_size, struct BssBasis **out);

/**
 * Number of functions held by `basis` (0 for null).
 *
 * # Safety
 * `basis` must be null or a live handle.
 */
size_t bss_basis_len(const struct BssBasis *basis);

/**
 * Evaluate function `k` (1-based) at `x`; `x` is clamped to [0, 1].
 *
 * # Safety
 * `basis` must be a live handle and `out` valid for a write.
 */
enum BssStatus bss_basis_eval(const struct BssBasis *basis, size_t k, double x, double *out);

/**
 * Eigenvalue `k` (1-based) of the kernel operator.
 *
 * # Safety
 * `basis` must be a live handle and `out` valid for a write.
 */
enum BssStatus bss_basis_eigenvalue(const struct BssBasis *basis, size_t k, double *out);

/**
 * # Safety
 * `basis` must be null or a handle not yet freed.
 */
void bss_basis_free(struct BssBasis *basis);

/**
 * Defaults matching the engine's `SelectionConfig`.
 */
struct BssFitOptions bss_fit_options_default(void);

/**
 * Forward-select and fit a model on row-major inputs `x` (`n_rows x n_cols`)
 * and targets `z` (`n_rows`).
 *
 * # Safety
 * `x` must hold `n_rows * n_cols` doubles, `z` `n_rows` doubles, `options`
 * must be readable and `out` writable.
 */
enum BssStatus bss_model_fit(const double *x,
                             size_t n_rows,
                             size_t n_cols,
                             const double *z,
                             const struct BssFitOptions *options,
                             struct BssModel **out);

/**
 * Load a model JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum BssStatus bss_model_load(const char *path, struct BssModel **out);

/**
 * Write `model` as JSON.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum BssStatus bss_model_save(const struct BssModel *model, const char *path);

/**
 * Input dimension (0 for null).
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t bss_model_n_inputs(const struct BssModel *model);

/**
 * Number of terms including the intercept (0 for null).
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t bss_model_n_terms(const struct BssModel *model);

/**
 * Posterior-mean prediction for row-major `x`; writes `n_rows` values.
 *
 * # Safety
 * `model` must be a live handle, `x` must hold `n_rows * n_cols` doubles
 * and `out` must have room for `n_rows`.
 */
enum BssStatus bss_model_predict_mean(const struct BssModel *model,
                                      const double *x,
                                      size_t n_rows,
                                      size_t n_cols,
                                      double *out);

/**
 * 95% bounds from `n_curves` evenly spaced retained draws.
 *
 * # Safety
 * As for [`bss_model_predict_mean`], with `lower` and `upper` each holding
 * `n_rows` doubles.
 */
enum BssStatus bss_model_predict_bounds(const struct BssModel *model,
                                        const double *x,
                                        size_t n_rows,
                                        size_t n_cols,
                                        size_t n_curves,
                                        double *lower,
                                        double *upper);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void bss_model_free(struct BssModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BSSANOVA_H */
